import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gradedmult.czo import weak_l1_quasinorm
from gradedmult.group import QuasiNorm, dilate_point, group_inverse, group_product, load_descriptor
from gradedmult.lattice import (
    Grid,
    GridFunction,
    convolve,
    fourier_transform,
    inverse_fourier_transform,
    weighted_lp_norm,
    young_ratio,
)
from gradedmult.sobolev import DyadicPartition, dilation_bound, hs_norm
from gradedmult.symbols import KernelSymbol

NAMES = ["heisenberg-1", "engel", "abelian-12"]
GROUPS = {name: load_descriptor(name) for name in NAMES}
SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
coord = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
radius = st.floats(0.125, 8.0)


def _point(group):
    return arrays(np.float64, group.n, elements=coord)


@st.composite
def group_and_points(draw, count):
    group = GROUPS[draw(st.sampled_from(NAMES))]
    return group, [draw(_point(group)) for _ in range(count)]


@SETTINGS
@given(group_and_points(3))
def test_product_associative(gp):
    g, (x, y, z) = gp
    a = group_product(group_product(x, y, g), z, g)
    b = group_product(x, group_product(y, z, g), g)
    assert np.allclose(a, b, atol=1e-9 * (1 + np.max(np.abs(a))))


@SETTINGS
@given(group_and_points(1))
def test_inverse_is_negation(gp):
    g, (x,) = gp
    assert np.allclose(group_product(x, group_inverse(x, g), g), 0.0, atol=1e-12)


@SETTINGS
@given(group_and_points(2), radius)
def test_dilation_is_automorphism(gp, r):
    g, (x, y) = gp
    lhs = dilate_point(r, group_product(x, y, g), g)
    rhs = group_product(dilate_point(r, x, g), dilate_point(r, y, g), g)
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-9)


@SETTINGS
@given(group_and_points(1), radius)
def test_quasinorm_homogeneous_and_symmetric(gp, r):
    g, (x,) = gp
    q = QuasiNorm(g)
    n = float(q(x))
    assert float(q(dilate_point(r, x, g))) == pytest.approx(r * n, rel=1e-9, abs=1e-12)
    assert float(q(-x)) == pytest.approx(n, rel=1e-12, abs=1e-15)


@SETTINGS
@given(st.floats(-60, 60), st.sampled_from([0.5, 1.0, 1.5, 1.75]))
def test_partition_of_unity(log_lam, c_o):
    P = DyadicPartition(c_o=c_o)
    assert P.partition_defect(np.array([2.0 ** log_lam])) < 1e-12


GRID = Grid(load_descriptor("abelian-iso-2"), (4.0, 4.0), (16, 16))
field = arrays(np.float64, GRID.shape, elements=st.floats(-1, 1, allow_nan=False, allow_infinity=False))


@SETTINGS
@given(field)
def test_transform_roundtrip(v):
    f = GridFunction(v, GRID)
    back = inverse_fourier_transform(fourier_transform(f), GRID)
    assert np.allclose(back.values, v, atol=1e-12)


@SETTINGS
@given(field, field, st.floats(-2, 2))
def test_convolution_bilinear(u, v, c):
    f, g = GridFunction(u, GRID), GridFunction(v, GRID)
    lhs = convolve(f * c + g, g)
    rhs = convolve(f, g) * c + convolve(g, g)
    assert np.allclose(lhs.values, rhs.values, atol=1e-10)


@SETTINGS
@given(field, field)
def test_young_l1_contraction(u, v):
    f, g = GridFunction(u, GRID), GridFunction(v, GRID)
    if weighted_lp_norm(f, 1) == 0 or weighted_lp_norm(g, 1) == 0:
        return
    assert young_ratio(f, g, 1, 1, 1) <= 1 + 1e-10


@SETTINGS
@given(field)
def test_weak_quasinorm_below_l1(v):
    f = GridFunction(v, GRID)
    assert weak_l1_quasinorm(f) <= weighted_lp_norm(f, 1) * (1 + 1e-12) + 1e-15


@SETTINGS
@given(field, st.floats(0.25, 4.0), st.sampled_from([0.0, 0.5, 1.0, 2.0]))
def test_dilation_bound_holds(v, r, s):
    sig = KernelSymbol(GridFunction(v, GRID))
    if hs_norm(sig, s) == 0:
        return
    d = dilation_bound(sig, r, s)
    assert d["margin"] >= -1e-10 * max(1.0, d["rhs"])
