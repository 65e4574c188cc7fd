import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from gradedmult.czo import riesz_symbol
from gradedmult.group import GradedGroup, QuasiNorm, hom_degree, multi_indices, quasinorm_constants_probe
from gradedmult.lattice import Grid, GridFunction, convolution_matrix, delta, sample, weighted_lp_norm
from gradedmult.rockland import RocklandSpec, build_rockland
from gradedmult.sobolev import (
    DyadicPartition,
    LogBump,
    algebra_margin,
    build_dyadic_partition,
    default_bump,
    default_r_grid,
    difference_continuity_ratio,
    dilation_bound,
    hs_integer_norm,
    hs_norm,
    lu_equivalence_probe,
    lu_norm,
    mihlin_norm,
    sobolev_embedding_margin,
)
from gradedmult.symbols import FieldSymbol, IdentitySymbol, KernelSymbol, SpectralSymbol, dual_l2_norm, monomial

from oracles import sympy_box_hs_norm_sq

LINE = GradedGroup((1,), name="line")


@pytest.fixture(scope="module")
def g12(ab12):
    return Grid(ab12, (8, 32), (64, 64))


@pytest.fixture(scope="module")
def R12(g12):
    return build_rockland(RocklandSpec(), g12, cache_dir=False)


def _gauss(grid, rng):
    c = rng.uniform(-1, 1, grid.n)
    w = rng.uniform(0.5, 1.5, grid.n) * np.asarray(grid.extents) / 8
    return KernelSymbol(sample(lambda x: np.exp(-np.sum(((x - c) / w) ** 2, axis=-1)), grid))


# partition -------------------------------------------------------------------------
def test_partition_sums_to_one():
    P = build_dyadic_partition()
    assert P.partition_defect(np.array([0.1, 1.0, 10.0, 100.0])) < 1e-12
    assert P.partition_defect(2.0 ** np.linspace(-40, 40, 4001)) < 1e-12
    for c_o in (0.5, 1.5):
        assert DyadicPartition(c_o=c_o).partition_defect(2.0 ** np.linspace(-20, 20, 999)) < 1e-12


def test_partition_shift_and_sign():
    P = DyadicPartition(c_o=1.0)
    lam = 2.0 ** np.linspace(-6, 6, 301)
    for j in (-2, 0, 3):
        np.testing.assert_allclose(P.psi(j + 1, 2.0 ** P.c_o * lam), P.psi(j, lam), atol=1e-12)
        np.testing.assert_allclose(P.psi(j, lam), P.psi(0, 2.0 ** (-j * P.c_o) * lam), atol=1e-12)
        assert np.all(P.psi(j, lam) >= 0)


def test_partition_gap_rejected():
    with pytest.raises(ValueError, match="gaps"):
        DyadicPartition(c_o=3.0)


def test_default_bump_support():
    lam = np.array([0.5, 0.49, 2.0, 2.1, 1.0])
    v = default_bump(lam)
    assert v[0] == v[1] == v[2] == v[3] == 0 and v[4] == pytest.approx(1.0)
    assert LogBump(0.0, 1.5)(np.array([2.5]))[0] > 0


# H^s norms ---------------------------------------------------------------------------
def test_hs_s0_plancherel(g12, rng):
    s = _gauss(g12, rng)
    assert hs_norm(s, 0) == weighted_lp_norm(s.kernel(), 2)
    assert abs(hs_norm(s, 0) - dual_l2_norm(s.field(), g12)) < 1e-10


def test_hs_indicator_closed_form():
    g = Grid(LINE, (4,), (1 << 16,))
    h = g.spacing[0]
    x = g.axes()[0]
    # midpoint cells on [0, 1]
    k = GridFunction(((x >= h / 2) & (x < 1)).astype(float) + 0.5 * ((x == 0) | (np.abs(x - 1) < h / 2)), g)
    ref = math.sqrt(float(sympy_box_hs_norm_sq(1, 0, 1, "abs1d")))
    assert ref == pytest.approx(math.sqrt(7 / 3))
    assert hs_norm(k, 1) == pytest.approx(ref, rel=1e-4)


def test_hs_quasinorm_independence(g12, rng):
    q1, q2 = QuasiNorm(g12.group), QuasiNorm(g12.group, "max")
    lo, hi = quasinorm_constants_probe(q1, q2, samples=20_000).equivalence
    for _ in range(5):
        sig = _gauss(g12, rng)
        for s in (1.0, 2.0):
            ratio = hs_norm(sig, s, q1) / hs_norm(sig, s, q2)
            assert min(1, lo) ** s * 0.99 <= ratio <= max(1, hi) ** s * 1.01


def test_integer_norm_divisibility(g12, rng):
    sig = _gauss(g12, rng)
    assert hs_integer_norm(sig, 2) > 0
    with pytest.raises(ValueError, match="not divisible"):
        hs_integer_norm(sig, 1)
    assert hs_integer_norm(sig, 1, check_divisible=False) > 0


def test_integer_norm_dual_side(ab12):
    g = Grid(ab12, (16, 16), (64, 64))
    s = FieldSymbol(g, expr="exp(-xi1**2 - xi2**2)*(1 + xi1**2)")
    dual = sum(dual_l2_norm(s.dual_difference(a).field(), g)
               for a in multi_indices(2, 2) if hom_degree(a, g.group) <= 2)
    assert abs(hs_integer_norm(s, 2) - dual) < 1e-8


def test_integer_norm_equivalence_refinement(ab12):
    ratios = []
    for m in (64, 128):
        g = Grid(ab12, (8, 16), (m, m))
        s = KernelSymbol(sample("exp(-x1**2 - x2**2/4)", g))
        ratios.append(hs_integer_norm(s, 2) / hs_norm(s, 2))
    assert abs(ratios[1] / ratios[0] - 1) < 0.05


def test_dilation_bound(g12, rng):
    for _ in range(10):
        sig = _gauss(g12, rng)
        for r in (0.25, 0.5, 2.0, 4.0):
            d = dilation_bound(sig, r, 1.5)
            assert d["margin"] >= -1e-10 * d["rhs"]


def test_log_convexity_and_monotone(g12, rng):
    for _ in range(10):
        sig = _gauss(g12, rng)
        s1, s2 = 0.5, 3.0
        for th in (0.25, 0.5, 0.75):
            s = th * s1 + (1 - th) * s2
            assert hs_norm(sig, s) <= hs_norm(sig, s1) ** th * hs_norm(sig, s2) ** (1 - th) * (1 + 1e-10)
        vals = [hs_norm(sig, s) for s in (0, 0.5, 1, 2, 3)]
        assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_difference_continuity(ab12):
    out = []
    for m in (64, 128):
        g = Grid(ab12, (8, 16), (m, m))
        s = KernelSymbol(sample("exp(-x1**2 - x2**2/4)", g))
        out.append(difference_continuity_ratio(s, (1, 1), 1.0))
    assert np.all(np.isfinite(out)) and abs(out[1] / out[0] - 1) < 0.05


# local-uniform norms -----------------------------------------------------------------
def test_lu_identity_constant(g12, R12):
    rep = lu_norm(IdentitySymbol(g12), "right", 1.0, R=R12, K=4)
    const = hs_norm(SpectralSymbol(R12, default_bump, zero_value=0.0), 1.0)
    np.testing.assert_allclose(rep.values, const, rtol=1e-12)
    assert rep.sup == max(rep.values)
    with pytest.raises(ValueError, match="empty"):
        lu_norm(IdentitySymbol(g12), R=R12, r_grid=[])


def test_lu_left_right_adjoint(g12, R12):
    sig = riesz_symbol((1, 0), R12)
    left = lu_norm(sig, "left", 1.0, R=R12, K=4)
    right = lu_norm(sig.adjoint(), "right", 1.0, R=R12, K=4)
    np.testing.assert_allclose(left.values, right.values, atol=1e-10)


def test_lu_dilation_shift(g12, R12):
    sig = SpectralSymbol(R12, lambda lam: np.exp(-lam) * lam, zero_value=0.0)
    base = lu_norm(sig, "right", 1.0, R=R12, K=8)
    shifted = lu_norm(sig.dilate(2.0), "right", 1.0, R=R12, K=8)
    nu = R12.nu
    np.testing.assert_allclose(shifted.values[:-nu], base.values[nu:], rtol=1e-10)
    assert default_r_grid(R12, 2) == [2.0 ** (k / 4) for k in range(-2, 3)]


def test_lu_equivalence_identical(g12, R12):
    fam = [riesz_symbol((1, 0), R12), riesz_symbol((0, 1), R12)]
    rep = lu_equivalence_probe(fam, (default_bump, R12), (default_bump, R12), 1.0, K=3)
    np.testing.assert_allclose(rep["ratios"], 1.0)
    with pytest.raises(ValueError, match="empty"):
        lu_equivalence_probe([], (default_bump, R12), (default_bump, R12), 1.0)


# Mihlin ------------------------------------------------------------------------------
def test_mihlin_identity(g12, R12):
    rep = mihlin_norm(IdentitySymbol(g12), R12)
    assert rep.left_sum == pytest.approx(1.0) and rep.right_sum == pytest.approx(1.0)
    assert len(rep.table) == 6


def test_mihlin_line_oracle():
    g = Grid(LINE, (16,), (256,))
    R = build_rockland(RocklandSpec(), g, cache_dir=False)
    s = FieldSymbol(g, expr="xi1/sqrt(1 + xi1**2)")
    rep = mihlin_norm(s, R, method="analytic")
    assert rep.N == 1
    t1 = -minimize_scalar(lambda x: -x * (1 + x * x) ** -1.5, bounds=(0, 10), method="bounded",
                          options={"xatol": 1e-12}).fun
    vals = {a: v for a, _, v, _ in rep.table}
    assert vals[(0,)] == pytest.approx(1.0, abs=1e-4)
    assert vals[(1,)] == pytest.approx(t1, abs=1e-4)


def test_mihlin_riesz_finite(iso2):
    g = Grid(iso2, (8, 8), (64, 64))
    R = build_rockland(RocklandSpec(), g, cache_dir=False)
    rep = mihlin_norm(riesz_symbol((1, 0), R), R, method="kernel")
    assert np.isfinite(rep.left_sum) and rep.N == 2
    assert rep.table[0][2] == pytest.approx(1.0, abs=1e-12)


def test_mihlin_routes_agree(ab12):
    g = Grid(ab12, (16, 16), (64, 64))
    R = build_rockland(RocklandSpec(), g, cache_dir=False)
    s = FieldSymbol(g, expr="exp(-xi1**2 - xi2**2)")
    a = mihlin_norm(s, R, method="analytic", K=6, M=64)
    k = mihlin_norm(FieldSymbol(g, values=s.field()), R, method="kernel")
    assert k.left_sum == pytest.approx(a.left_sum, rel=0.02)


def test_mihlin_dilation_invariance(ab12):
    g = Grid(ab12, (16, 16), (64, 64))
    s = KernelSymbol(sample("exp(-x1**2 - x2**2)", g))
    R = build_rockland(RocklandSpec(), g, cache_dir=False)
    base = mihlin_norm(s, R, method="kernel")
    for r in (0.5, 2.0):
        sd = s.dilate_lattice(r)
        Rd = build_rockland(RocklandSpec(), sd.grid, cache_dir=False)
        other = mihlin_norm(sd, Rd, method="kernel")
        assert abs(other.left_sum - base.left_sum) < 1e-8 * base.left_sum


def _dense(M):
    return M.toarray() if hasattr(M, "toarray") else np.asarray(M)


def test_mihlin_operator_route_h1(h1):
    g = Grid(h1, (2.5, 2.5, 5), (7, 7, 7), mode="box")
    R = build_rockland(RocklandSpec("sublaplacian"), g, cache_dir=False)
    s = SpectralSymbol(R, lambda lam: np.exp(-lam))
    rep = mihlin_norm(s, R, N=2)
    assert rep.converged and np.isfinite(rep.left_sum) and np.isfinite(rep.right_sum)
    # dense SVD of the same discretized operators as an oracle for the iterative solver
    C = _dense(convolution_matrix(s.kernel()))
    assert rep.table[0][2] == pytest.approx(np.linalg.norm(C, 2), rel=1e-6)
    lam, V = R.eigenvalues, R.eigenvectors
    Rh = (V * np.sqrt(lam)) @ V.T
    C1 = _dense(convolution_matrix(s.kernel() * monomial(g, (1, 0, 0))))
    row = dict((a, (l, r)) for a, _, l, r in rep.table)[(1, 0, 0)]
    assert row[0] == pytest.approx(np.linalg.norm(Rh @ C1, 2), rel=1e-6)
    assert row[1] == pytest.approx(np.linalg.norm(C1 @ Rh, 2), rel=1e-6)
    power = mihlin_norm(s, R, N=1, solver="power", maxiter=2000, tol=1e-12)
    lanczos = mihlin_norm(s, R, N=1)
    assert power.left_sum == pytest.approx(lanczos.left_sum, rel=1e-4)


# embedding and algebra -----------------------------------------------------------------
def test_embedding(g12, rng):
    for _ in range(5):
        out = sobolev_embedding_margin(_gauss(g12, rng), 2.0)
        assert out["margin"] >= -1e-8
        assert out["sup_sigma"] <= out["lhs"] + 1e-10
    out = sobolev_embedding_margin(KernelSymbol(delta(g12)), 2.0)
    assert out["margin"] >= -1e-8
    with pytest.raises(ValueError, match="Q/2"):
        sobolev_embedding_margin(_gauss(g12, rng), 1.5)


def test_algebra(g12, h1, rng):
    sig = _gauss(g12, rng)
    assert algebra_margin(sig, IdentitySymbol(g12), 2.0)["margin"] >= 0
    hg = Grid(h1, (3, 3, 6), (9, 9, 9), mode="box")
    a = KernelSymbol(sample("exp(-2*(x1 - 0.5)**2 - 2*x2**2 - x3**2)", hg))
    b = KernelSymbol(sample("exp(-2*x1**2 - 2*(x2 - 0.5)**2 - x3**2)", hg))
    assert algebra_margin(a, b, 3.0)["margin"] >= 0
    ab = (a * b).kernel()
    ba = (b * a).kernel()
    assert weighted_lp_norm(ab - ba, 2) > 1e-6
