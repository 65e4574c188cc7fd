import itertools

import numpy as np
import pytest

from gradedmult.group import (
    GradedGroup,
    QuasiNorm,
    degree_calculator,
    dilate_point,
    dilate_point_rows,
    group_inverse,
    group_product,
    hom_degree,
    iso_length,
    load_descriptor,
    mihlin_order,
    multi_indices,
    quasinorm_constants_probe,
    shipped_descriptors,
    validate_descriptor,
)

from oracles import heisenberg_product, matrix_group_product, mihlin_order_brute, quasi_norm_nuo


def test_validate_shipped():
    for name in shipped_descriptors():
        rep = validate_descriptor(load_descriptor(name))
        assert rep.ok, rep.failures()


def test_validate_abelian_step(ab12):
    assert validate_descriptor(ab12).ok
    assert ab12.step == 1


def test_gradation_violation_reported():
    d = GradedGroup((1, 1, 2), [(0, 1, 1, 1.0)])
    rep = validate_descriptor(d)
    assert not rep["gradation"]["passed"]
    assert rep["gradation"]["index"] == (1, 2, 2)


def test_mutated_tables_rejected():
    for name in shipped_descriptors():
        d = load_descriptor(name)
        c = d.structure
        n = d.n
        for i, j, k in itertools.product(range(n), repeat=3):
            if i >= j or c[i, j, k] != 0 or d.weights[k] == d.weights[i] + d.weights[j]:
                continue
            entries = [(a, b, e, c[a, b, e]) for a, b, e in zip(*np.nonzero(c)) if a < b]
            mutated = GradedGroup(d.weights, entries + [(i, j, k, 1.0)])
            assert not validate_descriptor(mutated)["gradation"]["passed"]


def test_weights_rejected():
    with pytest.raises(ValueError, match="weights must be positive integers"):
        GradedGroup((0, 1))


def test_declared_q_checked():
    d = GradedGroup((1, 2), Q=4)
    assert not validate_descriptor(d)["Q"]["passed"]


def test_products(h1, ab12):
    np.testing.assert_allclose(group_product([1, 0, 0], [0, 1, 0], h1), [1, 1, 0.5], atol=1e-15)
    np.testing.assert_allclose(group_product([1, 2], [3, 4], ab12), [4, 6])
    x = np.array([0.3, -1.2, 2.0])
    np.testing.assert_allclose(group_product(x, group_inverse(x), h1), 0, atol=1e-15)


def test_product_vs_unipotent_matrix(h1, rng):
    x = rng.normal(size=(1000, 3)) * 3
    y = rng.normal(size=(1000, 3)) * 3
    z = group_product(x, y, h1)
    ref = np.array([heisenberg_product(a, b) for a, b in zip(x, y)])
    assert np.max(np.abs(z - ref)) < 1e-12


def test_product_vs_affine_matrix_model(rng):
    engel = load_descriptor("engel")
    assert engel.step == 3
    x = rng.normal(size=(200, engel.n))
    y = rng.normal(size=(200, engel.n))
    z = group_product(x, y, engel)
    ref = np.array([matrix_group_product(a, b) for a, b in zip(x, y)])
    assert np.max(np.abs(z - ref)) < 1e-12


@pytest.mark.parametrize("name", ["abelian-12", "abelian-iso-2", "heisenberg-1", "engel"])
def test_associativity(name, rng):
    d = load_descriptor(name)
    x, y, z = (rng.normal(size=(1000, d.n)) for _ in range(3))
    lhs = group_product(group_product(x, y, d), z, d)
    rhs = group_product(x, group_product(y, z, d), d)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_step_beyond_bch_order_rejected():
    # filiform algebra of step 5: [X1, Xk] = X_{k+1}
    d = GradedGroup((1, 1, 2, 3, 4, 5), [(0, k, k + 1, 1.0) for k in range(1, 5)])
    with pytest.raises(ValueError, match="BCH order"):
        group_product(np.ones(6), np.ones(6), d)


def test_dilations(h1, rng):
    np.testing.assert_allclose(dilate_point(2, [1, 1, 1], h1), [2, 2, 4])
    x = rng.normal(size=(50, 3))
    np.testing.assert_array_equal(dilate_point(1, x, h1), x)
    np.testing.assert_allclose(dilate_point(2, dilate_point(3, x, h1), h1), dilate_point(6, x, h1), rtol=1e-14)
    lhs = dilate_point(2, group_product([1, 0, 0], [0, 1, 0], h1), h1)
    rhs = group_product(dilate_point(2, [1, 0, 0], h1), dilate_point(2, [0, 1, 0], h1), h1)
    np.testing.assert_allclose(lhs, [2, 2, 2])
    np.testing.assert_allclose(rhs, [2, 2, 2])
    with pytest.raises(ValueError):
        dilate_point(0, x, h1)


def test_degrees(h1, ab12):
    assert degree_calculator(h1, (1, 0, 1)) == {"Q": 4, "mihlin_order": 4, "hom_deg": 3, "iso_len": 2}
    assert degree_calculator(ab12)["mihlin_order"] == 2
    assert hom_degree((0, 3), ab12) == 6 and iso_length((0, 3)) == 3


@pytest.mark.parametrize("weights", [(1, 1), (1, 2), (1, 1, 2), (1, 1, 2, 3), (2, 3), (1, 4), (3, 3, 6)])
def test_mihlin_order_exhaustive(weights):
    N = mihlin_order(weights)
    assert N == mihlin_order_brute(weights)
    assert N > sum(weights) / 2 and all(N % v == 0 for v in weights)


def test_multi_indices_count():
    assert len(list(multi_indices(2, 2))) == 6
    assert len(list(multi_indices(3, 4))) == 35


def test_quasinorm_values(h1):
    q = QuasiNorm(h1)
    assert q([1, 0, 0]) == pytest.approx(1.0)
    assert q([0, 0, 1]) == pytest.approx(1.0)
    assert q([1, 1, 1]) == pytest.approx(3 ** 0.25, rel=1e-14)


def test_quasinorm_homogeneous_symmetric(h1, rng):
    q = QuasiNorm(h1)
    x = rng.normal(size=(500, 3))
    r = np.exp(rng.uniform(-3, 3, size=500))
    lhs = q(dilate_point_rows(r, x, h1))
    assert np.max(np.abs(lhs / (r * q(x)) - 1)) < 1e-12
    np.testing.assert_allclose(q(-x), q(x), rtol=1e-15)
    np.testing.assert_allclose(q(x), quasi_norm_nuo(x, h1.weights, h1.nu_o), rtol=1e-14)


def test_constants_probe(iso2, h1):
    eu = QuasiNorm(iso2, "euclidean")
    rep = quasinorm_constants_probe(eu, samples=5000)
    assert rep.triangle <= 1 + 1e-12
    rep = quasinorm_constants_probe(eu, eu, samples=500)
    assert rep.equivalence == pytest.approx((1.0, 1.0))
    q = QuasiNorm(h1)
    a = quasinorm_constants_probe(q, samples=10_000, seed=0)
    b = quasinorm_constants_probe(q, samples=10_000, seed=1)
    assert np.isfinite(a.triangle) and abs(a.triangle / b.triangle - 1) < 0.1
    assert a == quasinorm_constants_probe(q, samples=10_000, seed=0)


def test_custom_quasinorm(h1, rng):
    q = QuasiNorm(h1, "custom", "(x1**4 + x2**4 + x3**2)**(1/4)")
    x = rng.normal(size=(20, 3))
    np.testing.assert_allclose(q(x), quasi_norm_nuo(x, h1.weights, 2))
