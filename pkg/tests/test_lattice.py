import math

import numpy as np
import pytest
from scipy import integrate as quad

from gradedmult.group import GradedGroup, QuasiNorm, load_descriptor, shipped_descriptors
from gradedmult.lattice import (
    Grid,
    GridFunction,
    apply_vector_field,
    convolve,
    delta,
    export_slice_csv,
    integrate,
    interpolate,
    load_gridfunction,
    mean_value_probe,
    polar_measure_estimate,
    sample,
    save_gridfunction,
    weighted_lp_norm,
    young_ratio,
)

from oracles import direct_circular_convolution

R1 = GradedGroup((1,), name="line")


def _bump(grid, rng, scale=1.0):
    c = rng.uniform(-1, 1, grid.n) * scale
    w = rng.uniform(0.4, 1.0, grid.n) * scale
    return sample(lambda x, c=c, w=w: np.exp(-np.sum(((x - c) / w) ** 2, axis=-1)), grid)


def test_grid_invariants(iso2):
    with pytest.raises(ValueError):
        Grid(iso2, (1, 1), (3, 8))
    with pytest.raises(ValueError, match="budget"):
        Grid(iso2, (1, 1), (4096, 4096))
    g = Grid(iso2, (2, 3), (8, 12))
    assert g.spacing == pytest.approx((0.5, 0.5))


def test_sample(iso2, h1):
    g = Grid(iso2, (4, 4), (16, 16))
    assert np.all(sample("1", g).values == 1)
    f = sample("exp(-x1**2 - x2**2)", g)
    assert np.unravel_index(np.argmax(f.real), g.shape) == g.origin_index
    inner = f.values[1:, 1:]
    np.testing.assert_allclose(inner, inner[::-1, ::-1])
    with pytest.raises(ValueError, match="non-finite"), np.errstate(divide="ignore"):
        sample("1/x1", g)
    hg = Grid(h1, (1.1, 1.1, 1.1), (20, 20, 20), mode="box")
    q = QuasiNorm(h1)
    ball = sample(lambda x: (q(x) <= 1.0).astype(float), hg)
    rng = np.random.default_rng(0)
    mc = rng.uniform(-1.1, 1.1, size=(400_000, 3))
    vol = 2.2 ** 3 * np.mean(q(mc) <= 1.0)
    assert abs(integrate(ball).real / vol - 1) < 0.05


def test_delta_identity(iso2, rng):
    g = Grid(iso2, (4, 4), (32, 32))
    f = GridFunction(rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape), g)
    assert weighted_lp_norm(convolve(f, delta(g)) - f, 2) < 1e-10
    assert weighted_lp_norm(delta(g), 2) == pytest.approx(g.cellvol ** -0.5)


def test_indicator_triangle():
    g = Grid(R1, (4,), (400,))
    ind = sample(lambda x: ((x[..., 0] >= 0) & (x[..., 0] < 1)).astype(float), g)
    tri = convolve(ind, ind)
    x = g.axes()[0]
    # the sampled indicator has one node fewer in the overlap than its mass suggests
    assert tri.real[np.argmin(np.abs(x - 1.0))] == pytest.approx(1.0, abs=g.spacing[0])
    assert np.max(tri.real) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("shape", [(7,), (8, 6), (4, 4, 5)])
def test_fft_vs_direct(shape, rng):
    d = GradedGroup((1,) * len(shape))
    g = Grid(d, (1.0,) * len(shape), shape)
    a = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    b = rng.normal(size=shape)
    fast = convolve(GridFunction(a, g), GridFunction(b, g)).values
    ref = direct_circular_convolution(a, b, g.cellvol)
    assert np.max(np.abs(fast - ref)) < 1e-10
    assert np.max(np.abs(convolve(GridFunction(a, g), GridFunction(b, g), method="direct").values - ref)) < 1e-10


def test_grid_mismatch(iso2):
    a = delta(Grid(iso2, (1, 1), (8, 8)))
    b = delta(Grid(iso2, (1, 1), (16, 16)))
    with pytest.raises(ValueError, match="grid mismatch"):
        convolve(a, b)


def test_norms():
    g = Grid(GradedGroup((1, 1)), (2, 3), (16, 24))
    assert weighted_lp_norm(sample("1", g), 1) == pytest.approx(24.0)
    assert weighted_lp_norm(sample("-3", g), np.inf) == 3.0
    line = Grid(R1, (8,), (1 << 15,))
    f = sample("exp(-x1**2)", line)
    ref = math.sqrt(quad.quad(lambda x: (1 + abs(x)) ** 4 * math.exp(-2 * x * x), -np.inf, np.inf)[0])
    assert weighted_lp_norm(f, 2, s=2) == pytest.approx(ref, rel=1e-6)


def test_interpolation_exact_on_linear(h1):
    g = Grid(h1, (2, 2, 2), (9, 9, 9), mode="box")
    f = sample("1 + 2*x1 - x2 + 0.5*x3", g)
    pts = np.random.default_rng(3).uniform(-1.5, 1.5, size=(50, 3))
    np.testing.assert_allclose(interpolate(f, pts), 1 + 2 * pts[:, 0] - pts[:, 1] + 0.5 * pts[:, 2], atol=1e-12)
    assert np.all(interpolate(f, np.full((1, 3), 10.0)) == 0)


def test_young_abelian(ab12, rng):
    g = Grid(ab12, (8, 16), (64, 64))
    worst = {}
    for _ in range(50):
        f, h = _bump(g, rng), _bump(g, rng)
        for pqr in [(1, 1, 1), (2, 1, 2), (np.inf, 1, np.inf), (2, 2, np.inf)]:
            worst[pqr] = max(worst.get(pqr, 0.0), young_ratio(f, h, *pqr))
    assert max(worst.values()) < 1.05
    assert worst[(1, 1, 1)] == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ValueError, match="Young exponents"):
        young_ratio(f, h, 2, 2, 2)


def test_young_heisenberg(h1, rng):
    g = Grid(h1, (4, 4, 8), (9, 9, 9), mode="box")
    for _ in range(5):
        f, h = _bump(g, rng), _bump(g, rng)
        assert young_ratio(f, h, 1, 1, 1) <= 1.05


def test_weighted_young_refinement(h1):
    rows = []
    for m in (9, 12):
        g = Grid(h1, (4, 4, 8), (m, m, m), mode="box")
        rng = np.random.default_rng(5)
        rows.append(max(young_ratio(_bump(g, rng), _bump(g, rng), 1, 1, 1, s=1.0) for _ in range(3)))
    assert np.all(np.isfinite(rows))
    assert abs(rows[1] / rows[0] - 1) < 0.25


@pytest.mark.parametrize("name", ["abelian-iso-2", "abelian-12", "heisenberg-1", "engel"])
def test_polar_scaling(name):
    d = load_descriptor(name)
    m = {2: 64, 3: 20, 4: 12}[d.n]
    ext = [2 ** v * 1.02 / (1 - 2 / m) for v in d.weights]
    g = Grid(d, ext, (m,) * d.n, mode="periodic" if d.is_abelian else "box")
    rep = polar_measure_estimate(QuasiNorm(d), g, subsample=4 if d.n < 4 else 6)
    assert abs(rep["ball_scaling_exponent"] - d.Q) < 0.1
    assert name in shipped_descriptors()


def test_polar_euclidean(iso2):
    g = Grid(iso2, (2.5, 2.5), (64, 64))
    rep = polar_measure_estimate(QuasiNorm(iso2, "euclidean"), g)
    assert rep["sphere_measure"] == pytest.approx(2 * np.pi, rel=0.01)
    with pytest.raises(ValueError, match="exits"):
        polar_measure_estimate(QuasiNorm(iso2, "euclidean"), Grid(iso2, (1.5, 1.5), (16, 16)))


def test_mean_value_line():
    g = Grid(R1, (10,), (2000,))
    f = sample("exp(-x1**2)", g)
    assert mean_value_probe(f, [0.1]) <= 1 + 1e-3
    assert mean_value_probe(f, [0.0]) == 0.0


def test_mean_value_heisenberg_refinement(h1):
    rng = np.random.default_rng(7)
    q = QuasiNorm(h1)
    hs = []
    while len(hs) < 100:
        h = rng.uniform(-0.5, 0.5, 3)
        if q(h) <= 0.5:
            hs.append(h)
    out = []
    for m in (12, 16):
        g = Grid(h1, (4, 4, 8), (m, m, m), mode="box")
        f = sample("exp(-x1**2 - x2**2 - x3**2)", g)
        out.append(max(mean_value_probe(f, h) for h in hs))
    assert np.all(np.isfinite(out))
    assert abs(out[1] / out[0] - 1) < 0.2


def test_vector_field_commutator(h1):
    g = Grid(h1, (3, 3, 3), (40, 40, 40), mode="box", max_points=1 << 17)
    f = sample("exp(-x1**2 - x2**2 - x3**2)", g)
    comm = apply_vector_field(apply_vector_field(f, 1), 0) - apply_vector_field(apply_vector_field(f, 0), 1)
    d3 = apply_vector_field(f, 2)
    inner = (slice(3, -3),) * 3
    assert np.max(np.abs((comm - d3).values[inner])) < 0.05 * np.max(np.abs(d3.values))


def test_save_load_roundtrip(tmp_path, h1, rng):
    g = Grid(h1, (1, 2, 3), (5, 6, 7), mode="box")
    f = GridFunction(rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape), g)
    binp, hdrp = save_gridfunction(f, tmp_path / "k")
    assert binp.stat().st_size == 16 * g.size
    back = load_gridfunction(tmp_path / "k.bin")
    assert back.grid == g
    np.testing.assert_array_equal(back.values, f.values)
    export_slice_csv(f, tmp_path / "s.csv", axis=2)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "x,real,imag" and len(lines) == 8
