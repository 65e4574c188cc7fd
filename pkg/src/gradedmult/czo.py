"""Dyadic kernel decompositions, Calderon-Zygmund integrals and operator-norm probes.

Indexing of the dyadic decomposition: ``psi`` is the ``c_o = 1`` piece of a
:class:`DyadicPartition`, so ``sum_j psi(2^-j lam) = 1`` with band ``j`` living
where ``lam ~ 2^j``. Band ``j`` is written as a dilate of a unit-band symbol,
``sigma psi(2^-j pi(R)) = sigma_j(r_j . pi)`` with ``r_j = 2^(-j/nu)`` and
``sigma_j(pi) = sigma(r_j^-1 . pi) psi(pi(R))``, so that
``kappa = sum_j r_j^-Q kappa_j(r_j^-1 .)``. The spatial scale exponent of band
``j`` is ``log2 r_j = -j/nu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import pmap
from .group import QuasiNorm, group_product, hom_degree, quasinorm_constants_probe, unit_sphere_samples
from .lattice import GridFunction, fourier_transform, interpolate, inverse_fourier_transform, weighted_lp_norm
from .rockland import DiscretizedRockland
from .sobolev import DyadicPartition, hs_norm
from .symbols import IdentitySymbol, SpectralSymbol, Symbol, product

__all__ = [
    "riesz_symbol",
    "imaginary_power_symbol",
    "heat_symbol",
    "bump_symbol",
    "DyadicKernelDecomposition",
    "dyadic_decompose",
    "partial_sum_symbol",
    "annulus_l1_profile",
    "bandlimited_eval",
    "AnnulusProfile",
    "CZReport",
    "cz_integral",
    "cz_pairs",
    "probe_family",
    "lp_opnorm_probe",
    "weak11_probe",
    "weak_l1_quasinorm",
]


# builtin symbols ---------------------------------------------------------------
def riesz_symbol(alpha, R: DiscretizedRockland) -> SpectralSymbol:
    """``pi(X)^alpha pi(R)^(-[alpha]/nu)`` with value 0 on the zero mode.

    On abelian grids the field is ``(i xi)^alpha a(xi)^(-[alpha]/nu)``.
    """
    alpha = tuple(int(a) for a in alpha)
    e = hom_degree(alpha, R.grid.group) / R.nu
    f = lambda lam, e=e: np.power(lam, -e)
    return SpectralSymbol(R, f, alpha, name="riesz%s" % (alpha,), degree=0, zero_value=0.0)


def imaginary_power_symbol(R: DiscretizedRockland, tau) -> SpectralSymbol:
    """``pi(R)^(i tau)`` with value 0 on the zero mode."""
    tau = float(tau)
    f = lambda lam, t=tau: np.exp(1j * t * np.log(lam))
    return SpectralSymbol(R, f, name="R^i%g" % tau, degree=0, zero_value=0.0)


def heat_symbol(R: DiscretizedRockland, t=1.0) -> SpectralSymbol:
    f = lambda lam, t=t: np.exp(-t * lam)
    return SpectralSymbol(R, f, name="exp(-%gR)" % t)


def bump_symbol(R: DiscretizedRockland, eta) -> SpectralSymbol:
    return SpectralSymbol(R, eta, name="eta(R)", zero_value=0.0)


# dyadic decomposition ---------------------------------------------------------------
@dataclass
class DyadicKernelDecomposition:
    sigma: Symbol
    R: DiscretizedRockland
    partition: DyadicPartition
    j_values: list
    pieces: list  # unit-band symbols sigma_j
    kernels: list  # kappa_j
    flags: dict = field(default_factory=dict)

    def scale(self, j):
        """Spatial scale ``r_j = 2^(-j/nu)``."""
        return 2.0 ** (-j / self.R.nu)

    def scale_exponent(self, j):
        """``log2 r_j``."""
        return -j / self.R.nu

    def band_symbol(self, j) -> Symbol:
        """``sigma psi(2^-j pi(R))`` in its original scale."""
        psi = self.partition.psi_function(j)
        return product(self.sigma, bump_symbol(self.R, psi))

    def recombine(self, phi: GridFunction, j_values=None) -> GridFunction:
        """``sum_j T_{sigma psi_j(R)} phi`` over ``j_values`` (default: all)."""
        js = self.j_values if j_values is None else j_values
        out = phi * 0.0
        for j in js:
            out = out + self.band_symbol(j).apply(phi)
        return out

    def integrals(self):
        """``int kappa_j`` for each band."""
        return [complex(np.sum(k.values) * k.grid.cellvol) for k in self.kernels]


def dyadic_decompose(sigma: Symbol, R: DiscretizedRockland, j_range, partition: DyadicPartition | None = None,
                     workers=None) -> DyadicKernelDecomposition:
    """Split ``sigma`` into unit-band pieces ``sigma_j(pi) = sigma(r_j^-1 . pi) psi(pi(R))``.

    Bands whose frequency support is not inside the dual grid, or whose
    kernel keeps more than 1% of its mass in the boundary band, are flagged.
    """
    partition = partition or DyadicPartition(c_o=1.0)
    if partition.c_o != 1.0:
        raise ValueError("the decomposition uses the c_o = 1 partition")
    psi0 = partition.psi_function(0)
    js = [int(j) for j in j_range]

    def piece(j):
        r = 2.0 ** (-j / R.nu)
        return product(sigma.dilate(1.0 / r), bump_symbol(R, psi0))

    pieces = [piece(j) for j in js]
    kernels = pmap(lambda p: p.kernel(), pieces, workers)
    flags = {}
    lo, hi = partition.support
    if R.backend == "symbol":
        edge_max = _edge_symbol_value(R)
        for j, k in zip(js, kernels):
            msg = []
            if hi * 2.0 ** 0 > edge_max:
                msg.append("band exceeds the dual grid")
            from .symbols import boundary_fraction

            if boundary_fraction(k) > 0.01:
                msg.append("kernel reaches the grid boundary")
            if msg:
                flags[j] = "; ".join(msg)
    return DyadicKernelDecomposition(sigma, R, partition, js, pieces, kernels, flags)


def _edge_symbol_value(R):
    """Smallest value of ``a`` on the faces of the dual grid."""
    a = R.symbol
    m = np.zeros(a.shape, dtype=bool)
    for ax in range(a.ndim):
        idx = [slice(None)] * a.ndim
        idx[ax] = [0]
        m[tuple(idx)] = True
    return float(np.min(a[m]))


def partial_sum_symbol(sigma: Symbol, R: DiscretizedRockland, J, partition: DyadicPartition | None = None):
    """``sigma sum_{|j| <= J} psi(2^-j pi(R))``: a smooth band-limited truncation."""
    partition = partition or DyadicPartition(c_o=1.0)
    psis = [partition.psi_function(j) for j in range(-J, J + 1)]
    taper = lambda lam, psis=psis: sum(p(lam) for p in psis)
    return product(sigma, bump_symbol(R, taper))


# annulus profiles ---------------------------------------------------------------------
@dataclass
class AnnulusProfile:
    m_values: list
    j_values: list
    scale_exponents: list
    table: np.ndarray  # (len(m), len(j)); NaN where unresolved
    resolved: np.ndarray
    per_m_sums: list
    slope_far: float | None  # fitted slope of log2 summand vs (m - j') over j' > m
    slope_near: float | None  # same over j' < m

    def as_rows(self):
        rows = []
        for a, m in enumerate(self.m_values):
            for b, j in enumerate(self.j_values):
                rows.append((m, j, self.scale_exponents[b], float(self.table[a, b]), bool(self.resolved[a, b])))
        return rows


def _annulus_ok(grid, rho, min_cells, free=()):
    """Annulus ``rho <= |y| <= 2 rho`` resolved, and inside the grid on every axis not in ``free``."""
    for ax, (v, h, L) in enumerate(zip(grid.group.weights, grid.spacing, grid.extents)):
        thick = (2.0 ** v - 1.0) * rho ** v
        if thick < min_cells * h or ((2.0 * rho) ** v > L - h and ax not in free):
            return False
    return True


def _decayed_axes(kern, tail=0.1, tol=1e-9):
    """Axes along which ``kern`` keeps less than ``tol`` of its mass in the outer ``tail`` of the box."""
    a = np.abs(kern.values)
    tot = float(np.sum(a))
    out = []
    for ax, (x, L) in enumerate(zip(kern.grid.axes(), kern.grid.extents)):
        far = np.abs(x) > (1.0 - tail) * L
        if tot > 0 and float(np.sum(np.compress(far, a, axis=ax))) <= tol * tot:
            out.append(ax)
    return tuple(out)


def _fit_slope(x, y):
    if len(x) < 2:
        return None
    A = np.vstack([x, np.ones(len(x))]).T
    sol, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(sol[0])


def bandlimited_eval(F, grid, axes_points):
    """Trigonometric interpolant of ``F^-1 F`` on the tensor grid ``axes_points``.

    Exact for the periodic band-limited function whose spectrum ``F`` is
    given on the dual grid of ``grid``. Evaluated one axis at a time.
    """
    out = np.asarray(F, dtype=complex)
    for ax, (xi, pts) in enumerate(zip(grid.freq_axes(), axes_points)):
        keep = np.flatnonzero(np.any(np.moveaxis(out, ax, 0).reshape(out.shape[ax], -1) != 0, axis=1))
        if keep.size == 0:
            return np.zeros(tuple(len(p) for p in axes_points), dtype=complex)
        E = np.exp(1j * np.outer(pts, xi[keep]))
        out = np.moveaxis(np.tensordot(E, np.take(out, keep, axis=ax), axes=([1], [ax])), 0, ax)
    return out / (grid.size * grid.cellvol)


def _is_bandlimited(F, tol=1e-13):
    top = np.max(np.abs(F))
    for ax in range(F.ndim):
        edge = np.take(F, [0], axis=ax)
        if np.max(np.abs(edge)) > tol * top:
            return False
    return True


def _patch_annulus(F, grid, q, rho, cells=16, cap=512):
    """``L^1`` mass of the band-limited kernel on ``rho <= |y| <= 2 rho`` on a local midpoint grid."""
    axes = []
    for v, h in zip(grid.group.weights, grid.spacing):
        half = (2.0 * rho) ** v
        thick = (2.0 ** v - 1.0) * rho ** v
        hp = min(h, thick / cells)
        n = min(cap, int(math.ceil(2 * half / hp)))
        hp = 2 * half / n
        axes.append(-half + hp * (np.arange(n) + 0.5))
    vals = bandlimited_eval(F, grid, axes)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    nz = q(mesh)
    mask = (nz >= rho) & (nz <= 2.0 * rho)
    dv = float(np.prod([a[1] - a[0] for a in axes]))
    return float(np.sum(np.abs(vals)[mask]) * dv)


def annulus_l1_profile(decomp: DyadicKernelDecomposition, m_range, q: QuasiNorm | None = None, min_cells=4,
                       floor=1e-12, refine="auto") -> AnnulusProfile:
    """``int_{2^m <= |x| <= 2^(m+1)} r_j^-Q |kappa_j(r_j^-1 x)| dx`` for every ``(m, j)``.

    By a change of variables this is the ``L^1`` mass of ``kappa_j`` on the
    annulus of inner radius ``2^(m - j')`` with ``j' = log2 r_j``, so every
    entry is computed on the unit-band kernel. An annulus may leave the box
    along axes where the kernel keeps less than 1e-9 of its mass in the
    outer tenth of the box. An annulus thinner than
    ``min_cells`` cells on some axis is evaluated on a finer local grid
    through the exact trigonometric interpolant when the piece is
    band-limited inside the dual grid (``refine='auto'``); otherwise, or
    when the annulus leaves the grid, the entry is NaN. Slopes are
    least-squares fits of ``log2(summand)`` against ``m - j'`` in the two
    regimes, pooled over ``m`` with per-``m`` intercepts; summands below
    ``floor`` times the largest entry are left out of the fits.
    """
    kernels = decomp.kernels
    grid = kernels[0].grid
    q = q or QuasiNorm(grid.group)
    nz = q(grid.coords())
    ms = [int(m) for m in m_range]
    jp = [decomp.scale_exponent(j) for j in decomp.j_values]
    tab = np.full((len(ms), len(jp)), np.nan)
    ok = np.zeros(tab.shape, dtype=bool)
    absk = [np.abs(k.values) for k in kernels]
    spectra = {}

    def spectrum(b):
        if b not in spectra:
            F = fourier_transform(kernels[b]) if grid.mode == "periodic" else None
            spectra[b] = F if F is not None and _is_bandlimited(F) else None
        return spectra[b]

    free = [_decayed_axes(k) for k in kernels]
    for a, m in enumerate(ms):
        for b, e in enumerate(jp):
            rho = 2.0 ** (m - e)
            if _annulus_ok(grid, rho, min_cells, free[b]):
                mask = (nz >= rho) & (nz <= 2.0 * rho)
                tab[a, b] = float(np.sum(absk[b][mask]) * grid.cellvol)
                ok[a, b] = True
            elif refine == "auto" and _annulus_ok(grid, rho, 0) and spectrum(b) is not None:
                tab[a, b] = _patch_annulus(spectrum(b), grid, q, rho)
                ok[a, b] = True
    sums = [float(np.nansum(row)) if np.any(np.isfinite(row)) else float("nan") for row in tab]
    top = np.nanmax(tab) if np.any(ok) else 0.0

    def pooled(sel):
        xs, ys, groups = [], [], []
        for a, m in enumerate(ms):
            for b, e in enumerate(jp):
                if ok[a, b] and sel(m, e) and tab[a, b] > floor * top:
                    xs.append(m - e)
                    ys.append(math.log2(tab[a, b]))
                    groups.append(a)
        if len(xs) < 2:
            return None
        gids = sorted(set(groups))
        A = np.zeros((len(xs), 1 + len(gids)))
        A[:, 0] = xs
        for i, gidx in enumerate(groups):
            A[i, 1 + gids.index(gidx)] = 1.0
        if np.linalg.matrix_rank(A) < A.shape[1]:
            return None
        sol, *_ = np.linalg.lstsq(A, np.asarray(ys), rcond=None)
        return float(sol[0])

    slope_far = pooled(lambda m, e: e > m)
    slope_near = pooled(lambda m, e: e < m)
    return AnnulusProfile(ms, list(decomp.j_values), jp, tab, ok, sums, slope_far, slope_near)


# Calderon-Zygmund integrals -------------------------------------------------------------
@dataclass
class CZReport:
    pairs: list
    values: list  # for K
    values_star: list  # for K_*
    c: float
    sup: float = field(init=False)
    sup_star: float = field(init=False)

    def __post_init__(self):
        self.sup = float(max(self.values)) if self.values else 0.0
        self.sup_star = float(max(self.values_star)) if self.values_star else 0.0

    def as_dict(self):
        return {"c": self.c, "sup": self.sup, "sup_star": self.sup_star, "n_pairs": len(self.pairs)}


def cz_integral(kernel, pairs, q: QuasiNorm | None = None, c=None, star=True, workers=None) -> CZReport:
    """``int_{d(x,y) > 4c d(y,y')} |K(x,y) - K(x,y')| dx`` for each pair.

    ``K(x, y) = kappa(y^-1 x)``. Writing ``x = y z`` and ``h = y'^-1 y`` the
    integrand is ``|kappa(z) - kappa(h z)|`` over ``|z| > 4c |h^-1|``. The
    adjoint kernel ``K_*(x, y) = conj K(y, x)`` is evaluated directly as
    ``|kappa(z^-1) - kappa(z^-1 h^-1)|`` on the same region. ``c`` defaults
    to the probed triangle constant of ``q``.
    """
    kern = kernel.kernel() if isinstance(kernel, Symbol) else kernel
    grid = kern.grid
    group = grid.group
    q = q or QuasiNorm(group)
    if c is None:
        # the sampled constant is a lower estimate of a quantity that is at least 1
        c = max(1.0, quasinorm_constants_probe(q, samples=10_000, seed=0).triangle)
    z = grid.coords()
    nz = q(z)
    base = kern.values
    zinv = -z

    def one(pair):
        y, yp = (np.asarray(p, dtype=float) for p in pair)
        h = group_product(-yp, y, group)
        thr = 4.0 * c * float(q(-h))
        region = nz > thr
        if thr == 0.0:
            return 0.0, 0.0
        if not np.any(region):
            raise ValueError("CZ threshold 4c|h| = %g leaves no grid points; use smaller pairs "
                             "(probes.cz_unit) or a larger grid" % thr)
        hz = group_product(np.broadcast_to(h, z.shape), z, group)
        v = float(np.sum(np.abs(base - interpolate(kern, hz))[region]) * grid.cellvol)
        vs = 0.0
        if star:
            a = interpolate(kern, zinv)
            b = interpolate(kern, group_product(zinv, np.broadcast_to(-h, z.shape), group))
            vs = float(np.sum(np.abs(a - b)[region]) * grid.cellvol)
        return v, vs

    res = pmap(one, pairs, workers)
    return CZReport([tuple(map(tuple, map(np.asarray, p))) for p in pairs], [r[0] for r in res],
                    [r[1] for r in res], float(c))


def cz_pairs(grid, count=100, scales=(-4, -3, -2, -1, 0), unit=1.0, seed=0, q: QuasiNorm | None = None):
    """Seeded pairs ``(y, y')`` with ``h = y'^-1 y`` stratified over ``|h| ~ 2^k unit``.

    ``h`` is rounded to a nonzero lattice vector; ``y`` is a random lattice
    point near the origin and ``y' = y h^-1``.
    """
    group = grid.group
    q = q or QuasiNorm(group)
    rng = np.random.default_rng(seed)
    per = int(math.ceil(count / len(scales)))
    hs = np.asarray(grid.spacing)
    pairs = []
    for k in scales:
        om = unit_sphere_samples(q, per, rng)
        rad = unit * 2.0 ** k
        for w in om:
            h = w * rad ** group.weight_array
            h = np.round(h / hs) * hs
            if not np.any(h):
                h = np.zeros(group.n)
                h[int(np.argmax(np.abs(w)))] = hs[int(np.argmax(np.abs(w)))]
            u = np.round(rng.uniform(-2, 2, group.n)) * hs
            yp = group_product(u, -h, group)
            pairs.append((u, yp))
    return pairs[:count]


# L^p and weak (1,1) probes -----------------------------------------------------------------
def probe_family(grid, count=24, seed=0, scales=None):
    """Deterministic list of test functions.

    Cycles through dilated Gaussians at several scales, modulated
    Gaussians and seeded random fields; a prefix of the list is the family
    of smaller size.
    """
    group = grid.group
    x = grid.coords()
    rng = np.random.default_rng(seed)
    q = QuasiNorm(group)
    if scales is None:
        hmin = min(grid.spacing)
        Lmin = min(e ** (1.0 / v) for e, v in zip(grid.extents, group.weights))
        kmin = math.ceil(math.log2(4 * hmin))
        kmax = math.floor(math.log2(Lmin / 4))
        scales = [2.0 ** k for k in range(kmin, max(kmin, kmax) + 1)]
    out = []
    i = 0
    while len(out) < count:
        kind = i % 3
        r = scales[(i // 3) % len(scales)]
        y = x * (1.0 / r) ** group.weight_array
        g = np.exp(-np.sum(y * y, axis=-1))
        if kind == 0:
            out.append(GridFunction(g, grid))
        elif kind == 1:
            xi = rng.uniform(-1, 1, group.n) * (np.pi / np.asarray(grid.spacing)) * 0.5
            out.append(GridFunction(g * np.exp(1j * (x @ xi)), grid))
        else:
            noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
            out.append(GridFunction(noise * np.exp(-0.5 * np.sum(y * y, axis=-1)) if grid.mode == "box" else noise,
                                    grid))
        i += 1
    return out


def _margin_mask(grid, margin):
    if grid.mode == "periodic" or margin <= 0:
        return None
    return ~grid.boundary_mask(margin)


def lp_opnorm_probe(sigma: Symbol, p, family=None, seed=0, count=24, margin=2, workers=None) -> float:
    """Lower bound ``max ||T phi||_p / ||phi||_p`` over a test family.

    For ``p = 2`` on abelian grids the exact norm ``max |sigma|`` is
    returned. On box grids a ``margin``-cell boundary band is left out of
    both norms.
    """
    p = float(p)
    if not 1.0 < p < math.inf:
        raise ValueError("p must lie in (1, inf)")
    if sigma.abelian and p == 2.0:
        return float(np.max(np.abs(sigma.field())))
    grid = sigma.grid
    family = probe_family(grid, count, seed) if family is None else family
    mask = _margin_mask(grid, margin)

    def ratio(phi):
        den = weighted_lp_norm(phi, p, mask=mask)
        if den == 0:
            return 0.0
        return weighted_lp_norm(sigma.apply(phi), p, mask=mask) / den

    return float(max(pmap(ratio, family, workers)))


def weak_l1_quasinorm(g: GridFunction, mask=None) -> float:
    """``sup_alpha alpha |{|g| > alpha}|``, exact for grid functions."""
    a = np.abs(g.values)
    if mask is not None:
        a = a[mask]
    v = np.sort(a.ravel())[::-1]
    counts = np.arange(1, v.size + 1)
    return float(np.max(v * counts) * g.grid.cellvol) if v.size else 0.0


def weak11_probe(sigma: Symbol, f_set, alpha_grid=None, margin=2) -> float:
    """``sup alpha |{|T f| > alpha}| / ||f||_1`` over ``f_set`` and ``alpha``.

    With ``alpha_grid=None`` the sup over ``alpha`` is exact (taken at the
    values of ``|T f|``).
    """
    f_set = list(f_set)
    if not f_set:
        raise ValueError("f_set is empty")
    grid = sigma.grid
    mask = _margin_mask(grid, margin)
    best = 0.0
    for f in f_set:
        g = sigma.apply(f)
        n1 = weighted_lp_norm(f, 1, mask=mask)
        if n1 == 0:
            continue
        if alpha_grid is None:
            w = weak_l1_quasinorm(g, mask)
        else:
            a = np.abs(g.values) if mask is None else np.abs(g.values[mask])
            w = max(float(al) * float(np.count_nonzero(a > al)) * grid.cellvol for al in alpha_grid)
        best = max(best, w / n1)
    return float(best)


def spikes(grid, widths, center=None):
    """Normalized Gaussian spikes ``exp(-|D_{1/w} x|^2)`` of the given widths."""
    group = grid.group
    x = grid.coords()
    if center is not None:
        x = x - np.asarray(center)
    out = []
    for w in widths:
        y = x * (1.0 / w) ** group.weight_array
        out.append(GridFunction(np.exp(-np.sum(y * y, axis=-1)), grid))
    return out
