"""Sobolev norms on the dual, dyadic partitions, local-uniform and Mihlin norms.

Every ``H^s`` quantity is computed on the kernel side, as
``||(1 + |x|)^s kappa||_{L^2(G)}``, so abelian and non-abelian grids share one
code path. Dual-side formulas appear only as oracles.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import beta as beta_fn

from ._parallel import pmap
from .group import QuasiNorm, hom_degree, iso_length, mihlin_order, multi_indices
from .lattice import (
    GridFunction,
    convolution_matrix,
    fourier_transform,
    polar_measure_estimate,
    weight,
    weighted_lp_norm,
)
from .rockland import DiscretizedRockland, spectral_values
from .symbols import (
    FieldSymbol,
    SpectralSymbol,
    Symbol,
    boundary_fraction,
    monomial,
    top_singular_value,
    product,
)

__all__ = [
    "default_bump",
    "LogBump",
    "DyadicPartition",
    "build_dyadic_partition",
    "hs_norm",
    "hs_integer_norm",
    "dilation_bound",
    "LocalUniformNormReport",
    "default_r_grid",
    "lu_norm",
    "lu_equivalence_probe",
    "MihlinReport",
    "mihlin_norm",
    "sobolev_embedding_margin",
    "algebra_margin",
    "difference_continuity_ratio",
]


class LogBump:
    """Smooth bump ``exp(p (1 - 1/(1 - t^2)))`` in ``t = (log2 lam - c) / w``.

    Supported exactly on ``[2^(c - w), 2^(c + w)]`` and equal to 1 at ``2^c``.
    The default (``c = 0``, ``w = 1``, ``p = 1``) is the standard bump on
    ``[1/2, 2]``.
    """

    def __init__(self, center=0.0, halfwidth=1.0, power=1.0):
        if halfwidth <= 0 or power <= 0:
            raise ValueError("halfwidth and power must be positive")
        self.center = float(center)
        self.halfwidth = float(halfwidth)
        self.power = float(power)

    @property
    def support(self):
        return 2.0 ** (self.center - self.halfwidth), 2.0 ** (self.center + self.halfwidth)

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        out = np.zeros(lam.shape)
        pos = lam > 0
        t = np.zeros(lam.shape)
        t[pos] = (np.log2(lam[pos]) - self.center) / self.halfwidth
        inside = pos & (np.abs(t) < 1.0)
        ti = t[inside]
        out[inside] = np.exp(self.power * (1.0 - 1.0 / (1.0 - ti * ti)))
        return out

    def __repr__(self):
        return "LogBump(center=%g, halfwidth=%g, power=%g)" % (self.center, self.halfwidth, self.power)


default_bump = LogBump()


class DyadicPartition:
    """Pieces ``psi_j = eta_j^2 / alpha`` with ``eta_j(lam) = eta(2^(-j c_o) lam)``.

    ``alpha = sum_j eta_j^2`` is positive on ``(0, inf)`` as soon as the
    dilated support ``2^(c_o) (lo, hi)`` overlaps ``(lo, hi)``, and then the
    ``psi_j`` sum to one.
    """

    def __init__(self, eta=None, c_o=1.0):
        eta = default_bump if eta is None else eta
        c_o = float(c_o)
        if not c_o > 0:
            raise ValueError("c_o must be positive")
        lo, hi = getattr(eta, "support", (0.5, 2.0))
        if not 2.0 ** c_o * lo < hi:
            raise ValueError("c_o=%g leaves gaps: 2^c_o (%g, %g) does not meet (%g, %g)"
                             % (c_o, lo, hi, lo, hi))
        self.eta = eta
        self.c_o = c_o
        self.support = (lo, hi)
        probe = 2.0 ** np.linspace(0.0, c_o, 2049)
        if not np.min(self.alpha(probe)) > 0:
            raise ValueError("alpha vanishes somewhere; c_o=%g too large for this bump" % c_o)

    def _jrange(self, lam):
        lo, hi = self.support
        l2 = np.log2(np.max(lam)), np.log2(np.min(lam))
        jmin = int(math.floor((l2[1] - math.log2(hi)) / self.c_o)) - 1
        jmax = int(math.ceil((l2[0] - math.log2(lo)) / self.c_o)) + 1
        return range(jmin, jmax + 1)

    def eta_j(self, j, lam):
        return self.eta(2.0 ** (-j * self.c_o) * np.asarray(lam, dtype=float))

    def alpha(self, lam):
        lam = np.asarray(lam, dtype=float)
        out = np.zeros(lam.shape)
        pos = lam > 0
        if not np.any(pos):
            return out
        # alpha(2^c_o lam) = alpha(lam): reduce to one period first
        t = np.log2(lam[pos]) / self.c_o
        lp = 2.0 ** (self.c_o * (t - np.floor(t)))
        acc = np.zeros(lp.shape)
        for j in self._jrange(np.array([1.0, 2.0 ** self.c_o])):
            acc += self.eta_j(j, lp) ** 2
        out[pos] = acc
        return out

    def psi(self, j, lam):
        lam = np.asarray(lam, dtype=float)
        a = self.alpha(lam)
        e = self.eta_j(j, lam) ** 2
        return np.divide(e, a, out=np.zeros(lam.shape), where=a > 0)

    def psi_function(self, j):
        return lambda lam, j=j: self.psi(j, lam)

    def partition_defect(self, lam):
        """``max |sum_j psi_j(lam) - 1|`` over the given positive values."""
        lam = np.asarray(lam, dtype=float)
        tot = np.zeros(lam.shape)
        for j in self._jrange(lam):
            tot += self.psi(j, lam)
        return float(np.max(np.abs(tot - 1.0)))


def build_dyadic_partition(eta=None, c_o=1.0) -> DyadicPartition:
    return DyadicPartition(eta, c_o)


# H^s norms --------------------------------------------------------------------
def _warn_truncation(kern: GridFunction, s, q, what):
    w = kern * weight(kern.grid, s, q)
    frac = boundary_fraction(w)
    if frac > 0.01:
        warnings.warn("%s: %.1f%% of the weighted kernel lies in the boundary band" % (what, 100 * frac),
                      RuntimeWarning, stacklevel=3)
    return frac


def hs_norm(sigma, s=0.0, q: QuasiNorm | None = None, check=False) -> float:
    """``||sigma||_{H^s} = ||(1 + |.|_q)^s kappa||_{L^2(G)}``.

    ``sigma`` may be a :class:`Symbol` or a kernel :class:`GridFunction`.
    """
    kern = sigma.kernel() if isinstance(sigma, Symbol) else sigma
    if s < 0:
        raise ValueError("s must be non-negative")
    if check:
        _warn_truncation(kern, s, q, "hs_norm")
    return weighted_lp_norm(kern, 2, s, q)


def hs_integer_norm(sigma, s: int, check_divisible=True) -> float:
    """``sum_{[alpha] <= s} ||Delta^alpha sigma||_{L^2}``.

    Equivalent to the ``H^s`` norm only when ``s`` is divisible by every
    weight; other ``s`` are rejected unless ``check_divisible=False``, which
    exists to exhibit the failure of the equivalence.
    """
    kern = sigma.kernel() if isinstance(sigma, Symbol) else sigma
    g = kern.grid.group
    if not float(s).is_integer() or s < 0:
        raise ValueError("s must be a non-negative integer")
    s = int(s)
    bad = [v for v in g.weights if s % v]
    if bad and check_divisible:
        raise ValueError("s=%d is not divisible by the weights %s: without divisibility the sum over "
                         "[alpha] <= s is not an equivalent H^s norm (translated-bump families separate them)"
                         % (s, bad))
    total = 0.0
    for alpha in multi_indices(g.n, s):
        if hom_degree(alpha, g) <= s:
            total += weighted_lp_norm(kern * monomial(kern.grid, alpha), 2)
    return total


def dilation_bound(sigma: Symbol, r, s, q: QuasiNorm | None = None) -> dict:
    """Both sides of ``||sigma o D_r||_{H^s} <= (1 + r)^s r^(-Q/2) ||sigma||_{H^s}``.

    The dilated symbol is realized on the dilated lattice, where the
    inequality reduces to a pointwise weight comparison.
    """
    Q = sigma.grid.group.Q
    sd = sigma.dilate_lattice(r)
    qd = None if q is None else QuasiNorm(sd.grid.group, q.kind, q.func)
    lhs = hs_norm(sd, s, qd)
    base = hs_norm(sigma, s, q)
    rhs = (1.0 + r) ** s * r ** (-Q / 2.0) * base
    return {"lhs": lhs, "rhs": rhs, "margin": rhs - lhs}


# local-uniform norms ------------------------------------------------------------
@dataclass
class LocalUniformNormReport:
    side: str
    s: float
    r_values: list
    values: list
    sup: float = field(init=False)
    argsup: float = field(init=False)

    def __post_init__(self):
        i = int(np.argmax(self.values))
        self.sup = float(self.values[i])
        self.argsup = float(self.r_values[i])

    def as_dict(self):
        return {"side": self.side, "s": self.s, "sup": self.sup, "argsup": self.argsup,
                "r": [float(r) for r in self.r_values], "value": [float(v) for v in self.values]}


def default_r_grid(R: DiscretizedRockland, K=12, c_o=1.0):
    """``{2^(k c_o / nu) : |k| <= K}``."""
    return [2.0 ** (k * c_o / R.nu) for k in range(-K, K + 1)]


def localized(sigma: Symbol, r, eta, R: DiscretizedRockland, side="right") -> Symbol:
    """``sigma(r.pi) eta(pi(R))`` (right) or ``eta(pi(R)) sigma(r.pi)`` (left)."""
    bump = SpectralSymbol(R, eta, name="eta(R)", zero_value=0.0)
    sr = sigma.dilate(r)
    if side == "right":
        return product(sr, bump)
    if side == "left":
        return product(bump, sr)
    raise ValueError("side must be 'left' or 'right'")


def lu_norm(sigma: Symbol, side="right", s=0.0, eta=None, R: DiscretizedRockland = None, r_grid=None,
            q: QuasiNorm | None = None, K=12, c_o=1.0, workers=None) -> LocalUniformNormReport:
    """Local-uniform ``H^s`` norm ``sup_r ||sigma(r.pi) eta(pi(R))||_{H^s}`` over ``r_grid``.

    ``side='left'`` places ``eta(pi(R))`` on the left. The default grid is
    ``{2^(k c_o / nu) : |k| <= K}``.
    """
    if R is None:
        raise ValueError("a Rockland operator is required")
    eta = default_bump if eta is None else eta
    if r_grid is None:
        r_grid = default_r_grid(R, K, c_o)
    r_grid = [float(r) for r in r_grid]
    if not r_grid:
        raise ValueError("empty r grid")
    vals = pmap(lambda r: hs_norm(localized(sigma, r, eta, R, side), s, q), r_grid, workers)
    return LocalUniformNormReport(side, float(s), r_grid, [float(v) for v in vals])


def lu_equivalence_probe(family, pair1, pair2, s, side="right", q=None, K=12, c_o=1.0, workers=None) -> dict:
    """Ratios of local-uniform norms under two ``(eta, R)`` pairs across a family.

    Returns per-member ratios, their min and max, and ``spread = max / min``.
    """
    family = list(family)
    if not family:
        raise ValueError("family is empty")
    (eta1, R1), (eta2, R2) = pair1, pair2
    ratios = []
    for sig in family:
        a = lu_norm(sig, side, s, eta1, R1, q=q, K=K, c_o=c_o, workers=workers).sup
        b = lu_norm(sig, side, s, eta2, R2, q=q, K=K, c_o=c_o, workers=workers).sup
        ratios.append(a / b)
    ratios = np.asarray(ratios)
    return {"ratios": ratios.tolist(), "min": float(ratios.min()), "max": float(ratios.max()),
            "spread": float(ratios.max() / ratios.min())}


# Mihlin norms ---------------------------------------------------------------------
@dataclass
class MihlinReport:
    N: int
    table: list  # rows (alpha, [alpha], left, right)
    left_sum: float = field(init=False)
    right_sum: float = field(init=False)
    converged: bool = True
    residual: float = 0.0

    def __post_init__(self):
        self.left_sum = float(sum(r[2] for r in self.table))
        self.right_sum = float(sum(r[3] for r in self.table))

    def as_dict(self):
        return {"N": self.N, "left_sum": self.left_sum, "right_sum": self.right_sum,
                "converged": self.converged, "residual": self.residual,
                "table": [{"alpha": list(a), "hom_deg": d, "left": l, "right": r} for a, d, l, r in self.table]}


def _powers(R, beta):
    return lambda lam: np.power(lam, beta)


def _dual_samples(group, K, M, n_dir, seed):
    n = group.n
    q = QuasiNorm(group)
    if n == 1:
        omega = np.array([[1.0], [-1.0]])
    elif n == 2:
        th = (np.arange(n_dir) + 0.5) * (2 * np.pi / n_dir)
        g = np.stack([np.cos(th), np.sin(th)], axis=-1)
        omega = g * (1.0 / q(g)[:, None]) ** group.weight_array
    else:
        g = np.random.default_rng(seed).standard_normal((n_dir, n))
        omega = g * (1.0 / q(g)[:, None]) ** group.weight_array
    scales = 2.0 ** (np.arange(-K * M, K * M + 1) / M)
    pts = omega[None, :, :] * scales[:, None, None] ** group.weight_array
    return pts.reshape(-1, n)


def _real_apply(V, w, v):
    """``V diag(w) V^T v`` for real ``V``, ``w`` without casting ``V`` to complex."""
    X = np.stack([v.real, v.imag], axis=-1)
    Y = V @ (w[:, None] * (V.T @ X))
    return Y[:, 0] + 1j * Y[:, 1]


def mihlin_norm(sigma: Symbol, R: DiscretizedRockland, N=None, method="auto", seed=0, maxiter=200, tol=1e-8,
                K=20, M=256, n_dir=64, workers=None, solver="lanczos") -> MihlinReport:
    """Mihlin sums ``sum_{|alpha| <= N} sup ||pi(R)^([alpha]/nu) Delta^alpha sigma||`` and the mirrored sum.

    ``method='kernel'`` (abelian) takes the max over the dual grid of
    ``a^([alpha]/nu) |F(x^alpha kappa)|``. ``method='analytic'`` needs a
    closed-form :class:`FieldSymbol` and takes the max of
    ``a^([alpha]/nu) |(i d_xi)^alpha sigma|`` over a dilation-closed
    log-polar frequency set (``2 K M + 1`` scales times ``n_dir``
    directions). On box grids the terms are operator norms of
    ``R^([alpha]/nu) o Conv(x^alpha kappa)`` (left) and of the reversed
    composition (right), by Lanczos (``solver='lanczos'``) or power
    iteration (``solver='power'``).
    """
    g = sigma.grid
    group = g.group
    N = mihlin_order(group.weights) if N is None else int(N)
    alphas = multi_indices(group.n, N)
    nu = R.nu
    if method == "auto":
        if not sigma.abelian:
            method = "operator"
        elif isinstance(sigma, FieldSymbol) and sigma.expr is not None:
            method = "analytic"
        else:
            method = "kernel"

    if method == "analytic":
        import sympy

        from .symbols import _xi_symbols

        pts = _dual_samples(group, K, M, n_dir, seed)
        a = np.zeros(pts.shape[0])
        for j, (pw, c) in enumerate(zip(R.powers, R.coefficients)):
            if pw:
                a += c * pts[:, j] ** (2 * pw)
        syms = _xi_symbols(group.n)
        rows = []
        for alpha in alphas:
            d = sigma.dual_difference(alpha).expr
            fn = sympy.lambdify(syms, d, "numpy")
            with np.errstate(all="ignore"):
                v = np.asarray(fn(*[pts[:, j] for j in range(group.n)]), dtype=complex)
            v = np.broadcast_to(v, a.shape)
            hd = hom_degree(alpha, group)
            val = float(np.max(a ** (hd / nu) * np.abs(v)))
            rows.append((tuple(alpha), hd, val, val))
        return MihlinReport(N, rows)

    kern = sigma.kernel()
    if method == "kernel":
        lam = R.symbol

        def term(alpha):
            hd = hom_degree(alpha, group)
            D = fourier_transform(kern * monomial(g, alpha))
            w = spectral_values(_powers(R, hd / nu), lam, 0.0, None if hd == 0 else 0.0)
            val = float(np.max(np.abs(w * D)))
            return (tuple(alpha), hd, val, val)

        return MihlinReport(N, pmap(term, alphas, workers))

    if method != "operator":
        raise ValueError("unknown method %r" % method)
    lam, V = R.eigenvalues, R.eigenvectors
    tol0 = R.zero_tol()
    shape = g.shape
    rows, conv_ok, worst = [], True, 0.0
    for alpha in alphas:
        hd = hom_degree(alpha, group)
        C = convolution_matrix(kern * monomial(g, alpha))
        CH = C.conj().T
        if hd == 0:
            w = None
        else:
            w = spectral_values(_powers(R, hd / nu), lam, tol0, 0.0).real
        B = (lambda v: v) if w is None else (lambda v, w=w: _real_apply(V, w, v))
        vals = []
        for order in ("left", "right"):
            if order == "left":
                mv = lambda v: B(C @ v.ravel()).reshape(shape)
                rv = lambda v: (CH @ B(v.ravel())).reshape(shape)
            else:
                mv = lambda v: (C @ B(v.ravel())).reshape(shape)
                rv = lambda v: B(CH @ v.ravel()).reshape(shape)
            val, res, it, ok = top_singular_value(mv, rv, shape, solver, seed, maxiter, tol)
            conv_ok &= ok
            worst = max(worst, res)
            vals.append(val)
        rows.append((tuple(alpha), hd, float(vals[0]), float(vals[1])))
    rep = MihlinReport(N, rows)
    rep.converged = bool(conv_ok)
    rep.residual = float(worst)
    if not conv_ok:
        warnings.warn("singular value solver did not converge (residual %.2e)" % worst,
                      RuntimeWarning, stacklevel=2)
    return rep


# embedding and algebra -------------------------------------------------------------
def sobolev_embedding_margin(sigma, s, q: QuasiNorm | None = None) -> dict:
    """Check ``||kappa||_1 <= C ||sigma||_{H^s}`` with ``C = ||(1 + |.|)^(-s)||_2``.

    ``C`` is the grid value of the weight norm, which makes the inequality
    exact Cauchy-Schwarz on the grid. The continuum value
    ``sigma(S) B(Q, 2s - Q)`` is reported alongside when the unit ball fits.
    """
    kern = sigma.kernel() if isinstance(sigma, Symbol) else sigma
    g = kern.grid
    Q = g.group.Q
    if not s > Q / 2.0:
        raise ValueError("the embedding needs s > Q/2 = %g" % (Q / 2.0))
    lhs = weighted_lp_norm(kern, 1)
    w = weight(g, -s, q)
    C = float(np.sqrt(np.sum(w * w) * g.cellvol))
    rhs = C * hs_norm(kern, s, q)
    out = {"lhs": lhs, "C": C, "rhs": rhs, "margin": rhs - lhs, "sup_sigma": None}
    try:
        pm = polar_measure_estimate(q or QuasiNorm(g.group), g)
        out["C_continuum"] = float(np.sqrt(pm["sphere_measure"] * beta_fn(Q, 2 * s - Q)))
    except ValueError:
        out["C_continuum"] = None
    if g.mode == "periodic":
        out["sup_sigma"] = float(np.max(np.abs(fourier_transform(kern))))
    return out


def algebra_margin(sigma: Symbol, tau: Symbol, s, q: QuasiNorm | None = None, triangle_constant=None) -> dict:
    """Check ``||sigma tau||_{H^s} <= C (||sigma||_{H^s} ||F^-1 tau||_1 + ||F^-1 sigma||_1 ||tau||_{H^s})``.

    ``C = max(c, 1)^s 2^max(s - 1, 0)`` comes from the weight inequality
    with the quasi-norm triangle constant ``c`` (probed when not given).
    """
    from .group import quasinorm_constants_probe

    g = sigma.grid
    q = q or QuasiNorm(g.group)
    if triangle_constant is None:
        triangle_constant = quasinorm_constants_probe(q, samples=10_000, seed=0).triangle
    C = max(triangle_constant, 1.0) ** s * 2.0 ** max(s - 1.0, 0.0)
    ks, kt = sigma.kernel(), tau.kernel()
    prod_k = sigma.apply(kt)  # kernel of sigma tau is kappa_tau * kappa_sigma
    lhs = weighted_lp_norm(prod_k, 2, s, q)
    rhs = C * (weighted_lp_norm(ks, 2, s, q) * weighted_lp_norm(kt, 1)
               + weighted_lp_norm(ks, 1) * weighted_lp_norm(kt, 2, s, q))
    return {"lhs": lhs, "rhs": rhs, "C": C, "margin": rhs - lhs}


def difference_continuity_ratio(sigma: Symbol, alpha, s, q: QuasiNorm | None = None) -> float:
    """``||Delta^alpha sigma||_{H^s} / ||sigma||_{H^(s + [alpha])}``."""
    kern = sigma.kernel()
    hd = hom_degree(alpha, kern.grid.group)
    num = weighted_lp_norm(kern * monomial(kern.grid, alpha), 2, s, q)
    den = weighted_lp_norm(kern, 2, s + hd, q)
    return num / den
