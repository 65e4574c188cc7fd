"""Uniform grids over the exponential chart and functions sampled on them."""

from __future__ import annotations

import itertools
import json
import math
import threading
import warnings
from pathlib import Path
from typing import Callable

import numpy as np

from .group import GradedGroup, QuasiNorm, group_product, invariant_field_matrix

__all__ = [
    "Grid",
    "GridFunction",
    "sample",
    "delta",
    "convolve",
    "convolution_matrix",
    "interpolate",
    "interpolation_operator",
    "integrate",
    "fourier_transform",
    "inverse_fourier_transform",
    "freq_cellvol",
    "weighted_lp_norm",
    "young_ratio",
    "weight",
    "apply_vector_field",
    "apply_field",
    "polar_measure_estimate",
    "mean_value_probe",
    "save_gridfunction",
    "load_gridfunction",
    "export_slice_csv",
    "DEFAULT_MAX_POINTS",
]

DEFAULT_MAX_POINTS = 1 << 21


class Grid:
    """Origin-centred uniform grid.

    Axis ``j`` carries the points ``x_i = (i - m_j // 2) h_j`` for
    ``i = 0, ..., m_j - 1`` with spacing ``h_j = 2 L_j / m_j``, so the origin
    is always the grid point with index ``m_j // 2``.

    Parameters
    ----------
    group : GradedGroup
    extents : float or sequence of float
        Half-widths ``L_j``.
    points : int or sequence of int
        Point counts ``m_j >= 4``.
    mode : {'periodic', 'box'}
        ``'periodic'`` wraps around (abelian groups only); ``'box'`` is a
        truncated box with zero extension.
    max_points : int
        Budget for the total number of points.
    """

    def __init__(self, group: GradedGroup, extents, points, mode="periodic", max_points=DEFAULT_MAX_POINTS):
        n = group.n
        L = np.broadcast_to(np.asarray(extents, dtype=float), (n,)).copy()
        m = np.broadcast_to(np.asarray(points), (n,)).copy()
        if np.any(L <= 0):
            raise ValueError("extents must be positive")
        if np.any(m < 4) or not np.all(np.equal(np.mod(m, 1), 0)):
            raise ValueError("each axis needs an integer point count >= 4")
        if mode not in ("periodic", "box"):
            raise ValueError("mode must be 'periodic' or 'box'")
        if mode == "periodic" and not group.is_abelian:
            raise ValueError("periodic grids are only compatible with abelian group laws")
        total = int(np.prod(m.astype(np.int64)))
        if total > max_points:
            raise ValueError("grid has %d points: budget exceeded (max_points=%d)" % (total, max_points))
        self.group = group
        self.extents = tuple(float(v) for v in L)
        self.points = tuple(int(v) for v in m)
        self.mode = mode
        self.max_points = int(max_points)

    @property
    def n(self):
        return self.group.n

    @property
    def shape(self):
        return self.points

    @property
    def size(self):
        return int(np.prod(self.points))

    @property
    def spacing(self):
        return tuple(2.0 * L / m for L, m in zip(self.extents, self.points))

    @property
    def cellvol(self):
        return float(np.prod(self.spacing))

    @property
    def origin_index(self):
        return tuple(m // 2 for m in self.points)

    @property
    def key(self):
        return (self.group.key, self.extents, self.points, self.mode)

    def __eq__(self, other):
        return isinstance(other, Grid) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return "Grid(%s, extents=%s, points=%s, mode=%r)" % (
            self.group.name or self.group.weights, self.extents, self.points, self.mode)

    def axes(self):
        return [(np.arange(m) - m // 2) * h for m, h in zip(self.points, self.spacing)]

    def coords(self):
        """Array of shape ``(*shape, n)`` with the coordinates of every point."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def freq_axes(self):
        """Angular frequencies in the same centred order as :meth:`axes`."""
        return [(np.arange(m) - m // 2) * (2.0 * np.pi / (m * h)) for m, h in zip(self.points, self.spacing)]

    def freq_coords(self):
        mesh = np.meshgrid(*self.freq_axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def dilate(self, r):
        """Grid whose extents are scaled by ``r**v_j``; point counts unchanged.

        ``D_r`` maps the points of ``self`` exactly onto the points of the
        result.
        """
        r = float(r)
        if not r > 0:
            raise ValueError("dilation factor must be positive")
        L = [e * r ** v for e, v in zip(self.extents, self.group.weights)]
        return Grid(self.group, L, self.points, self.mode, self.max_points)

    def refine(self, factor=2):
        """Same extents, ``factor`` times as many points per axis."""
        return Grid(self.group, self.extents, [m * factor for m in self.points], self.mode,
                    max(self.max_points, self.size * factor ** self.n))

    def boundary_mask(self, width=1):
        """Boolean mask of points within ``width`` cells of the box faces."""
        mask = np.zeros(self.shape, dtype=bool)
        for ax, m in enumerate(self.points):
            idx = [slice(None)] * self.n
            idx[ax] = np.r_[0:width, m - width:m]
            mask[tuple(idx)] = True
        return mask


class GridFunction:
    """Complex samples on a grid.

    Parameters
    ----------
    values : array_like
        Array of shape ``grid.shape`` (a flat array of matching length is
        reshaped).
    grid : Grid
    source : callable, optional
        Function the samples were drawn from; used for exact off-grid
        evaluation when available.
    """

    __array_priority__ = 1000

    def __init__(self, values, grid: Grid, source: Callable | None = None):
        v = np.asarray(values)
        if v.size != grid.size:
            raise ValueError("value array has %d entries, grid has %d points" % (v.size, grid.size))
        v = v.reshape(grid.shape)
        if not np.iscomplexobj(v):
            v = v.astype(complex)
        v = v.copy()
        v.setflags(write=False)
        self.values = v
        self.grid = grid
        self.source = source

    def __repr__(self):
        return "GridFunction(%r)" % (self.grid,)

    def _like(self, values):
        return GridFunction(values, self.grid)

    def _other(self, other):
        if isinstance(other, GridFunction):
            _check_same_grid(self, other)
            return other.values
        return other

    def __add__(self, other):
        return self._like(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._like(self.values - self._other(other))

    def __rsub__(self, other):
        return self._like(self._other(other) - self.values)

    def __mul__(self, other):
        return self._like(self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._like(self.values / self._other(other))

    def __neg__(self):
        return self._like(-self.values)

    def conj(self):
        return self._like(np.conj(self.values))

    def reflect(self):
        """``x -> f(x^{-1}) = f(-x)`` on the grid.

        For odd point counts this is exact; for even counts the unpaired
        extreme index is set to zero in box mode and wraps in periodic mode.
        """
        v = self.values
        out = v
        for ax, m in enumerate(self.grid.points):
            out = np.flip(out, axis=ax)
            if m % 2 == 0:
                out = np.roll(out, 1, axis=ax)
                if self.grid.mode == "box":
                    idx = [slice(None)] * self.grid.n
                    idx[ax] = 0
                    out = out.copy()
                    out[tuple(idx)] = 0.0
        return self._like(out)

    @property
    def real(self):
        return self.values.real

    def norm(self, p=2):
        return weighted_lp_norm(self, p)


def _check_same_grid(f, g):
    if f.grid != g.grid:
        raise ValueError("grid mismatch: %r vs %r" % (f.grid, g.grid))


def _as_callable(expr, n):
    if callable(expr):
        return expr
    import sympy

    syms = sympy.symbols(" ".join("x%d" % (j + 1) for j in range(n)))
    syms = syms if isinstance(syms, tuple) else (syms,)
    fn = sympy.lambdify(syms, sympy.sympify(expr), "numpy")

    def call(x):
        x = np.asarray(x, dtype=float)
        return np.asarray(fn(*[x[..., j] for j in range(n)]), dtype=complex) + 0.0 * x[..., 0]

    return call


def sample(expr, grid: Grid) -> GridFunction:
    """Evaluate ``expr`` at every grid point.

    ``expr`` is a callable taking an array of shape ``(..., n)`` or a sympy
    expression string in ``x1, ..., xn``.
    """
    fn = _as_callable(expr, grid.n)
    vals = np.asarray(fn(grid.coords()), dtype=complex)
    vals = np.broadcast_to(vals, grid.shape)
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite value encountered while sampling")
    return GridFunction(vals, grid, source=fn)


def delta(grid: Grid) -> GridFunction:
    """Discrete delta: ``1 / cellvol`` at the origin, zero elsewhere."""
    v = np.zeros(grid.shape, dtype=complex)
    v[grid.origin_index] = 1.0 / grid.cellvol
    return GridFunction(v, grid)


# interpolation --------------------------------------------------------------
def _stencil(grid: Grid, points, method="linear", exact_tol=1e-9):
    """Corner indices and weights of the interpolation stencil.

    Returns ``(lead_shape, corners)`` with ``corners`` a list of
    ``(flat_index, weight, valid)``; ``weight`` is None when no axis is
    interpolated and ``valid`` is None on periodic grids.
    """
    pts = np.asarray(points, dtype=float)
    lead = pts.shape[:-1]
    pts = pts.reshape(-1, grid.n)
    periodic = grid.mode == "periodic"
    base, frac = [], []
    for ax in range(grid.n):
        h, m = grid.spacing[ax], grid.points[ax]
        u = pts[:, ax] / h + m // 2
        if method == "nearest":
            i0 = np.floor(u + 0.5).astype(np.int64)
            t = np.zeros_like(u)
        elif method == "linear":
            i0 = np.floor(u).astype(np.int64)
            t = u - i0
            near = t > 1.0 - exact_tol
            i0[near] += 1
            t[near] = 0.0
            t[t < exact_tol] = 0.0
        else:
            raise ValueError("method must be 'linear' or 'nearest'")
        base.append(i0)
        frac.append(t)
    active = [ax for ax in range(grid.n) if np.any(frac[ax] != 0.0)]
    strides = np.cumprod((1,) + tuple(grid.points[::-1]))[:-1][::-1]
    corners = []
    for corner in range(1 << len(active)):
        flat = np.zeros(pts.shape[0], dtype=np.int64)
        valid = None if periodic else np.ones(pts.shape[0], dtype=bool)
        w = None
        for ax in range(grid.n):
            i = base[ax]
            if ax in active:
                bit = active.index(ax)
                if corner >> bit & 1:
                    i = i + 1
                    fw = frac[ax]
                else:
                    fw = 1.0 - frac[ax]
                w = fw if w is None else w * fw
            m = grid.points[ax]
            if periodic:
                i = np.mod(i, m)
            else:
                valid &= (i >= 0) & (i < m)
                i = np.clip(i, 0, m - 1)
            flat += i * strides[ax]
        corners.append((flat, w, valid))
    return lead, corners


def interpolate(f: GridFunction, points, method="linear", exact_tol=1e-9):
    """Evaluate grid samples at arbitrary points.

    Multilinear interpolation (``method='linear'``) or nearest neighbour
    (``'nearest'``). Stencil nodes outside a box grid count as 0; periodic
    grids wrap. Axes on which every point lies on a grid node are not
    interpolated.
    """
    lead, corners = _stencil(f.grid, points, method, exact_tol)
    flat_vals = f.values.ravel()
    out = 0.0
    for idx, w, valid in corners:
        v = flat_vals[idx]
        if valid is not None:
            v = np.where(valid, v, 0.0)
        out = out + (v if w is None else w * v)
    return np.asarray(out, dtype=complex).reshape(lead)


def interpolation_operator(grid: Grid, points, method="linear", exact_tol=1e-9):
    """Sparse matrix ``P`` with ``interpolate(f, points).ravel() = P @ f.values.ravel()``."""
    from scipy import sparse

    lead, corners = _stencil(grid, points, method, exact_tol)
    npts = int(np.prod(lead)) if lead else 1
    rows, cols, data = [], [], []
    ar = np.arange(npts)
    for idx, w, valid in corners:
        keep = np.ones(npts, dtype=bool) if valid is None else valid
        ww = np.ones(npts) if w is None else w
        keep = keep & (ww != 0.0)
        rows.append(ar[keep])
        cols.append(idx[keep])
        data.append(ww[keep])
    return sparse.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(npts, grid.size))


# convolution --------------------------------------------------------------
def convolve(f: GridFunction, g: GridFunction, method="auto") -> GridFunction:
    """Group convolution ``(f*g)(x) = int f(y) g(y^{-1} x) dy`` on the grid.

    Parameters
    ----------
    method : {'auto', 'fft', 'direct', 'interp', 'nearest'}
        ``'fft'`` is the exact circular convolution on periodic abelian
        grids; ``'direct'`` is the brute-force sum with the same wrap-around
        (oracle, small grids only). ``'interp'`` is a Riemann sum over ``y``
        with multilinear interpolation of ``g`` at ``y^{-1} x`` and is the
        only option on box grids. ``'nearest'`` is the nearest-neighbour
        variant of it.
    """
    _check_same_grid(f, g)
    grid = f.grid
    if method == "auto":
        method = "fft" if grid.mode == "periodic" else "interp"
    if method == "fft":
        if grid.mode != "periodic":
            raise ValueError("fft convolution needs a periodic grid")
        F = np.fft.fftn(np.fft.ifftshift(f.values))
        G = np.fft.fftn(np.fft.ifftshift(g.values))
        out = np.fft.fftshift(np.fft.ifftn(F * G)) * grid.cellvol
        return GridFunction(out, grid)
    if method == "direct":
        if grid.mode != "periodic":
            raise ValueError("direct circular sum needs a periodic grid")
        return GridFunction(_direct_circular(f.values, g.values) * grid.cellvol, grid)
    if method in ("interp", "nearest"):
        M = convolution_matrix(g, method="linear" if method == "interp" else "nearest")
        _support_warning(f, g)
        return GridFunction(M @ f.values.ravel(), grid)
    raise ValueError("unknown convolution method %r" % method)


def _direct_circular(a, b):
    shape = a.shape
    ca = np.fft.ifftshift(a)
    cb = np.fft.ifftshift(b)
    out = np.zeros(shape, dtype=complex)
    for idx in np.ndindex(shape):
        if ca[idx] == 0:
            continue
        out += ca[idx] * np.roll(cb, idx, axis=tuple(range(len(shape))))
    return np.fft.fftshift(out)


def _support_warning(f, g, width=1, frac=1e-3):
    mask = f.grid.boundary_mask(width)
    for h in (f, g):
        tot = np.sum(np.abs(h.values))
        if tot > 0 and np.sum(np.abs(h.values[mask])) > frac * tot:
            warnings.warn("convolution operand has mass near the truncated box boundary", RuntimeWarning)
            return


_CONV_OPS: dict = {}
_CONV_OP_LOCK = threading.Lock()
CONV_OP_MAX_NNZ = 2 ** 24


def _convolution_operator(grid: Grid, method):
    """Cached sparse map from kernel samples to the flattened convolution matrix."""
    key = (grid.key, method)
    with _CONV_OP_LOCK:
        op = _CONV_OPS.get(key)
        if op is None:
            pts = grid.coords().reshape(-1, grid.n)
            p = group_product(-pts[None, :, :], pts[:, None, :], grid.group)
            op = interpolation_operator(grid, p, method)
            _CONV_OPS.clear()
            _CONV_OPS[key] = op
    return op


def convolution_matrix(g: GridFunction, method="linear", chunk=256):
    """Dense matrix ``M`` with ``(f*g).ravel() = M @ f.ravel()``.

    Row ``x``, column ``y`` holds ``g(y^{-1} x) * cellvol``. On small grids
    the interpolation stencil is cached per grid, so repeated calls cost
    one sparse product.
    """
    grid = g.grid
    N = grid.size
    if N * N * (1 << grid.n) <= CONV_OP_MAX_NNZ:
        op = _convolution_operator(grid, method)
        return (op @ g.values.ravel()).reshape(N, N) * grid.cellvol
    pts = grid.coords().reshape(-1, grid.n)
    M = np.empty((N, N), dtype=complex)
    yinv = -pts
    for start in range(0, N, chunk):
        x = pts[start:start + chunk]
        p = group_product(yinv[None, :, :], x[:, None, :], grid.group)
        M[start:start + chunk] = interpolate(g, p, method=method)
    M *= grid.cellvol
    return M


# Fourier transform ----------------------------------------------------------
def fourier_transform(f: GridFunction) -> np.ndarray:
    """Riemann-sum transform ``f^(xi) = int f(x) exp(-i x.xi) dx``.

    Returned on :meth:`Grid.freq_coords` (centred order). Requires a periodic
    grid, on which the transform is a unitary map up to the Plancherel
    weight ``(2 pi)^{-n} d xi``.
    """
    g = f.grid
    if g.mode != "periodic":
        raise ValueError("the abelian transform needs a periodic grid")
    return np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(f.values))) * g.cellvol


def inverse_fourier_transform(F, grid: Grid) -> GridFunction:
    """Inverse of :func:`fourier_transform`."""
    if grid.mode != "periodic":
        raise ValueError("the abelian transform needs a periodic grid")
    F = np.broadcast_to(np.asarray(F, dtype=complex), grid.shape)
    return GridFunction(np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(F))) / grid.cellvol, grid)


def freq_cellvol(grid: Grid) -> float:
    """Volume of a dual-grid cell, ``prod 2 pi / (m_j h_j)``."""
    return float(np.prod([2.0 * np.pi / (m * h) for m, h in zip(grid.points, grid.spacing)]))


# norms ----------------------------------------------------------------------
def integrate(f: GridFunction):
    """Riemann sum of ``f`` (complex)."""
    return complex(np.sum(f.values) * f.grid.cellvol)


def weight(grid: Grid, s, q: QuasiNorm | None = None):
    """``(1 + |x|_q)^s`` on the grid."""
    if s == 0:
        return np.ones(grid.shape)
    if q is None:
        q = QuasiNorm(grid.group)
    return (1.0 + q(grid.coords())) ** s


def weighted_lp_norm(f: GridFunction, p=2, s=0.0, q: QuasiNorm | None = None, mask=None):
    """Riemann-sum ``||(1 + |.|_q)^s f||_p``; ``p = inf`` gives the max modulus.

    ``mask`` restricts the sum to a subset of points.
    """
    p = float(p)
    if p < 1:
        raise ValueError("p must lie in [1, inf]")
    a = np.abs(f.values) * weight(f.grid, s, q)
    if mask is not None:
        a = a[mask]
    if math.isinf(p):
        return float(np.max(a)) if a.size else 0.0
    if p == 1:
        return float(np.sum(a) * f.grid.cellvol)
    if p == 2:
        return float(np.sqrt(np.sum(a * a) * f.grid.cellvol))
    return float((np.sum(a ** p) * f.grid.cellvol) ** (1.0 / p))


def young_ratio(f: GridFunction, g: GridFunction, p, q, r, s=0.0, qn: QuasiNorm | None = None) -> float:
    """``||w_s (f*g)||_r / (||w_s f||_p ||w_s g||_q)`` with ``w_s = (1 + |.|)^s``.

    Young's exponents satisfy ``1 + 1/r = 1/p + 1/q``; other triples are
    rejected.
    """
    inv = lambda t: 0.0 if math.isinf(float(t)) else 1.0 / float(t)
    if abs(1.0 + inv(r) - inv(p) - inv(q)) > 1e-12:
        raise ValueError("Young exponents need 1 + 1/r = 1/p + 1/q")
    den = weighted_lp_norm(f, p, s, qn) * weighted_lp_norm(g, q, s, qn)
    if den == 0.0:
        return 0.0
    return weighted_lp_norm(convolve(f, g), r, s, qn) / den


# invariant vector fields ------------------------------------------------------
def _centered_diff(v, ax, h, periodic):
    if periodic:
        return (np.roll(v, -1, axis=ax) - np.roll(v, 1, axis=ax)) / (2.0 * h)
    pad = [(0, 0)] * v.ndim
    pad[ax] = (1, 1)
    w = np.pad(v, pad)
    sl_hi = [slice(None)] * v.ndim
    sl_lo = [slice(None)] * v.ndim
    sl_hi[ax] = slice(2, None)
    sl_lo[ax] = slice(0, -2)
    return (w[tuple(sl_hi)] - w[tuple(sl_lo)]) / (2.0 * h)


def apply_vector_field(f: GridFunction, j: int, side="left") -> GridFunction:
    """Apply ``X_j`` (left-invariant) or ``X~_j`` (right-invariant) to ``f``.

    The field is written as ``sum_k c_k(x) d_k`` and each ``d_k`` is a
    second-order centred difference with zero extension outside a box.
    """
    grid = f.grid
    periodic = grid.mode == "periodic"
    C = invariant_field_matrix(grid.coords(), grid.group, side)  # (..., n_field, n_coord)
    out = np.zeros(grid.shape, dtype=complex)
    for k in range(grid.n):
        coef = C[..., j, k]
        if not np.any(coef):
            continue
        out += coef * _centered_diff(f.values, k, grid.spacing[k], periodic)
    return GridFunction(out, grid)


def apply_field(f: GridFunction, alpha, side="left") -> GridFunction:
    """``X^alpha f = X_1^{a_1} ... X_n^{a_n} f`` (rightmost factor acts first)."""
    alpha = [int(a) for a in alpha]
    out = f
    for j in reversed(range(len(alpha))):
        for _ in range(alpha[j]):
            out = apply_vector_field(out, j, side)
    return out


# polar measure and mean value -----------------------------------------------
def polar_measure_estimate(q: QuasiNorm, grid: Grid, subsample=4) -> dict:
    """Estimate ``sigma(S) = Q |B_1|`` and the volume scaling exponent.

    ``ball_scaling_exponent`` is ``log2(|B_2| / |B_1|)``. Each cell is split
    into ``subsample**n`` sub-cells whose centres are tested, so the ball
    volumes are midpoint-rule integrals of the indicators. Raises if ``B_2``
    reaches the grid boundary.
    """
    x = grid.coords()
    if np.min(q(x[grid.boundary_mask(1)])) <= 2.0:
        raise ValueError("the ball of radius 2 exits the grid extent")
    k = int(subsample)
    offs = [((np.arange(k) + 0.5) / k - 0.5) * h for h in grid.spacing]
    b1 = b2 = 0
    for off in itertools.product(*offs):
        nx = q(x + np.asarray(off))
        b1 += np.count_nonzero(nx <= 1.0)
        b2 += np.count_nonzero(nx <= 2.0)
    vol = grid.cellvol / k ** grid.n
    b1, b2 = b1 * vol, b2 * vol
    Q = grid.group.Q
    return {"sphere_measure": Q * b1, "ball_volume": b1, "ball_scaling_exponent": math.log2(b2 / b1)}


def _translated(f: GridFunction, h, side):
    grid = f.grid
    x = grid.coords()
    h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    pts = group_product(x, h, grid.group) if side == "right" else group_product(h, x, grid.group)
    if f.source is not None:
        return np.asarray(f.source(pts), dtype=complex)
    return interpolate(f, pts)


def mean_value_probe(f: GridFunction, h, side="right", q: QuasiNorm | None = None) -> float:
    """Ratio ``||f - f(. h)||_1 / sum_l |h|^{v_l} ||X_l f||_1``.

    ``side='right'`` translates on the right and uses left-invariant fields;
    ``side='left'`` uses ``f(h .)`` and right-invariant fields. Every field
    ``X_1, ..., X_n`` enters the denominator. ``h = 0`` gives 0 by convention.
    """
    grid = f.grid
    h = np.asarray(h, dtype=float)
    if q is None:
        q = QuasiNorm(grid.group)
    nh = float(q(h))
    if nh == 0.0:
        return 0.0
    num = np.sum(np.abs(f.values - _translated(f, h, side))) * grid.cellvol
    fld = "left" if side == "right" else "right"
    den = 0.0
    for ell, v in enumerate(grid.group.weights):
        den += nh ** v * weighted_lp_norm(apply_vector_field(f, ell, fld), 1)
    return float(num / den) if den > 0 else math.inf


# file formats -----------------------------------------------------------------
def save_gridfunction(f: GridFunction, path) -> tuple[Path, Path]:
    """Write ``<path>.bin`` and ``<path>.json``.

    The binary file holds the values as little-endian complex128 (``<c16``)
    in C order. The JSON header records dimension, point counts, extents,
    mode, weights, dtype and byte order.
    """
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".bin", ".json") else path
    stem.parent.mkdir(parents=True, exist_ok=True)
    binp = stem.with_name(stem.name + ".bin")
    hdrp = stem.with_name(stem.name + ".json")
    np.ascontiguousarray(f.values, dtype="<c16").tofile(binp)
    g = f.grid
    header = {
        "dimension": g.n,
        "points": list(g.points),
        "extents": list(g.extents),
        "mode": g.mode,
        "group": g.group.to_dict(),
        "dtype": "complex128",
        "byte_order": "little",
        "order": "C",
    }
    hdrp.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return binp, hdrp


def load_gridfunction(path) -> GridFunction:
    from .group import descriptor_from_dict

    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".bin", ".json") else path
    header = json.loads(stem.with_name(stem.name + ".json").read_text(encoding="utf-8"))
    if header.get("byte_order", "little") != "little" or header.get("dtype") != "complex128":
        raise ValueError("unsupported grid function encoding")
    group = descriptor_from_dict(header["group"])
    n_pts = int(np.prod(header["points"]))
    grid = Grid(group, header["extents"], header["points"], header["mode"], max_points=max(n_pts, DEFAULT_MAX_POINTS))
    vals = np.fromfile(stem.with_name(stem.name + ".bin"), dtype="<c16")
    return GridFunction(vals, grid)


def export_slice_csv(f: GridFunction, path, axis=0, at=None):
    """Write a 1-D slice along ``axis`` through the point ``at`` (default origin).

    Columns: ``x,real,imag``; comma-delimited, UTF-8.
    """
    g = f.grid
    idx = list(g.origin_index if at is None else at)
    idx[axis] = slice(None)
    vals = f.values[tuple(idx)]
    xs = g.axes()[axis]
    lines = ["x,real,imag"]
    lines += ["%.17g,%.17g,%.17g" % (x, v.real, v.imag) for x, v in zip(xs, vals)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
