"""Symbols of Fourier multipliers and the operations acting on them.

A symbol ``sigma`` acts by ``T_sigma phi = phi * kappa`` where ``kappa`` is its
right convolution kernel. On abelian groups the transform is
``f^(xi) = int f(x) exp(-i x.xi) dx`` with Plancherel measure
``(2 pi)^{-n} d xi``. Products follow the operator order:
``sigma1 sigma2`` is the symbol of ``T_sigma1 T_sigma2`` and has kernel
``kappa2 * kappa1``. The difference operator ``Delta^alpha`` multiplies the
kernel by ``x^alpha``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from math import comb

import numpy as np

from .group import dilate_point, hom_degree
from .lattice import (
    Grid,
    GridFunction,
    convolve,
    delta,
    fourier_transform,
    freq_cellvol,
    interpolate,
    inverse_fourier_transform,
)
from .rockland import DiscretizedRockland, apply_invariant_op, spectral_values

__all__ = [
    "Symbol",
    "KernelSymbol",
    "FieldSymbol",
    "SpectralSymbol",
    "IdentitySymbol",
    "ProductSymbol",
    "AdjointSymbol",
    "ScaledSymbol",
    "transform_pair",
    "inverse",
    "apply_multiplier",
    "difference_op",
    "symbol_dilate",
    "adjoint_symbol",
    "leibniz_defect",
    "dual_l2_norm",
    "power_iteration",
    "top_singular_value",
    "l2_operator_norm",
    "TRUNCATION_THRESHOLD",
]

#: Share of a weighted kernel's mass in the outer band of the grid above
#: which truncation is flagged.
TRUNCATION_THRESHOLD = 0.01


def monomial(grid: Grid, alpha):
    x = grid.coords()
    out = np.ones(grid.shape)
    for j, a in enumerate(alpha):
        if a:
            out = out * x[..., j] ** int(a)
    return out


def boundary_fraction(f: GridFunction, band=None):
    """Share of ``sum |f|`` carried by the outer band of the grid."""
    g = f.grid
    if band is None:
        band = max(1, min(g.points) // 16)
    tot = float(np.sum(np.abs(f.values)))
    if tot == 0.0:
        return 0.0
    return float(np.sum(np.abs(f.values[g.boundary_mask(band)])) / tot)


class Symbol:
    """Base class. Subclasses provide :meth:`kernel` and :meth:`dilate`."""

    name = "symbol"
    degree = None  # declared homogeneity degree
    truncation_flag = False

    def __init__(self, grid: Grid):
        self.grid = grid

    @property
    def abelian(self):
        return self.grid.mode == "periodic"

    def kernel(self) -> GridFunction:
        raise NotImplementedError

    def field(self) -> np.ndarray:
        """Values on the abelian dual grid."""
        return fourier_transform(self.kernel())

    def apply(self, phi: GridFunction) -> GridFunction:
        """``T_sigma phi``."""
        if phi.grid != self.grid:
            raise ValueError("grid mismatch")
        if self.abelian:
            return inverse_fourier_transform(self.field() * fourier_transform(phi), self.grid)
        return convolve(phi, self.kernel())

    def dilate(self, r) -> "Symbol":
        """``sigma(r . pi)``, realized on the same grid."""
        return KernelSymbol.from_symbol(self).dilate(r)

    def dilate_lattice(self, r) -> "Symbol":
        """``sigma(r . pi)`` realized exactly on ``grid.dilate(r)``."""
        return KernelSymbol.from_symbol(self).dilate_lattice(r)

    def adjoint(self) -> "Symbol":
        return AdjointSymbol(self)

    def difference(self, alpha) -> "Symbol":
        """``Delta^alpha sigma`` through the kernel ``x^alpha kappa``."""
        alpha = tuple(int(a) for a in alpha)
        kern = self.kernel()
        if not any(alpha):
            return self
        out = KernelSymbol(kern * monomial(self.grid, alpha), name="D%s %s" % (alpha, self.name))
        frac = boundary_fraction(out.kernel())
        if frac > TRUNCATION_THRESHOLD:
            out.truncation_flag = True
            warnings.warn("difference operator: %.1f%% of x^alpha kappa lies in the boundary band" % (100 * frac),
                          RuntimeWarning, stacklevel=2)
        return out

    def scale(self, c) -> "Symbol":
        return ScaledSymbol(self, c)

    def __mul__(self, other):
        if isinstance(other, Symbol):
            return product(self, other)
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    def __repr__(self):
        return "%s(%r)" % (type(self).__name__, self.name)


class KernelSymbol(Symbol):
    """Symbol given by its kernel samples.

    Parameters
    ----------
    kernel : GridFunction
    source : callable, optional
        Exact kernel ``x -> kappa(x)``; makes same-grid dilation exact.
    """

    def __init__(self, kernel: GridFunction, name="kernel", source=None, degree=None):
        super().__init__(kernel.grid)
        self._kernel = kernel
        self.source = source if source is not None else kernel.source
        self.name = name
        self.degree = degree

    @classmethod
    def from_symbol(cls, s: Symbol):
        if isinstance(s, KernelSymbol):
            return s
        return cls(s.kernel(), name=s.name)

    def kernel(self):
        return self._kernel

    def dilate(self, r, method="auto"):
        """``r^{-Q} kappa(D_{1/r} x)`` on the same grid.

        Exact when a source function is known, otherwise multilinear
        interpolation (``method='interp'``).
        """
        r = _check_r(r)
        if r == 1.0:
            return self
        g = self.grid
        Q = g.group.Q
        pts = dilate_point(1.0 / r, g.coords(), g.group)
        if self.source is not None and method in ("auto", "exact"):
            src = self.source
            vals = r ** (-Q) * np.asarray(src(pts), dtype=complex)
            new_src = lambda x, src=src, r=r: r ** (-Q) * np.asarray(src(dilate_point(1.0 / r, x, g.group)),
                                                                         dtype=complex)
        else:
            vals = r ** (-Q) * interpolate(self._kernel, pts)
            new_src = None
        return KernelSymbol(GridFunction(vals, g), name="%s o D_%g" % (self.name, r), source=new_src,
                            degree=self.degree)

    def dilate_lattice(self, r):
        r = _check_r(r)
        g = self.grid.dilate(r)
        vals = r ** (-self.grid.group.Q) * self._kernel.values
        return KernelSymbol(GridFunction(vals, g), name="%s o D_%g" % (self.name, r), degree=self.degree)


class FieldSymbol(Symbol):
    """Abelian symbol stored as values on the dual grid.

    Parameters
    ----------
    grid : Grid
        Periodic grid.
    values : array_like, optional
        Samples on :meth:`Grid.freq_coords`.
    expr : str or sympy expression, optional
        Closed form in ``xi1, ..., xin``. Enables exact dilation by
        substitution and exact difference operators ``(i d_xi)^alpha``.
    """

    def __init__(self, grid: Grid, values=None, expr=None, name=None, degree=None):
        super().__init__(grid)
        if grid.mode != "periodic":
            raise ValueError("field symbols need a periodic (abelian) grid")
        self.expr = None
        if expr is not None:
            import sympy

            self.expr = sympy.sympify(expr, locals=_xi_locals(grid.n))
            values = _eval_expr(self.expr, grid)
        if values is None:
            raise ValueError("need values or expr")
        v = np.broadcast_to(np.asarray(values, dtype=complex), grid.shape).copy()
        v.setflags(write=False)
        self.values = v
        self.name = name or (str(self.expr) if self.expr is not None else "field")
        self.degree = degree

    def field(self):
        return self.values

    def kernel(self):
        return inverse_fourier_transform(self.values, self.grid)

    def dilate(self, r):
        r = _check_r(r)
        if self.expr is None:
            return super().dilate(r)
        syms = _xi_symbols(self.grid.n)
        sub = {s: s * r ** v for s, v in zip(syms, self.grid.group.weights)}
        return FieldSymbol(self.grid, expr=self.expr.xreplace(sub), name="%s o D_%g" % (self.name, r),
                           degree=self.degree)

    def dilate_lattice(self, r):
        r = _check_r(r)
        return FieldSymbol(self.grid.dilate(r), values=self.values, name="%s o D_%g" % (self.name, r),
                           degree=self.degree)

    def adjoint(self):
        if self.expr is not None:
            import sympy

            return FieldSymbol(self.grid, expr=sympy.conjugate(self.expr), name=self.name + "*", degree=self.degree)
        return FieldSymbol(self.grid, values=np.conj(self.values), name=self.name + "*", degree=self.degree)

    def dual_difference(self, alpha):
        """Exact ``(i d_xi)^alpha sigma`` from the closed form."""
        import sympy

        if self.expr is None:
            raise ValueError("dual-side differences need a closed-form symbol")
        e = self.expr
        for s, a in zip(_xi_symbols(self.grid.n), alpha):
            if a:
                e = sympy.diff(e, s, int(a))
        e = sympy.I ** int(sum(alpha)) * e
        return FieldSymbol(self.grid, expr=e, name="D%s %s" % (tuple(alpha), self.name))


class SpectralSymbol(Symbol):
    """``coef * pi(X)^alpha func(pi(R))``.

    The kernel is ``coef * X^alpha [func(R) delta_0]`` with left-invariant
    fields; on abelian grids the field is ``coef * (i xi)^alpha func(a(xi))``.
    Dilation is exact: ``sigma(r . pi)`` is
    ``r^[alpha] pi(X)^alpha func(r^nu pi(R))``.
    """

    def __init__(self, R: DiscretizedRockland, func, alpha=None, coef=1.0, name="spectral", degree=None,
                 zero_value=None):
        super().__init__(R.grid)
        self.R = R
        self.func = func
        self.alpha = tuple(int(a) for a in alpha) if alpha is not None else (0,) * R.grid.n
        self.coef = complex(coef)
        self.name = name
        self.degree = degree
        self.zero_value = zero_value

    def _poly(self):
        xi = self.grid.freq_coords()
        out = np.ones(self.grid.shape, dtype=complex)
        for j, a in enumerate(self.alpha):
            if a:
                out = out * (1j * xi[..., j]) ** a
        return out

    def field(self):
        if not self.abelian:
            raise ValueError("dual fields exist only on abelian grids")
        return self.coef * self._poly() * self.R.function_values(self.func, zero_value=self.zero_value)

    def kernel(self):
        if self.abelian:
            return inverse_fourier_transform(self.field(), self.grid)
        k = self.R.kernel(self.func, zero_value=self.zero_value)
        if any(self.alpha):
            k = apply_invariant_op(self.alpha, "left", k)
        return k * self.coef

    def apply(self, phi):
        if self.abelian:
            return super().apply(phi)
        out = self.R.apply_function(self.func, phi, zero_value=self.zero_value)
        if any(self.alpha):
            out = apply_invariant_op(self.alpha, "left", out)
        return out * self.coef

    def dilate(self, r):
        r = _check_r(r)
        if r == 1.0:
            return self
        nu = self.R.nu
        f = self.func
        g = lambda lam, f=f, t=r ** nu: f(t * lam)
        c = self.coef * r ** hom_degree(self.alpha, self.grid.group)
        return SpectralSymbol(self.R, g, self.alpha, c, name="%s o D_%g" % (self.name, r), degree=self.degree,
                              zero_value=self.zero_value)

    def times_function(self, func, zero_value=0.0):
        """``sigma * func(pi(R))`` as a spectral symbol."""
        f = self.func
        g = lambda lam, f=f, h=func: f(lam) * h(lam)
        zv = None
        if self.zero_value is not None or zero_value is not None:
            zv = 0.0
        return SpectralSymbol(self.R, g, self.alpha, self.coef, name=self.name, zero_value=zv)


class IdentitySymbol(Symbol):
    """``sigma = 1``; kernel is the discrete delta."""

    name = "identity"
    degree = 0

    def kernel(self):
        return delta(self.grid)

    def field(self):
        return np.ones(self.grid.shape, dtype=complex)

    def apply(self, phi):
        return phi

    def dilate(self, r):
        _check_r(r)
        return self

    def dilate_lattice(self, r):
        return IdentitySymbol(self.grid.dilate(_check_r(r)))

    def adjoint(self):
        return self


class ScaledSymbol(Symbol):
    def __init__(self, base: Symbol, c):
        super().__init__(base.grid)
        self.base = base
        self.c = complex(c)
        self.name = "%s*%s" % (_fmt(self.c), base.name)
        self.degree = base.degree

    def kernel(self):
        return self.base.kernel() * self.c

    def field(self):
        return self.base.field() * self.c

    def apply(self, phi):
        return self.base.apply(phi) * self.c

    def dilate(self, r):
        return ScaledSymbol(self.base.dilate(r), self.c)

    def dilate_lattice(self, r):
        return ScaledSymbol(self.base.dilate_lattice(r), self.c)

    def adjoint(self):
        return ScaledSymbol(self.base.adjoint(), np.conj(self.c))

    def difference(self, alpha):
        return ScaledSymbol(self.base.difference(alpha), self.c)


class ProductSymbol(Symbol):
    """``sigma1 sigma2``: operator ``T_sigma1 T_sigma2``, kernel ``kappa2 * kappa1``."""

    def __init__(self, s1: Symbol, s2: Symbol):
        if s1.grid != s2.grid:
            raise ValueError("grid mismatch")
        super().__init__(s1.grid)
        self.s1, self.s2 = s1, s2
        self.name = "(%s)(%s)" % (s1.name, s2.name)

    def kernel(self):
        return self.s1.apply(self.s2.kernel())

    def field(self):
        return self.s1.field() * self.s2.field()

    def apply(self, phi):
        return self.s1.apply(self.s2.apply(phi))

    def dilate(self, r):
        return product(self.s1.dilate(r), self.s2.dilate(r))

    def dilate_lattice(self, r):
        return product(self.s1.dilate_lattice(r), self.s2.dilate_lattice(r))

    def adjoint(self):
        return product(self.s2.adjoint(), self.s1.adjoint())


class AdjointSymbol(Symbol):
    """``sigma*``: kernel ``conj(kappa(x^{-1}))``."""

    def __init__(self, base: Symbol):
        super().__init__(base.grid)
        self.base = base
        self.name = base.name + "*"
        self.degree = base.degree

    def kernel(self):
        return self.base.kernel().reflect().conj()

    def field(self):
        return np.conj(self.base.field())

    def dilate(self, r):
        return AdjointSymbol(self.base.dilate(r))

    def dilate_lattice(self, r):
        return AdjointSymbol(self.base.dilate_lattice(r))

    def adjoint(self):
        return self.base


def product(s1: Symbol, s2: Symbol) -> Symbol:
    """Symbol product with the spectral shortcut when ``s2 = f(pi(R))``."""
    if (isinstance(s1, SpectralSymbol) and isinstance(s2, SpectralSymbol) and s1.R is s2.R
            and not any(s2.alpha)):
        f1, f2 = s1.func, s2.func
        g = lambda lam, f1=f1, f2=f2: f1(lam) * f2(lam)
        zv = 0.0 if (s1.zero_value is not None or s2.zero_value is not None) else None
        return SpectralSymbol(s1.R, g, s1.alpha, s1.coef * s2.coef, name="(%s)(%s)" % (s1.name, s2.name),
                              zero_value=zv)
    if isinstance(s1, FieldSymbol) and isinstance(s2, FieldSymbol):
        if s1.expr is not None and s2.expr is not None:
            return FieldSymbol(s1.grid, expr=s1.expr * s2.expr, name="(%s)(%s)" % (s1.name, s2.name))
        return FieldSymbol(s1.grid, values=s1.values * s2.values, name="(%s)(%s)" % (s1.name, s2.name))
    if isinstance(s1, IdentitySymbol):
        return s2
    if isinstance(s2, IdentitySymbol):
        return s1
    return ProductSymbol(s1, s2)


# module-level operations -------------------------------------------------------
def _check_r(r):
    r = float(r)
    if not r > 0:
        raise ValueError("dilation factor must be positive, got %r" % r)
    return r


def _fmt(c):
    return "%g" % c.real if c.imag == 0 else "(%g%+gj)" % (c.real, c.imag)


def _xi_symbols(n):
    import sympy

    syms = sympy.symbols(" ".join("xi%d" % (j + 1) for j in range(n)), real=True)
    return syms if isinstance(syms, tuple) else (syms,)


def _xi_locals(n):
    return {str(s): s for s in _xi_symbols(n)}


def _eval_expr(expr, grid):
    import sympy

    syms = _xi_symbols(grid.n)
    fn = sympy.lambdify(syms, expr, "numpy")
    xi = grid.freq_coords()
    with np.errstate(all="ignore"):
        vals = np.asarray(fn(*[xi[..., j] for j in range(grid.n)]), dtype=complex)
    vals = np.broadcast_to(vals, grid.shape).copy()
    if not np.all(np.isfinite(vals)):
        raise ValueError("symbol expression is not finite on the dual grid")
    return vals


def transform_pair(f: GridFunction) -> Symbol:
    """Symbol with kernel ``f``: a dual field on abelian grids, kernel-backed otherwise."""
    if f.grid.mode == "periodic":
        return FieldSymbol(f.grid, values=fourier_transform(f), name="F(f)")
    return KernelSymbol(f, name="F(f)")


def inverse(sigma: Symbol) -> GridFunction:
    """Kernel ``F^{-1} sigma``."""
    return sigma.kernel()


def apply_multiplier(sigma: Symbol, phi: GridFunction) -> GridFunction:
    return sigma.apply(phi)


def difference_op(sigma: Symbol, alpha) -> Symbol:
    return sigma.difference(alpha)


def symbol_dilate(sigma: Symbol, r) -> Symbol:
    return sigma.dilate(r)


def adjoint_symbol(sigma: Symbol) -> Symbol:
    return sigma.adjoint()


def dual_l2_norm(values, grid: Grid) -> float:
    """``||sigma||_{L^2(mu)}`` with ``mu = (2 pi)^{-n} d xi`` on the dual grid."""
    v = np.asarray(values)
    return float(np.sqrt(np.sum(np.abs(v) ** 2) * freq_cellvol(grid) / (2 * np.pi) ** grid.n))


def leibniz_defect(s1: Symbol, s2: Symbol, alpha) -> float:
    """``L^2(mu)`` distance between ``Delta^alpha(s1 s2)`` and its Leibniz expansion.

    Abelian only; the constants are the multinomials ``prod_j C(alpha_j, beta_j)``.
    """
    if not s1.abelian:
        raise ValueError("Leibniz expansion with multinomial constants needs an abelian grid")
    alpha = tuple(int(a) for a in alpha)
    k = ProductSymbol(s1, s2).kernel()
    lhs = fourier_transform(k * monomial(s1.grid, alpha))
    rhs = np.zeros(s1.grid.shape, dtype=complex)
    for beta in itertools.product(*[range(a + 1) for a in alpha]):
        gamma = tuple(a - b for a, b in zip(alpha, beta))
        c = math.prod(comb(a, b) for a, b in zip(alpha, beta))
        d1 = fourier_transform(s1.kernel() * monomial(s1.grid, beta))
        d2 = fourier_transform(s2.kernel() * monomial(s1.grid, gamma))
        rhs += c * d1 * d2
    return dual_l2_norm(lhs - rhs, s1.grid)


# operator norms -------------------------------------------------------------
def power_iteration(matvec, rmatvec, shape, seed=0, maxiter=200, tol=1e-8):
    """Largest singular value of a linear map by power iteration on ``A^* A``.

    Returns ``(value, residual, iterations, converged)`` where ``residual``
    is the relative change of the estimate at the last step.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    v /= np.linalg.norm(v)
    est, resid = 0.0, np.inf
    for it in range(1, maxiter + 1):
        w = matvec(v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0, 0.0, it, True
        resid = abs(new - est) / new
        est = new
        if resid < tol:
            return est, resid, it, True
        u = rmatvec(w)
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return est, 0.0, it, True
        v = u / nu
    return est, resid, maxiter, False


def top_singular_value(matvec, rmatvec, shape, method="lanczos", seed=0, maxiter=200, tol=1e-8):
    """Largest singular value, as ``(value, residual, iterations, converged)``.

    ``method='power'`` runs :func:`power_iteration`; ``method='lanczos'``
    uses ARPACK through ``scipy.sparse.linalg.svds`` and reports the
    relative residual ``||A^* A v - s^2 v|| / s^2`` of the returned vector.
    """
    if method == "power":
        return power_iteration(matvec, rmatvec, shape, seed, maxiter, tol)
    if method != "lanczos":
        raise ValueError("method must be 'power' or 'lanczos'")
    from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, svds

    size = int(np.prod(shape))
    A = LinearOperator((size, size), dtype=complex,
                       matvec=lambda v: np.asarray(matvec(v.reshape(shape)), dtype=complex).ravel(),
                       rmatvec=lambda v: np.asarray(rmatvec(v.reshape(shape)), dtype=complex).ravel())
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    try:
        u, sv, vh = svds(A, k=1, tol=tol, maxiter=maxiter * 10, v0=v0)
    except ArpackNoConvergence:
        return power_iteration(matvec, rmatvec, shape, seed, maxiter, tol)
    val = float(sv[0])
    if val == 0.0:
        return 0.0, 0.0, 0, True
    x = vh[0].conj()
    r = A.rmatvec(A.matvec(x)) - val * val * x
    resid = float(np.linalg.norm(r) / (val * val * np.linalg.norm(x)))
    return val, resid, 0, True


def l2_operator_norm(sigma: Symbol, seed=0, maxiter=200, tol=1e-8):
    """``||T_sigma||_{L^2 -> L^2}`` by power iteration; abelian grids also use ``T^* = T_{conj sigma}``."""
    g = sigma.grid
    if sigma.abelian:
        F = sigma.field()
        mv = lambda v: np.fft.ifftn(np.fft.fftn(v) * np.fft.ifftshift(F))
        rv = lambda v: np.fft.ifftn(np.fft.fftn(v) * np.fft.ifftshift(np.conj(F)))
    else:
        from .lattice import convolution_matrix

        M = convolution_matrix(sigma.kernel())
        mv = lambda v: (M @ v.ravel()).reshape(g.shape)
        rv = lambda v: (M.conj().T @ v.ravel()).reshape(g.shape)
    return power_iteration(mv, rv, g.shape, seed, maxiter, tol)
