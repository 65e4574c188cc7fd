"""Graded nilpotent Lie groups in exponential coordinates.

A group is described by its dilation weights and the structure constants of
its Lie algebra in a graded basis ``X_1, ..., X_n``. Points are numpy arrays
whose last axis has length ``n``; every routine broadcasts over leading axes.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property, reduce
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "GradedGroup",
    "ValidationReport",
    "validate_descriptor",
    "load_descriptor",
    "shipped_descriptors",
    "group_product",
    "group_inverse",
    "invariant_field_matrix",
    "dilate_point",
    "hom_degree",
    "iso_length",
    "mihlin_order",
    "degree_calculator",
    "multi_indices",
    "QuasiNorm",
    "ConstantsReport",
    "quasinorm_constants_probe",
    "BCH_ORDER",
]

#: Highest bracket length kept in the Baker-Campbell-Hausdorff series.
BCH_ORDER = 4

_JACOBI_TOL = 1e-12


class GradedGroup:
    """Graded nilpotent Lie group given by weights and structure constants.

    Parameters
    ----------
    weights : sequence of int
        Dilation weights ``v_1 <= ... <= v_n``.
    structure : sequence of (i, j, k, c), optional
        Nonzero brackets ``[X_i, X_j] = sum_k c X_k`` with 0-based indices.
        Entries with ``i < j`` that have no explicit ``(j, i, k)`` partner are
        completed by antisymmetry; explicit partners are kept as given so that
        inconsistent tables can be detected by :func:`validate_descriptor`.
    nu_o : int, optional
        Common multiple of the weights used by the default quasi-norm and
        Rockland operators. Defaults to the least common multiple.
    name : str, optional
        Label used in reports.
    Q, step : int, optional
        Declared homogeneous dimension and step. They are not trusted; the
        validator compares them against the computed values.

    Notes
    -----
    Syntactic errors (non-integer weights, indices out of range) raise
    ``ValueError``. Algebraic invariants are only checked by the validator.
    """

    def __init__(self, weights, structure=(), nu_o=None, name="", Q=None, step=None):
        w = tuple(weights)
        if len(w) == 0:
            raise ValueError("weights must be a non-empty list")
        for v in w:
            if isinstance(v, bool) or not float(v).is_integer() or int(v) <= 0:
                raise ValueError("weights must be positive integers, got %r" % (list(w),))
        self.weights = tuple(int(v) for v in w)
        n = len(self.weights)

        entries = []
        for entry in structure:
            if len(entry) != 4:
                raise ValueError("structure entries must be (i, j, k, coefficient)")
            i, j, k, c = entry
            for idx in (i, j, k):
                if not float(idx).is_integer() or not 0 <= int(idx) < n:
                    raise ValueError("structure index %r out of range for n=%d" % (idx, n))
            entries.append((int(i), int(j), int(k), float(c)))
        table = np.zeros((n, n, n))
        given = {(i, j, k) for i, j, k, _ in entries}
        for i, j, k, c in entries:
            table[i, j, k] += c
            if (j, i, k) not in given and i != j:
                table[j, i, k] -= c
        table.setflags(write=False)
        self.structure = table

        if nu_o is None:
            nu_o = reduce(math.lcm, self.weights)
        if not float(nu_o).is_integer() or int(nu_o) <= 0:
            raise ValueError("nu_o must be a positive integer")
        self.nu_o = int(nu_o)
        self.name = str(name)
        self.declared_Q = None if Q is None else int(Q)
        self.declared_step = None if step is None else int(step)

    # basic quantities -------------------------------------------------
    @property
    def n(self):
        return len(self.weights)

    @property
    def Q(self):
        """Homogeneous dimension."""
        return int(sum(self.weights))

    @property
    def weight_array(self):
        return np.asarray(self.weights, dtype=float)

    @property
    def is_abelian(self):
        return not np.any(self.structure)

    @cached_property
    def step(self):
        """Nilpotency step computed from the lower central series."""
        return _nilpotency_step(self.structure)

    @property
    def key(self):
        return (self.weights, self.structure.tobytes(), self.nu_o)

    def __eq__(self, other):
        return isinstance(other, GradedGroup) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return "GradedGroup(name=%r, weights=%r, nu_o=%d)" % (self.name, self.weights, self.nu_o)

    # algebra ----------------------------------------------------------
    def bracket(self, X, Y):
        """Lie bracket of algebra elements in coordinates (broadcasting)."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        out = np.zeros(np.broadcast_shapes(X.shape, Y.shape))
        for i, j, k, c in self._nonzero:
            out[..., k] += c * X[..., i] * Y[..., j]
        return out

    @cached_property
    def _nonzero(self):
        idx = np.argwhere(self.structure != 0.0)
        return [(int(i), int(j), int(k), float(self.structure[i, j, k])) for i, j, k in idx]

    def ad_matrix(self, X):
        """Matrix of ``ad_X`` acting on coordinate vectors, shape ``(..., n, n)``."""
        X = np.asarray(X, dtype=float)
        # (ad_X Y)_k = sum_ij X_i Y_j c_ijk  ->  M[k, j] = sum_i X_i c_ijk
        return np.einsum("...i,ijk->...kj", X, self.structure)

    def to_dict(self):
        triples = []
        n = self.n
        for i, j, k in itertools.product(range(n), repeat=3):
            if i < j and self.structure[i, j, k] != 0.0:
                triples.append([i + 1, j + 1, k + 1, float(self.structure[i, j, k])])
        return {
            "name": self.name,
            "dimension": n,
            "weights": list(self.weights),
            "structure": triples,
            "nu_o": self.nu_o,
        }


def _nilpotency_step(c):
    n = c.shape[0]
    if not np.any(c):
        return 1
    current = np.eye(n)  # spanning set of the k-th term of the lower central series
    for s in range(1, n + 1):
        nxt = np.einsum("ai,bj,ijk->abk", np.eye(n), current, c).reshape(-1, n)
        if nxt.size == 0 or np.max(np.abs(nxt)) < 1e-13:
            return s
        u, sv, _ = np.linalg.svd(nxt.T, full_matrices=False)
        rank = int(np.sum(sv > 1e-10 * sv[0]))
        current = u[:, :rank].T
    return n + 1  # not nilpotent within n steps


@dataclass
class ValidationReport:
    """Pass/fail record for every descriptor invariant."""

    name: str
    checks: list = field(default_factory=list)

    def add(self, check, passed, detail="", index=None):
        self.checks.append({"check": check, "passed": bool(passed), "detail": detail, "index": index})

    @property
    def ok(self):
        return all(c["passed"] for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c["passed"]]

    def __getitem__(self, check):
        for c in self.checks:
            if c["check"] == check:
                return c
        raise KeyError(check)


def validate_descriptor(d: GradedGroup) -> ValidationReport:
    """Check the algebraic invariants of a descriptor.

    The report has one entry per invariant (``Q``, ``nu_o``, ``weights_sorted``,
    ``antisymmetry``, ``jacobi``, ``gradation``, ``nilpotency``). A failing
    entry carries the first violating 1-based index triple.
    """
    rep = ValidationReport(d.name)
    w = d.weights
    n = d.n
    c = d.structure

    if d.declared_Q is None:
        rep.add("Q", True, "Q=%d" % d.Q)
    else:
        rep.add("Q", d.declared_Q == d.Q, "declared %d, sum of weights %d" % (d.declared_Q, d.Q))

    bad = [v for v in w if d.nu_o % v]
    rep.add("nu_o", not bad, "nu_o=%d" % d.nu_o if not bad else "nu_o=%d not divisible by %s" % (d.nu_o, bad))

    rep.add("weights_sorted", list(w) == sorted(w), "weights %s" % (list(w),))

    viol = None
    for i, j, k in itertools.product(range(n), repeat=3):
        if abs(c[i, j, k] + c[j, i, k]) > 0.0:
            viol = (i + 1, j + 1, k + 1)
            break
    rep.add("antisymmetry", viol is None, "" if viol is None else "c_ij^k != -c_ji^k", viol)

    # Jacobi: [X_a,[X_b,X_c]] + [X_b,[X_c,X_a]] + [X_c,[X_a,X_b]] = 0
    viol, worst = None, 0.0
    if np.any(c):
        for a, b, e in itertools.combinations(range(n), 3):
            jac = _jacobi_term(c, a, b, e)
            defect = float(np.max(np.abs(jac)))
            if defect > worst:
                worst = defect
            if defect > _JACOBI_TOL and viol is None:
                viol = (a + 1, b + 1, e + 1)
    rep.add("jacobi", viol is None, "max defect %.3e" % worst, viol)

    viol = None
    for i, j, k in itertools.product(range(n), repeat=3):
        if c[i, j, k] != 0.0 and w[k] != w[i] + w[j]:
            viol = (i + 1, j + 1, k + 1)
            break
    rep.add(
        "gradation",
        viol is None,
        "" if viol is None else "nonzero c_ij^k with v_k != v_i + v_j",
        viol,
    )

    step = d.step
    nil_ok = step <= n
    detail = "step %d" % step
    if d.declared_step is not None and d.declared_step != step:
        nil_ok = False
        detail = "declared step %d, computed %d" % (d.declared_step, step)
    if step > BCH_ORDER:
        detail += " (exceeds supported BCH order %d)" % BCH_ORDER
    rep.add("nilpotency", nil_ok, detail)
    return rep


def _jacobi_term(c, a, b, e):
    # [X_b, X_e] = sum_m c[b,e,m] X_m ; [X_a, X_m] = sum_k c[a,m,k] X_k
    t1 = c[b, e] @ c[a]
    t2 = c[e, a] @ c[b]
    t3 = c[a, b] @ c[e]
    return t1 + t2 + t3


# descriptor files -------------------------------------------------------
def _descriptor_dir():
    return resources.files("gradedmult") / "data" / "descriptors"


def shipped_descriptors():
    """Names of the descriptors bundled with the package."""
    return sorted(p.name[:-5] for p in _descriptor_dir().iterdir() if p.name.endswith(".json"))


def descriptor_from_dict(data: dict) -> GradedGroup:
    """Build a group from a descriptor mapping with 1-based structure triples."""
    if "weights" not in data:
        raise ValueError("descriptor is missing 'weights'")
    weights = data["weights"]
    if not isinstance(weights, (list, tuple)):
        raise ValueError("weights must be positive integers")
    dim = data.get("dimension", len(weights))
    if dim != len(weights):
        raise ValueError("dimension %r does not match %d weights" % (dim, len(weights)))
    structure = []
    for t in data.get("structure", []):
        if len(t) != 4:
            raise ValueError("structure triples must read [i, j, k, coefficient]")
        i, j, k, coef = t
        structure.append((int(i) - 1, int(j) - 1, int(k) - 1, float(coef)))
    return GradedGroup(
        weights,
        structure,
        nu_o=data.get("nu_o"),
        name=data.get("name", ""),
        Q=data.get("Q"),
        step=data.get("step"),
    )


def load_descriptor(source) -> GradedGroup:
    """Load a descriptor by shipped name, file path or mapping.

    Files are JSON objects with keys ``dimension``, ``weights``,
    ``structure`` (list of ``[i, j, k, coefficient]``, 1-based) and optional
    ``nu_o``, ``name``, ``Q``, ``step``.
    """
    if isinstance(source, GradedGroup):
        return source
    if isinstance(source, dict):
        return descriptor_from_dict(source)
    src = str(source)
    path = Path(src)
    if path.suffix == ".json" and path.exists():
        text = path.read_text(encoding="utf-8")
    else:
        res = _descriptor_dir() / (src + ".json")
        if not res.is_file():
            raise ValueError("unknown descriptor %r; shipped: %s" % (src, ", ".join(shipped_descriptors())))
        text = res.read_text(encoding="utf-8")
    return descriptor_from_dict(json.loads(text))


# group law ----------------------------------------------------------------
def group_product(x, y, d: GradedGroup):
    """Group product in exponential coordinates of the first kind.

    Uses the Baker-Campbell-Hausdorff series up to brackets of length 4,
    which is exact for groups of step at most 4.

    Parameters
    ----------
    x, y : array_like, shape (..., n)
    d : GradedGroup

    Returns
    -------
    ndarray, shape (..., n)
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != d.n or y.shape[-1] != d.n:
        raise ValueError("points must have last axis of length %d" % d.n)
    z = x + y
    if d.is_abelian:
        return z
    step = d.step
    if step > BCH_ORDER:
        raise ValueError("step %d exceeds the supported BCH order %d" % (step, BCH_ORDER))
    xy = d.bracket(x, y)
    z = z + 0.5 * xy
    if step >= 3:
        xxy = d.bracket(x, xy)
        yyx = -d.bracket(y, xy)
        z = z + (xxy + yyx) / 12.0
        if step >= 4:
            z = z - d.bracket(y, xxy) / 24.0
    return z


def invariant_field_matrix(x, d: GradedGroup, side="left"):
    """Coefficients of the invariant vector fields at ``x``.

    Returns ``C`` of shape ``(..., n, n)`` with ``X_j = sum_k C[..., j, k] d_k``.
    The left-invariant field is ``(1 + ad_x/2 + ad_x^2/12 - ad_x^4/720) e_j``
    and the right-invariant one flips the sign of the odd term; the series is
    exact for step at most 4.
    """
    x = np.asarray(x, dtype=float)
    n = d.n
    eye = np.eye(n)
    if d.is_abelian:
        return np.broadcast_to(eye, x.shape[:-1] + (n, n))
    A = d.ad_matrix(x)
    A2 = A @ A
    sgn = 1.0 if side == "left" else -1.0
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    V = eye + sgn * 0.5 * A + A2 / 12.0 - (A2 @ A2) / 720.0
    return np.swapaxes(V, -1, -2)


def group_inverse(x, d: GradedGroup | None = None):
    """Inverse in exponential coordinates, which is negation."""
    return -np.asarray(x, dtype=float)


def dilate_point(r, x, d: GradedGroup):
    """Apply ``D_r`` to points: coordinate ``j`` is scaled by ``r**v_j``."""
    r = float(r)
    if not r > 0:
        raise ValueError("dilation factor must be positive, got %r" % r)
    return np.asarray(x, dtype=float) * r ** d.weight_array


# degrees ----------------------------------------------------------------
def hom_degree(alpha, d: GradedGroup) -> int:
    """Homogeneous degree ``[alpha] = sum v_j alpha_j``."""
    return int(sum(int(a) * v for a, v in zip(alpha, d.weights)))


def iso_length(alpha) -> int:
    return int(sum(int(a) for a in alpha))


def mihlin_order(weights) -> int:
    """Smallest integer ``m > Q/2`` divisible by every weight."""
    weights = [int(v) for v in weights]
    Q = sum(weights)
    step = reduce(math.lcm, weights)
    m = (Q // 2 // step) * step
    while m * 2 <= Q:
        m += step
    return m


def degree_calculator(d: GradedGroup, alpha=None) -> dict:
    """Homogeneous degree, isotropic length and Mihlin order ``N``."""
    out = {"Q": d.Q, "mihlin_order": mihlin_order(d.weights)}
    if alpha is not None:
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != d.n or min(alpha) < 0:
            raise ValueError("multi-index must have %d non-negative entries" % d.n)
        out["hom_deg"] = hom_degree(alpha, d)
        out["iso_len"] = iso_length(alpha)
    return out


def multi_indices(n: int, max_len: int):
    """All multi-indices of length ``n`` with ``|alpha| <= max_len``.

    Ordered by ``|alpha|`` then reverse-lexicographically, so ``(1,0)`` comes
    before ``(0,1)``.
    """
    out = []
    for total in range(max_len + 1):
        level = [a for a in itertools.product(range(total + 1), repeat=n) if sum(a) == total]
        out.extend(sorted(level, reverse=True))
    return out


# quasi-norms --------------------------------------------------------------
_KINDS = ("nuo", "max", "sum", "euclidean", "custom")


class QuasiNorm:
    """Homogeneous quasi-norm on a graded group.

    Parameters
    ----------
    group : GradedGroup
    kind : {'nuo', 'max', 'sum', 'euclidean', 'custom'}
        ``'nuo'`` is ``(sum_j x_j^(2 nu_o / v_j))^(1 / (2 nu_o))``;
        ``'max'`` is ``max_j |x_j|^(1/v_j)`` and ``'sum'`` is
        ``sum_j |x_j|^(1/v_j)``. ``'euclidean'`` is only homogeneous for
        isotropic weights and is rejected otherwise.
    func : callable or str, optional
        For ``kind='custom'``: a callable on arrays of shape ``(..., n)``, or
        an expression in ``x1, ..., xn`` parsed with sympy.
    """

    def __init__(self, group: GradedGroup, kind: str = "nuo", func=None):
        if kind not in _KINDS:
            raise ValueError("unknown quasi-norm kind %r" % kind)
        if kind == "euclidean" and len(set(group.weights)) != 1:
            raise ValueError("euclidean norm is not homogeneous for weights %s" % (group.weights,))
        if kind == "custom":
            if func is None:
                raise ValueError("custom quasi-norm needs func")
            if isinstance(func, str):
                func = _lambdify_points(func, group.n)
        self.group = group
        self.kind = kind
        self.func = func
        self.expr = func if isinstance(func, str) else None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        w = self.group.weight_array
        if self.kind == "nuo":
            two_nu = 2 * self.group.nu_o
            expo = (two_nu // np.asarray(self.group.weights)).astype(float)
            return np.sum(x ** expo, axis=-1) ** (1.0 / two_nu)
        if self.kind == "max":
            return np.max(np.abs(x) ** (1.0 / w), axis=-1)
        if self.kind == "sum":
            return np.sum(np.abs(x) ** (1.0 / w), axis=-1)
        if self.kind == "euclidean":
            return np.sqrt(np.sum(x * x, axis=-1)) ** (1.0 / w[0])
        return np.asarray(self.func(x), dtype=float)

    def __repr__(self):
        return "QuasiNorm(%s, %r)" % (self.group.name or self.group.weights, self.kind)

    @property
    def key(self):
        return (self.group.key, self.kind, self.expr if self.kind == "custom" else None)


def _lambdify_points(expr: str, n: int) -> Callable:
    import sympy

    syms = sympy.symbols(" ".join("x%d" % (j + 1) for j in range(n)))
    syms = syms if isinstance(syms, tuple) else (syms,)
    f = sympy.lambdify(syms, sympy.sympify(expr), "numpy")

    def call(x):
        x = np.asarray(x, dtype=float)
        return np.asarray(f(*[x[..., j] for j in range(n)]), dtype=float) + 0.0 * x[..., 0]

    return call


def unit_sphere_samples(q: QuasiNorm, count: int, rng) -> np.ndarray:
    """Random points with ``q(x) = 1`` obtained by dilating Gaussian draws."""
    g = rng.standard_normal((count, q.group.n))
    rho = q(g)
    return g * (1.0 / rho[:, None]) ** q.group.weight_array


@dataclass
class ConstantsReport:
    """Empirical quasi-norm constants.

    ``triangle`` is the max of ``|xy| / (|x| + |y|)``, ``reverse_triangle``
    the max of ``||xy| - |x|| / |y|`` over pairs with ``|y| <= b |x|``, and
    ``equivalence`` the (min, max) of ``q1 / q2`` when a second norm is given.
    """

    triangle: float
    reverse_triangle: float
    b: float
    samples: int
    seed: int
    equivalence: tuple | None = None

    def as_dict(self):
        out = {
            "triangle": self.triangle,
            "reverse_triangle": self.reverse_triangle,
            "b": self.b,
            "samples": self.samples,
            "seed": self.seed,
        }
        if self.equivalence is not None:
            out["equivalence_min"], out["equivalence_max"] = self.equivalence
        return out


def quasinorm_constants_probe(q1: QuasiNorm, q2: QuasiNorm | None = None, samples: int = 10_000,
                              seed: int = 0, b: float = 0.5, log2_scale: float = 4.0) -> ConstantsReport:
    """Monte-Carlo estimates of the triangle, reverse-triangle and equivalence constants.

    By homogeneity it suffices to take ``|x| = 1`` and let ``|y|`` range over
    ``2**U(-log2_scale, log2_scale)``. All randomness is drawn up front from
    ``numpy.random.default_rng(seed)``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not 0 < b < 1:
        raise ValueError("b must lie in (0, 1)")
    d = q1.group
    rng = np.random.default_rng(seed)
    x = unit_sphere_samples(q1, samples, rng)
    y = unit_sphere_samples(q1, samples, rng)
    rho = 2.0 ** rng.uniform(-log2_scale, log2_scale, samples)
    u = rng.uniform(0.0, 1.0, samples)
    yt = dilate_point_rows(rho, y, d)
    tri = q1(group_product(x, yt, d)) / (1.0 + rho)

    ys = dilate_point_rows(b * np.maximum(u, 1e-12), y, d)
    ny = q1(ys)
    rev = np.abs(q1(group_product(x, ys, d)) - 1.0) / ny

    eq = None
    if q2 is not None:
        z = unit_sphere_samples(q2, samples, rng)
        ratio = q1(z)
        eq = (float(np.min(ratio)), float(np.max(ratio)))
    return ConstantsReport(float(np.max(tri)), float(np.max(rev)), b, samples, seed, eq)


def dilate_point_rows(r, x, d: GradedGroup):
    """Dilate row ``i`` of ``x`` by ``r[i]``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("dilation factors must be positive")
    return x * r[:, None] ** d.weight_array
