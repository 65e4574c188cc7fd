"""Config-driven experiment runner and report emission.

A config is one JSON object. Every subcommand reads the same file, runs its
checks, and writes CSV tables plus a ``summary.json`` into the output
directory. Reports contain no timestamps and every float is rounded to 12
significant digits, so identical configs give byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .group import (
    QuasiNorm,
    load_descriptor,
    mihlin_order,
    multi_indices,
    quasinorm_constants_probe,
    validate_descriptor,
)
from .lattice import Grid, GridFunction, load_gridfunction
from .rockland import RocklandSpec, build_rockland
from .symbols import FieldSymbol, KernelSymbol, Symbol, top_singular_value

SCHEMA_VERSION = "1.0"
SUBCOMMANDS = ("validate", "norms", "lu", "mihlin", "cz", "lp", "riesz", "all")

__all__ = [
    "SCHEMA_VERSION",
    "SUBCOMMANDS",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "config_hash",
    "Report",
    "run_experiment",
    "emit_report",
]


class ConfigError(ValueError):
    """Malformed or inconsistent experiment config."""


# config ------------------------------------------------------------------------------
_DEFAULT_PROBES = {
    "s": [0.0, 1.0, 2.0],
    "s_lu": None,
    "r_values": [0.5, 0.75, 1.5, 2.0],
    "K": 8,
    "c_o": 1.0,
    "N": None,
    "j_range": [-12, 12, 4],
    "m_range": [-3, 3],
    "cz_pairs": 100,
    "cz_unit": 4.0,
    "cz_J": 2,
    "cz_refine": False,
    "p_values": [1.5, 2.0, 3.0],
    "family_size": 24,
    "spike_widths": None,
    "taus": [1.0, 2.0, 4.0],
    "riesz_max_order": 2,
}

_DEFAULT_TOL = {
    "partition": 1e-12,
    "kernel_integral": 1e-8,
    "slack": 1e-10,
    "embedding": 1e-8,
    "slope": 0.5,
    "p2_exact": 1e-8,
    "cz_refinement": 0.5,
    "weak_sharpening": 0.3,
    "lu_spread": 10.0,
}


@dataclass
class ExperimentConfig:
    """Parsed experiment config.

    Attributes mirror the JSON keys: ``group`` (shipped name, path or
    inline descriptor), ``grid`` (``extents``, ``points``, ``mode``),
    ``quasinorm`` (``kind``, optional ``func``), ``rockland`` and optional
    ``rockland2`` (``kind``, ``coefficients``, ``degree``, ``nu_o``),
    ``symbols`` (list of symbol specs), ``probes``, ``tolerances``,
    ``seed``, ``output`` and ``budget``.
    """

    group: object
    grid: dict
    seed: int
    quasinorm: dict = field(default_factory=lambda: {"kind": "nuo"})
    rockland: dict = field(default_factory=dict)
    rockland2: dict | None = None
    symbols: list = field(default_factory=list)
    probes: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    output: str = "report"
    budget: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    def probe(self, key):
        return self.probes.get(key, _DEFAULT_PROBES[key])

    def tol(self, key):
        return float(self.tolerances.get(key, _DEFAULT_TOL[key]))


_KNOWN_KEYS = {"group", "grid", "seed", "quasinorm", "rockland", "rockland2", "symbols", "probes", "tolerances",
               "output", "budget"}


def parse_config(data: dict, base_dir=None) -> ExperimentConfig:
    """Check a config mapping and return an :class:`ExperimentConfig`."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - _KNOWN_KEYS)
    if unknown:
        raise ConfigError("unknown config field(s): %s" % ", ".join(unknown))
    for key in ("group", "grid", "seed"):
        if key not in data:
            raise ConfigError("missing required field '%s'" % key)
    seed = data["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("field 'seed' must be a non-negative integer")
    grid = data["grid"]
    if not isinstance(grid, dict) or "extents" not in grid or "points" not in grid:
        raise ConfigError("field 'grid' needs 'extents' and 'points'")
    tol = data.get("tolerances", {})
    for k, v in tol.items():
        if k not in _DEFAULT_TOL:
            raise ConfigError("unknown field 'tolerances.%s'" % k)
        if not isinstance(v, (int, float)) or not v > 0:
            raise ConfigError("field 'tolerances.%s' must be positive" % k)
    probes = data.get("probes", {})
    for k in probes:
        if k not in _DEFAULT_PROBES:
            raise ConfigError("unknown field 'probes.%s'" % k)
    syms = data.get("symbols", [])
    if not isinstance(syms, list):
        raise ConfigError("field 'symbols' must be a list")
    for i, s in enumerate(syms):
        if not isinstance(s, dict) or not ({"builtin", "expr", "kernel_file"} & set(s)):
            raise ConfigError("field 'symbols[%d]' needs one of 'builtin', 'expr', 'kernel_file'" % i)
    return ExperimentConfig(
        group=data["group"], grid=grid, seed=seed, quasinorm=data.get("quasinorm", {"kind": "nuo"}),
        rockland=data.get("rockland", {}), rockland2=data.get("rockland2"), symbols=syms, probes=probes,
        tolerances=tol, output=data.get("output", "report"), budget=data.get("budget", {}), raw=data,
        base_dir=Path(base_dir) if base_dir is not None else Path.cwd())


def load_config(path) -> ExperimentConfig:
    """Read a JSON config file; parse errors name the line and column."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config parse error at line %d, column %d: %s" % (exc.lineno, exc.colno, exc.msg)) from exc
    return parse_config(data, base_dir=path.parent)


def config_hash(cfg: ExperimentConfig) -> str:
    canon = json.dumps(cfg.raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


# context: objects built from the config ------------------------------------------------
class _Context:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.group = load_descriptor(cfg.group)
        g = cfg.grid
        max_points = int(cfg.budget.get("max_points", 2 ** 21))
        try:
            self.grid = Grid(self.group, g["extents"], g["points"], g.get("mode", "periodic"), max_points=max_points)
        except ValueError as exc:
            raise ConfigError("field 'grid': %s" % exc) from exc
        qn = cfg.quasinorm
        self.q = QuasiNorm(self.group, qn.get("kind", "nuo"), qn.get("func"))
        self.cache_dir = cfg.budget.get("cache_dir")
        self.R = build_rockland(_rockland_spec(cfg.rockland), self.grid, cache_dir=self.cache_dir)
        self.R2 = None
        if cfg.rockland2 is not None:
            self.R2 = build_rockland(_rockland_spec(cfg.rockland2), self.grid, cache_dir=self.cache_dir)
        self.symbols = [(_symbol_name(s, i), build_symbol(s, self.grid, self.R, cfg.base_dir))
                        for i, s in enumerate(cfg.symbols)]

    def refined(self):
        g = self.grid.refine()
        return g, build_rockland(self.R.spec, g, cache_dir=self.cache_dir)


def _rockland_spec(d):
    try:
        return RocklandSpec(kind=d.get("kind", "diagonal"), coefficients=d.get("coefficients"),
                            degree=d.get("degree"), nu_o=d.get("nu_o"))
    except (TypeError, ValueError) as exc:
        raise ConfigError("field 'rockland': %s" % exc) from exc


def _symbol_name(spec, i):
    if "name" in spec:
        return str(spec["name"])
    if "builtin" in spec:
        b = spec["builtin"]
        if b == "riesz":
            return "riesz" + "".join(str(a) for a in spec.get("alpha", []))
        if b == "imaginary-power":
            return "Ri%g" % spec.get("tau", 1.0)
        return b
    return "symbol%d" % i


def build_symbol(spec: dict, grid: Grid, R, base_dir=Path(".")) -> Symbol:
    """Symbol from a config entry.

    ``{"builtin": "riesz", "alpha": [...]}``, ``{"builtin":
    "imaginary-power", "tau": t}``, ``{"builtin": "bump-of-R"}``,
    ``{"builtin": "heat", "t": t}``, ``{"expr": "<sympy in xi1..xin>"}``
    (abelian) or ``{"kernel_file": "<stem>"}``.
    """
    from . import czo
    from .sobolev import default_bump

    if "builtin" in spec:
        b = spec["builtin"]
        if b == "riesz":
            alpha = spec.get("alpha")
            if alpha is None or len(alpha) != grid.n:
                raise ConfigError("riesz symbol needs 'alpha' of length %d" % grid.n)
            return czo.riesz_symbol(alpha, R)
        if b == "imaginary-power":
            return czo.imaginary_power_symbol(R, float(spec.get("tau", 1.0)))
        if b == "bump-of-R":
            return czo.bump_symbol(R, default_bump)
        if b == "heat":
            return czo.heat_symbol(R, float(spec.get("t", 1.0)))
        raise ConfigError("unknown builtin symbol %r" % b)
    if "expr" in spec:
        if not grid.group.is_abelian:
            raise ConfigError("expression symbols need an abelian group")
        return FieldSymbol(grid, expr=spec["expr"], name=spec.get("name"))
    path = Path(spec["kernel_file"])
    if not path.is_absolute():
        path = Path(base_dir) / path
    k = load_gridfunction(path)
    if k.grid.key != grid.key:
        raise ConfigError("kernel file %s was sampled on a different grid" % path)
    return KernelSymbol(k, name=spec.get("name", path.stem))


# reports ---------------------------------------------------------------------------------
def _round(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
        return float("%.12g" % x)
    if isinstance(x, complex):
        return [_round(x.real), _round(x.imag)]
    if isinstance(x, dict):
        return {str(k): _round(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round(v) for v in x]
    return x


def _fmt(v):
    v = _round(v)
    if v is None:
        return "nan"
    if isinstance(v, list):
        return " ".join(_fmt(u) for u in v)
    return repr(v) if isinstance(v, float) else str(v)


@dataclass
class Report:
    """Assertions, measured constants and CSV tables of one run."""

    subcommand: str
    assertions: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # name -> (header, rows)

    def check(self, name, passed, value=None, bound=None, note=None):
        self.assertions.append({"name": name, "passed": bool(passed), "value": value, "bound": bound,
                                "note": note})
        return bool(passed)

    def table(self, name, header, rows):
        self.tables[name] = (list(header), [list(r) for r in rows])

    @property
    def ok(self):
        return all(a["passed"] for a in self.assertions)


def emit_report(report: Report, cfg: ExperimentConfig, out_dir) -> Path:
    """Write ``summary.json`` and one CSV per table; returns the summary path."""
    if not report.assertions:
        raise ValueError("report has no assertions")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError("cannot create output directory %s: %s" % (out, exc)) from exc
    names = []
    for name, (header, rows) in sorted(report.tables.items()):
        fn = "%s.csv" % name
        with open(out / fn, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, delimiter=",", lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        names.append(fn)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "tool": "gradedmult",
        "subcommand": report.subcommand,
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "passed": report.ok,
        "n_assertions": len(report.assertions),
        "n_failed": sum(not a["passed"] for a in report.assertions),
        "assertions": _round(report.assertions),
        "constants": _round(report.constants),
        "tables": names,
    }
    path = out / "summary.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return path


# subcommands -----------------------------------------------------------------------------
def _finite(x):
    return x is not None and np.all(np.isfinite(x))


def _run_validate(ctx, rep):
    vr = validate_descriptor(ctx.group)
    rows = []
    for c in vr.checks:
        rep.check("descriptor.%s" % c["check"], c["passed"], note=c["detail"] or None)
        rows.append((c["check"], c["passed"], c["detail"]))
    rep.table("validate_checks", ("check", "passed", "detail"), rows)
    rep.constants["Q"] = ctx.group.Q
    rep.constants["nu_o"] = ctx.group.nu_o
    rep.constants["mihlin_N"] = mihlin_order(ctx.group.weights)


def _need_symbols(ctx):
    if not ctx.symbols:
        raise ConfigError("field 'symbols' is empty")


def _run_norms(ctx, rep):
    from .sobolev import dilation_bound, hs_norm, sobolev_embedding_margin

    _need_symbols(ctx)
    cfg = ctx.cfg
    cons = quasinorm_constants_probe(ctx.q, samples=10_000, seed=cfg.seed)
    rep.constants["quasinorm"] = cons.as_dict()
    rep.check("quasinorm.triangle_finite", _finite(cons.triangle), cons.triangle)
    s_vals = sorted(float(s) for s in cfg.probe("s"))
    Q = ctx.group.Q
    rows, drows = [], []
    for name, sig in ctx.symbols:
        vals = [hs_norm(sig, s, ctx.q) for s in s_vals]
        for s, v in zip(s_vals, vals):
            rows.append((name, s, v))
        rep.check("%s.hs_finite" % name, _finite(vals), vals)
        mono = all(b >= a for a, b in zip(vals, vals[1:]))
        rep.check("%s.hs_monotone_in_s" % name, mono, vals)
        for s in s_vals:
            for r in cfg.probe("r_values"):
                d = dilation_bound(sig, float(r), s, ctx.q)
                drows.append((name, s, float(r), d["lhs"], d["rhs"], d["margin"]))
                rep.check("%s.dilation_bound[s=%g,r=%g]" % (name, s, r), d["margin"] >= -cfg.tol("slack"),
                          d["lhs"], d["rhs"])
            if s > Q / 2.0:
                e = sobolev_embedding_margin(sig, s, ctx.q)
                rep.check("%s.embedding[s=%g]" % (name, s), e["margin"] >= -cfg.tol("embedding"), e["lhs"],
                          e["rhs"])
                rep.constants["%s.embedding_C[s=%g]" % (name, s)] = e["C"]
    rep.table("norms_hs", ("symbol", "s", "hs_norm"), rows)
    rep.table("norms_dilation", ("symbol", "s", "r", "lhs", "rhs", "margin"), drows)


def _s_lu(ctx):
    s = ctx.cfg.probe("s_lu")
    return float(s) if s is not None else ctx.group.Q / 2.0 + 0.5


def _run_lu(ctx, rep):
    from .sobolev import default_bump, lu_equivalence_probe, lu_norm

    _need_symbols(ctx)
    cfg = ctx.cfg
    s = _s_lu(ctx)
    rows = []
    for name, sig in ctx.symbols:
        for side in ("left", "right"):
            r = lu_norm(sig, side, s, R=ctx.R, q=ctx.q, K=int(cfg.probe("K")), c_o=float(cfg.probe("c_o")))
            rows.extend((name, side, rv, v) for rv, v in zip(r.r_values, r.values))
            rep.check("%s.lu_%s_finite" % (name, side), _finite(r.sup), r.sup)
            rep.constants["%s.lu_%s" % (name, side)] = {"sup": r.sup, "argsup": r.argsup}
    rep.table("lu_norms", ("symbol", "side", "r", "value"), rows)
    rep.constants["s_lu"] = s
    if ctx.R2 is not None:
        from .sobolev import LogBump

        eta2 = LogBump(0.0, 1.5)
        res = lu_equivalence_probe([sig for _, sig in ctx.symbols], (default_bump, ctx.R), (eta2, ctx.R2), s,
                                   q=ctx.q, K=int(cfg.probe("K")))
        rep.constants["lu_equivalence"] = res
        rep.check("lu_equivalence_spread", res["spread"] < cfg.tol("lu_spread"), res["spread"],
                  cfg.tol("lu_spread"))


def _run_mihlin(ctx, rep):
    from .sobolev import mihlin_norm

    _need_symbols(ctx)
    cfg = ctx.cfg
    N = cfg.probe("N")
    N = mihlin_order(ctx.group.weights) if N is None else int(N)
    rows = []
    expected = len(multi_indices(ctx.group.n, N))
    for name, sig in ctx.symbols:
        m = mihlin_norm(sig, ctx.R, N=N, seed=cfg.seed)
        for alpha, hd, left, right in m.table:
            rows.append((name, " ".join(str(a) for a in alpha), hd, left, right))
        rep.check("%s.mihlin_finite" % name, _finite([m.left_sum, m.right_sum]), [m.left_sum, m.right_sum])
        rep.check("%s.mihlin_rows" % name, len(m.table) == expected, len(m.table), expected)
        rep.check("%s.mihlin_converged" % name, m.converged, m.residual)
        rep.constants["%s.mihlin" % name] = {"N": N, "left": m.left_sum, "right": m.right_sum}
    rep.table("mihlin_table", ("symbol", "alpha", "hom_degree", "left", "right"), rows)


def _range(spec):
    if len(spec) == 2:
        return range(int(spec[0]), int(spec[1]) + 1)
    return range(int(spec[0]), int(spec[1]) + 1, int(spec[2]))


def _run_cz(ctx, rep):
    from . import czo
    from .sobolev import DyadicPartition, lu_norm

    _need_symbols(ctx)
    cfg = ctx.cfg
    Q = ctx.group.Q
    part = DyadicPartition(c_o=1.0)
    lam = 2.0 ** np.linspace(-30, 30, 20001)
    d = part.partition_defect(lam)
    rep.check("partition_sum_to_one", d <= cfg.tol("partition"), d, cfg.tol("partition"))
    js = list(_range(cfg.probe("j_range")))
    ms = list(_range(cfg.probe("m_range")))
    s = _s_lu(ctx)
    arows, crows = [], []
    for name, sig in ctx.symbols:
        dec = czo.dyadic_decompose(sig, ctx.R, js, part)
        ints = np.abs(dec.integrals())
        rep.check("%s.kernel_piece_integrals_zero" % name, float(ints.max()) <= cfg.tol("kernel_integral"),
                  float(ints.max()), cfg.tol("kernel_integral"))
        rep.check("%s.pieces_resolved" % name, not dec.flags, len(dec.flags), 0,
                  "; ".join("j=%d: %s" % kv for kv in sorted(dec.flags.items())) or None)
        prof = czo.annulus_l1_profile(dec, ms, ctx.q)
        arows.extend((name,) + r for r in prof.as_rows())
        far, near = prof.slope_far, prof.slope_near
        rep.constants["%s.annulus_slopes" % name] = {"far": far, "near": near, "Q/2": Q / 2.0}
        rep.check("%s.annulus_far_slope_near_Q/2" % name,
                  far is not None and abs(far - Q / 2.0) <= cfg.tol("slope"), far, [Q / 2.0, cfg.tol("slope")])
        rep.check("%s.annulus_far_decay_at_least_Q/2" % name, far is not None and far >= Q / 2.0 - cfg.tol("slope"),
                  far, Q / 2.0)
        rep.check("%s.annulus_near_epsilon_positive" % name, near is not None and near < 0, near, 0.0)

        grids = [(ctx.grid, ctx.R)] + ([ctx.refined()] if cfg.probe("cz_refine") else [])
        consts = []
        for level, (G, R) in enumerate(grids):
            sg = sig if G is ctx.grid else _rebuild(sig, G, R, cfg, name)
            ps = czo.partial_sum_symbol(sg, R, int(cfg.probe("cz_J")))
            pairs = czo.cz_pairs(G, int(cfg.probe("cz_pairs")), unit=float(cfg.probe("cz_unit")), seed=cfg.seed,
                                 q=QuasiNorm(G.group, ctx.q.kind, ctx.q.func))
            kern = ps.kernel()
            cz = czo.cz_integral(kern, pairs, QuasiNorm(G.group, ctx.q.kind, ctx.q.func))
            adj = czo.cz_integral(ps.adjoint().kernel(), pairs, QuasiNorm(G.group, ctx.q.kind, ctx.q.func), c=cz.c,
                                  star=False)
            dstar = max(abs(a - b) for a, b in zip(cz.values_star, adj.values))
            rep.check("%s.cz_star_equals_adjoint[level=%d]" % (name, level), dstar <= 1e-10, dstar, 1e-10)
            lu = lu_norm(sg, "right", s, R=R, q=QuasiNorm(G.group, ctx.q.kind, ctx.q.func), K=int(cfg.probe("K")))
            C = max(cz.sup, cz.sup_star) / lu.sup
            consts.append(C)
            rep.check("%s.cz_finite[level=%d]" % (name, level), _finite([cz.sup, cz.sup_star, C]), C)
            for (y, yp), v, vs in zip(cz.pairs, cz.values, cz.values_star):
                crows.append((name, level, " ".join("%.12g" % t for t in y), " ".join("%.12g" % t for t in yp), v, vs))
            # linearity of the kernel map sigma -> K
            k2 = czo.partial_sum_symbol(sg.scale(2.0), R, int(cfg.probe("cz_J"))).kernel()
            lin = float(np.max(np.abs(k2.values - 2.0 * kern.values)))
            scale = float(np.max(np.abs(kern.values))) or 1.0
            rep.check("%s.cz_linearity[level=%d]" % (name, level), lin / scale <= 1e-10, lin / scale, 1e-10)
        rep.constants["%s.cz_C" % name] = consts
        if len(consts) == 2:
            var = abs(consts[1] - consts[0]) / consts[0]
            rep.check("%s.cz_C_refinement_stable" % name, var < cfg.tol("cz_refinement"), var,
                      cfg.tol("cz_refinement"))
    rep.table("cz_annulus", ("symbol", "m", "j", "scale_exponent", "summand", "resolved"), arows)
    rep.table("cz_pairs", ("symbol", "level", "y", "y_prime", "K", "K_star"), crows)


def _rebuild(sig, G, R, cfg, name):
    for i, spec in enumerate(cfg.symbols):
        if _symbol_name(spec, i) == name:
            return build_symbol(spec, G, R, cfg.base_dir)
    raise ConfigError("cannot rebuild symbol %r on the refined grid" % name)


def _p2_reference(sig, seed):
    """``(max |F kappa|, Lanczos lower bound)`` for ``||T_sigma||_{2->2}`` on abelian grids.

    The first value goes through the kernel and the forward transform, not
    through the symbol field; the second is a Krylov estimate that can only
    undershoot.
    """
    from .lattice import fourier_transform

    ref = float(np.max(np.abs(fourier_transform(sig.kernel()))))
    F = np.fft.ifftshift(sig.field())
    mv = lambda v: np.fft.ifftn(np.fft.fftn(v) * F)
    rv = lambda v: np.fft.ifftn(np.fft.fftn(v) * np.conj(F))
    low = top_singular_value(mv, rv, sig.grid.shape, "lanczos", seed, 400, 1e-10)[0]
    return ref, low


def _spike_widths(ctx):
    w = ctx.cfg.probe("spike_widths")
    if w is not None:
        return [float(x) for x in w]
    # halve from 8 h_min until the spike is a lattice delta on every axis
    g = ctx.grid
    w = 8.0 * min(g.spacing)
    out = [w]
    while any(w ** v > h / 4.0 for v, h in zip(g.group.weights, g.spacing)):
        w /= 2.0
        out.append(w)
    return out


def _lp_rows(ctx, rep, name, sig):
    from . import czo

    cfg = ctx.cfg
    rows = []
    vals = {}
    fam = czo.probe_family(ctx.grid, int(cfg.probe("family_size")), cfg.seed)
    for p in cfg.probe("p_values"):
        v = czo.lp_opnorm_probe(sig, float(p), family=fam)
        vals[float(p)] = v
        rows.append((name, "lp", float(p), v))
        rep.check("%s.lp_finite[p=%g]" % (name, p), _finite(v), v)
    if sig.abelian and 2.0 in vals:
        ref, low = _p2_reference(sig, cfg.seed)
        rel = abs(vals[2.0] - ref) / max(ref, 1e-300)
        rep.check("%s.p2_equals_sup_sigma" % name, rel <= cfg.tol("p2_exact"), vals[2.0], ref)
        rep.check("%s.p2_krylov_below" % name, low <= vals[2.0] * (1 + cfg.tol("p2_exact")), low, vals[2.0])
    widths = _spike_widths(ctx)
    w = [czo.weak11_probe(sig, czo.spikes(ctx.grid, [wd])) for wd in widths]
    rows.extend((name, "weak11", wd, v) for wd, v in zip(widths, w))
    rep.check("%s.weak11_finite" % name, _finite(w), w)
    if len(w) >= 2:
        ch = abs(w[-1] - w[-2]) / max(w[-2], 1e-300)
        rep.check("%s.weak11_sharpening_stable" % name, ch <= cfg.tol("weak_sharpening"), ch,
                  cfg.tol("weak_sharpening"))
    return rows, vals, w


def _run_lp(ctx, rep):
    _need_symbols(ctx)
    rows = []
    for name, sig in ctx.symbols:
        r, vals, w = _lp_rows(ctx, rep, name, sig)
        rows.extend(r)
        rep.constants["%s.lp" % name] = {"p": list(vals), "value": list(vals.values()), "weak11": w}
    rep.table("lp_probes", ("symbol", "probe", "parameter", "value"), rows)


def _riesz_family(ctx):
    from . import czo

    fam = []
    for alpha in multi_indices(ctx.group.n, int(ctx.cfg.probe("riesz_max_order"))):
        if any(alpha):
            fam.append(("riesz" + "".join(map(str, alpha)), czo.riesz_symbol(alpha, ctx.R)))
    for t in ctx.cfg.probe("taus"):
        fam.append(("Ri%g" % float(t), czo.imaginary_power_symbol(ctx.R, float(t))))
    return fam


def _run_riesz(ctx, rep):
    """Multiplier-theorem chain on the Riesz and imaginary-power family."""
    from .sobolev import lu_norm, mihlin_norm

    cfg = ctx.cfg
    N = cfg.probe("N")
    N = mihlin_order(ctx.group.weights) if N is None else int(N)
    s = _s_lu(ctx)
    rows, lprows = [], []
    ratios_l, ratios_r, ratios_p = [], [], []
    for name, sig in _riesz_family(ctx):
        m = mihlin_norm(sig, ctx.R, N=N, seed=cfg.seed)
        lu_l = lu_norm(sig, "left", s, R=ctx.R, q=ctx.q, K=int(cfg.probe("K"))).sup
        lu_r = lu_norm(sig, "right", s, R=ctx.R, q=ctx.q, K=int(cfg.probe("K"))).sup
        rep.check("%s.mihlin_finite" % name, _finite([m.left_sum, m.right_sum]), [m.left_sum, m.right_sum])
        r, vals, w = _lp_rows(ctx, rep, name, sig)
        lprows.extend(r)
        rows.append((name, N, m.left_sum, m.right_sum, lu_l, lu_r) + tuple(vals[float(p)] for p in
                                                                          cfg.probe("p_values")))
        ratios_l.append(lu_l / m.left_sum)
        ratios_r.append(lu_r / m.right_sum)
        ratios_p.append(max(vals.values()) / max(lu_l, lu_r))
    C1l, C1r, C2 = max(ratios_l), max(ratios_r), max(ratios_p)
    rep.constants["C1_left"] = C1l
    rep.constants["C1_right"] = C1r
    rep.constants["C2"] = C2
    rep.constants["C1_left_spread"] = C1l / min(ratios_l)
    rep.constants["C1_right_spread"] = C1r / min(ratios_r)
    rep.constants["C2_spread"] = C2 / min(ratios_p)
    rep.check("family.C1_finite", _finite([C1l, C1r]), [C1l, C1r])
    rep.check("family.C2_finite", _finite(C2), C2)
    header = ("symbol", "N", "mihlin_left", "mihlin_right", "lu_left", "lu_right") + tuple(
        "lp_p%g" % float(p) for p in cfg.probe("p_values"))
    rep.table("riesz_family", header, rows)
    rep.table("riesz_lp_probes", ("symbol", "probe", "parameter", "value"), lprows)


_RUNNERS = {
    "validate": _run_validate,
    "norms": _run_norms,
    "lu": _run_lu,
    "mihlin": _run_mihlin,
    "cz": _run_cz,
    "lp": _run_lp,
    "riesz": _run_riesz,
}


def run_experiment(cfg: ExperimentConfig, subcommand: str, out_dir=None):
    """Run one subcommand and write its report.

    Returns ``(exit_status, summary_path, report)``; the status is 0 iff every
    assertion passed.
    """
    if subcommand not in SUBCOMMANDS:
        raise ConfigError("unknown subcommand %r" % subcommand)
    ctx = _Context(cfg)
    rep = Report(subcommand)
    if subcommand == "all":
        for name in ("validate", "norms", "lu", "mihlin", "cz", "lp", "riesz"):
            if name != "validate" and name != "riesz" and not ctx.symbols:
                continue
            sub = Report(name)
            _RUNNERS[name](ctx, sub)
            rep.assertions.extend(dict(a, name="%s.%s" % (name, a["name"])) for a in sub.assertions)
            rep.constants.update({"%s.%s" % (name, k): v for k, v in sub.constants.items()})
            rep.tables.update(sub.tables)
    else:
        _RUNNERS[subcommand](ctx, rep)
    out = Path(out_dir) if out_dir is not None else cfg.base_dir / cfg.output
    path = emit_report(rep, cfg, out)
    return (0 if rep.ok else 1), path, rep
