"""Command-line entry point: ``lienard-atlas <command> ...``.

Every command builds its whole document in memory and writes it only on
success, so a numerical failure (exit 3) never leaves partial output behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .compactify import (Chart, NoConclusion, ThresholdAmbiguity, equator_stability_probe,
                         infinity_equilibria)
from .connections import BadBracket, CurveKind, NoCrossing, Unresolved, region_classify, trace_curve
from .cycles import ScanIncomplete, ScanSpec, count_cycles
from .equilibria import DEGENERATE_DAMPING, find_equilibria, surface_membership
from .flow import IntegratorOptions, NoReturn, Stop, integrate
from .melnikov import PeriodNotClosed, SingularDrift, abelian_integrals, energy_bounds, melnikov_zero_count
from .model import DomainError, State, SystemParams, to_scaled

SCHEMA_VERSION = 1
SWEEP_HEADER = ("a1", "a2", "delta", "region", "n_small", "n_large")
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
NUMERICAL_ERRORS = (ScanIncomplete, NoCrossing, BadBracket, Unresolved, NoReturn, NoConclusion,
                    ThresholdAmbiguity, PeriodNotClosed, SingularDrift, ArithmeticError, RuntimeError)

log = logging.getLogger("lienard_atlas")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers

def _num(v: float):
    """JSON-safe float: non-finite values become strings."""
    v = float(v)
    if math.isfinite(v):
        return v
    return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _params(args) -> SystemParams:
    scaled = [args.a1, args.a2, args.delta]
    raw = [args.mu1, args.mu2, args.mu3, args.b]
    have_s = any(v is not None for v in scaled)
    have_r = any(v is not None for v in raw)
    if have_s and have_r:
        raise UsageError("give either --a1/--a2/--delta or --mu1/--mu2/--mu3/-b, not both")
    try:
        if have_s:
            if any(v is None for v in scaled):
                raise UsageError("scaled form needs --a1, --a2 and --delta")
            return SystemParams.scaled(*scaled)
        if have_r:
            if any(v is None for v in raw):
                raise UsageError("raw form needs --mu1, --mu2, --mu3 and -b")
            return SystemParams.raw(*raw)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    raise UsageError("no parameters given")


def _opts(args) -> IntegratorOptions:
    kw = {}
    for name, key in (("rtol", "rel_tol"), ("atol", "abs_tol"), ("max_time", "max_time")):
        v = getattr(args, name, None)
        if v is not None:
            kw[key] = v
    try:
        return IntegratorOptions(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _config_defaults(path: str, command: str) -> dict:
    """Flatten a RunConfig JSON document into argparse destinations."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict) or cfg.get("schema") != SCHEMA_VERSION:
        raise UsageError(f"config must be an object with schema: {SCHEMA_VERSION}")
    if cfg.get("command", command) != command:
        raise UsageError(f"config is for command {cfg['command']!r}, not {command!r}")
    out = {}
    for section in ("params", "options"):
        out.update(cfg.get(section, {}))
    integ = cfg.get("integrator", {})
    for key, dest in (("rel_tol", "rtol"), ("abs_tol", "atol"), ("max_time", "max_time")):
        if key in integ:
            out[dest] = integ[key]
    outp = cfg.get("output", {})
    if "path" in outp:
        out["output"] = outp["path"]
    if "format" in outp and outp["format"] != FORMATS[command]:
        raise UsageError(f"{command} writes {FORMATS[command]}, not {outp['format']}")
    return out


def _equilibria_doc(p: SystemParams) -> list[dict]:
    rows = []
    for e in find_equilibria(p):
        k = e.kind
        rows.append({
            "label": e.label, "x": _num(e.x), "jac_det": _num(e.jac_det), "jac_tr": _num(e.jac_tr),
            "kind": k.kind.value if k else None,
            "focal_value": None if k is None or k.focal_value is None else _num(k.focal_value),
            "inferred": bool(k.inferred) if k else False,
        })
    return rows


def _infinity_doc(p: SystemParams) -> dict:
    b = p.damping_slope
    eqs = infinity_equilibria(p)
    doc = {"damping_slope": _num(b), "threshold": _num(DEGENERATE_DAMPING),
           "equator_equilibria": [{"chart": q.chart.value, "u": _num(q.u), "label": q.label,
                                   "degenerate": q.degenerate} for q in eqs]}
    doc["equator"] = equator_stability_probe(p).value if b < DEGENERATE_DAMPING else None
    return doc


def _region(p: SystemParams) -> str | None:
    try:
        q, _ = to_scaled(p)
    except DomainError:
        return None
    if q.delta <= 0.0:
        return None
    return region_classify(q.a1, q.a2, q.delta)


# ---------------------------------------------------------------- commands

def cmd_classify(args) -> str:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        p = _params(args)
    notes = [str(w.message) for w in caught]
    for n in notes:
        log.warning(n)
    sm = surface_membership(p)
    doc = {
        "schema": SCHEMA_VERSION, "command": "classify", "params": p.describe(),
        "time_reversed": p.time_reversed, "warnings": notes,
        "equilibria": _equilibria_doc(p),
        "surfaces": sorted(sm.labels),
        "infinity": _infinity_doc(p),
        "region": _region(p),
    }
    return _dump(doc)


def _cycles_doc(census) -> list[dict]:
    return [{"kind": c.kind.value, "stability": c.stability.value, "multiplier": _num(c.multiplier),
             "period": _num(c.period), "section_point": [_num(c.section_point.x), _num(c.section_point.y)],
             "x_range": [_num(v) for v in c.x_range], "enclosed": list(c.enclosed)} for c in census.cycles]


def cmd_cycles(args) -> str:
    p = _params(args)
    census = count_cycles(p, ScanSpec(n=args.n, opts=_opts(args)))
    if census.total > 4:
        log.error("census found %d cycles, above the bound of four", census.total)
    doc = {"schema": SCHEMA_VERSION, "command": "cycles", "params": p.describe(),
           "n_small": census.n_small, "n_large": census.n_large, "total": census.total,
           "certificates": list(census.certificates), "cycles": _cycles_doc(census)}
    return _dump(doc)


_CURVE_NAMES = {k.value.lower(): k for k in CurveKind}


def cmd_trace(args) -> str:
    kind = _CURVE_NAMES.get(args.curve.lower())
    if kind is None:
        raise UsageError(f"unknown curve {args.curve!r}; choose from {', '.join(sorted(_CURVE_NAMES))}")
    if args.a1 is None or args.delta is None:
        raise UsageError("trace needs --a1 and --delta")
    pt = trace_curve(kind, args.a1, args.delta, bracket=tuple(args.bracket) if args.bracket else None)
    doc = {"schema": SCHEMA_VERSION, "command": "trace", "curve": kind.value, "a1": _num(pt.a1),
           "delta": _num(pt.delta), "a2_star": _num(pt.a2_star), "bracket_width": _num(pt.bracket_width),
           "residual": _num(pt.residual)}
    return _dump(doc)


def cmd_melnikov(args) -> str:
    if args.a1 is None or args.a2 is None:
        raise UsageError("melnikov needs --a1 and --a2")
    try:
        e1, e2 = energy_bounds(args.a1)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    emin = args.emin if args.emin is not None else e2 + 1e-6
    emax = args.emax if args.emax is not None else 10.0 * e2 + 1.0
    if not e2 < emin < emax:
        raise UsageError(f"need e2 = {e2:.12g} < emin < emax")
    n = args.n
    count, zeros, ps = melnikov_zero_count(args.a1, args.a2, (emin, emax), n)
    rows = []
    for e in e2 + np.geomspace(emin - e2, emax - e2, n):
        r = abelian_integrals(args.a1, float(e)).with_a2(args.a2)
        rows.append({k: _num(getattr(r, k)) for k in ("e", "I0", "I2", "I4", "dI0", "dI2", "dI4",
                                                      "Z", "w", "M", "P")})
    doc = {"schema": SCHEMA_VERSION, "command": "melnikov", "a1": _num(args.a1), "a2": _num(args.a2),
           "e1": _num(e1), "e2": _num(e2), "emin": _num(emin), "emax": _num(emax), "n": n,
           "rows": rows, "zero_count": count,
           "zeros": [{"e": _num(z), "P": _num(pz)} for z, pz in zip(zeros, ps)]}
    return _dump(doc)


def _sweep_point(job):
    a1, a2, delta, n = job
    p = SystemParams.scaled(a1, a2, delta)
    census = count_cycles(p, ScanSpec(n=n))
    return (a1, a2, delta, region_classify(a1, a2, delta), census.n_small, census.n_large)


def _axis(spec) -> list[float]:
    lo, hi, n = spec
    n = int(n)
    if n < 1:
        raise UsageError("range needs at least one point")
    return [float(v) for v in np.linspace(lo, hi, n)]


def cmd_sweep(args) -> str:
    if args.delta is None or args.a1_range is None or args.a2_range is None:
        raise UsageError("sweep needs --a1-range, --a2-range and --delta")
    if args.jobs < 1:
        raise UsageError("--jobs must be positive")
    for lo in (args.a1_range[0], args.a1_range[1]):
        if lo < -1.0:
            raise UsageError("a1 must be >= -1")
    jobs = [(a1, a2, args.delta, args.n) for a1 in _axis(args.a1_range) for a2 in _axis(args.a2_range)]
    if args.jobs == 1:
        rows = [_sweep_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    worst = max((r[4] + r[5] for r in rows), default=0)
    log.info("largest census in sweep: %d cycles", worst)
    if worst > 4:
        log.error("a census exceeded the bound of four cycles")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for a1, a2, delta, region, ns, nl in rows:
        w.writerow([repr(a1), repr(a2), repr(delta), region, ns, nl])
    return buf.getvalue()


# ---------------------------------------------------------------- portrait

def disc_point(x: float, y: float) -> tuple[float, float]:
    """Plane to unit disc: cube-root the y-axis, then compress the radius by r/(1+r)."""
    X, Y = x, math.copysign(abs(y) ** (1.0 / 3.0), y)
    r = math.hypot(X, Y)
    if r == 0.0:
        return 0.0, 0.0
    if not math.isfinite(r):
        return (X / r if math.isfinite(X) else math.copysign(1.0, X)), 0.0
    return X / (1.0 + r), Y / (1.0 + r)


def _equator_direction(chart: Chart, u: float) -> tuple[float, float]:
    sx = 1.0 if chart is Chart.UX else -1.0
    # along the chart ray y = u x^3, the cube-rooted coordinates grow like (1, u^(1/3)) |x|
    c = math.copysign(abs(u) ** (1.0 / 3.0), u)
    n = math.hypot(1.0, c)
    return sx / n, sx * c / n


class _Svg:
    def __init__(self, size: int = 640):
        self.size, self.c, self.R = size, size / 2.0, size / 2.0 - 20.0
        self.parts: list[str] = []

    def xy(self, dx: float, dy: float) -> tuple[float, float]:
        return self.c + self.R * dx, self.c - self.R * dy

    def path(self, pts, stroke: str, width: float = 1.0, cls: str = "") -> None:
        if len(pts) < 2:
            return
        coords = [self.xy(*disc_point(x, y)) for x, y in pts]
        d = "M" + " L".join(f"{u:.2f},{v:.2f}" for u, v in coords)
        self.parts.append(f'<path class="{cls}" d="{d}" fill="none" stroke="{stroke}" stroke-width="{width}"/>')

    def glyph(self, dx: float, dy: float, shape: str, fill: str, cls: str, title: str) -> None:
        u, v = self.xy(dx, dy)
        t = f"<title>{title}</title>"
        if shape == "square":
            self.parts.append(f'<rect class="{cls}" x="{u - 4:.2f}" y="{v - 4:.2f}" width="8" height="8" '
                              f'fill="{fill}" stroke="black">{t}</rect>')
        else:
            self.parts.append(f'<circle class="{cls}" cx="{u:.2f}" cy="{v:.2f}" r="4.5" fill="{fill}" '
                              f'stroke="black">{t}</circle>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.size}" height="{self.size}" '
                f'viewBox="0 0 {self.size} {self.size}">\n'
                f'<circle class="disc-boundary" cx="{self.c}" cy="{self.c}" r="{self.R}" fill="white" '
                f'stroke="black" stroke-width="1.5"/>\n')
        return head + "\n".join(self.parts) + "\n</svg>\n"


def _thin(states: np.ndarray, limit: int = 1500) -> list[tuple[float, float]]:
    step = max(1, len(states) // limit)
    pts = [(float(s[0]), float(s[1])) for s in states[::step]]
    last = (float(states[-1][0]), float(states[-1][1]))
    if pts[-1] != last:
        pts.append(last)
    return pts


def cmd_portrait(args) -> str:
    p = _params(args)
    opts = _opts(args)
    svg = _Svg()
    eqs = find_equilibria(p)
    # separatrices: the four branches of every saddle
    sep_opts = IntegratorOptions(rel_tol=opts.rel_tol, abs_tol=opts.abs_tol, max_time=args.sep_time,
                                 max_radius=1e4)
    eps = 1e-6
    for e in eqs:
        if not e.is_saddle:
            continue
        tr, det = e.jac_tr, e.jac_det
        root = math.sqrt(tr * tr / 4.0 - det)
        for lam, reverse in ((tr / 2.0 + root, False), (tr / 2.0 - root, True)):
            # eigenvector of [[0, 1], [-det_part, tr]] for lam is (1, lam)
            n = math.hypot(1.0, lam)
            for sgn in (1.0, -1.0):
                s0 = State(e.x + sgn * eps / n, sgn * eps * lam / n)
                traj = integrate(p, s0, sep_opts, reverse=reverse)
                color = "#c0392b" if not reverse else "#2471a3"
                svg.path(_thin(traj.states), color, 1.0, "separatrix")
    # cycles
    census = count_cycles(p, ScanSpec(n=args.n, opts=opts))
    for c in census.cycles:
        o = IntegratorOptions(rel_tol=opts.rel_tol, abs_tol=opts.abs_tol, max_time=c.period)
        traj = integrate(p, c.section_point, o, capture=False)
        if traj.termination.reason is not Stop.MAX_TIME:
            log.warning("cycle orbit ended early: %s", traj.termination.reason.value)
        color = "#1e8449" if c.stability.value == "Stable" else "#d35400"
        svg.path(_thin(traj.states), color, 2.0, "cycle")
    for e in eqs:
        kind = e.kind.kind.value if e.kind else "?"
        shape = "square" if e.is_saddle else "circle"
        fill = "white" if e.is_saddle else ("black" if e.jac_tr < 0.0 else "white")
        svg.glyph(*disc_point(e.x, 0.0), shape, fill, "equilibrium", f"{e.label}: {kind}")
    if p.damping_slope >= DEGENERATE_DAMPING:
        for q in infinity_equilibria(p):
            svg.glyph(*_equator_direction(q.chart, q.u), "circle", "grey", "equilibrium-infinity",
                      f"{q.chart.value} u={q.u:.6g}: {q.label}")
    return svg.render()


# ---------------------------------------------------------------- parser

COMMANDS = {"classify": cmd_classify, "cycles": cmd_cycles, "trace": cmd_trace,
            "melnikov": cmd_melnikov, "sweep": cmd_sweep, "portrait": cmd_portrait}
FALLBACKS = {"classify": {}, "trace": {}, "melnikov": {"n": 64}, "cycles": {"n": 200},
             "portrait": {"n": 200, "sep_time": 40.0}, "sweep": {"n": 200, "jobs": 1}}
FORMATS = {"classify": "json", "cycles": "json", "trace": "json", "melnikov": "json",
           "sweep": "csv", "portrait": "svg"}


def _add_params(sp, scaled_only: bool = False) -> None:
    g = sp.add_argument_group("parameters")
    g.add_argument("--a1", type=float)
    g.add_argument("--a2", type=float)
    g.add_argument("--delta", type=float)
    if not scaled_only:
        g.add_argument("--mu1", type=float)
        g.add_argument("--mu2", type=float)
        g.add_argument("--mu3", type=float)
        g.add_argument("-b", type=float)


def _add_integrator(sp) -> None:
    g = sp.add_argument_group("integrator")
    g.add_argument("--rtol", type=float)
    g.add_argument("--atol", type=float)
    g.add_argument("--max-time", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lienard-atlas",
                                 description="Global dynamics of the quintic Z2-equivariant Lienard family.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON RunConfig supplying defaults")
        sp.add_argument("-o", "--output", help="write here instead of stdout")
        if name in ("classify", "cycles", "portrait"):
            _add_params(sp)
        if name in ("cycles", "portrait"):
            _add_integrator(sp)
            sp.add_argument("--n", type=int, help="scan grid size (default 200)")
        if name == "portrait":
            sp.add_argument("--sep-time", type=float, help="time budget per separatrix (default 40)")
        if name == "trace":
            sp.add_argument("--curve", required=False)
            sp.add_argument("--a1", type=float)
            sp.add_argument("--delta", type=float)
            sp.add_argument("--bracket", type=float, nargs=2)
        if name == "melnikov":
            sp.add_argument("--a1", type=float)
            sp.add_argument("--a2", type=float)
            sp.add_argument("--emin", type=float)
            sp.add_argument("--emax", type=float)
            sp.add_argument("--n", type=int, help="energy grid size (default 64)")
        if name == "sweep":
            sp.add_argument("--a1-range", type=float, nargs=3, metavar=("LO", "HI", "N"))
            sp.add_argument("--a2-range", type=float, nargs=3, metavar=("LO", "HI", "N"))
            sp.add_argument("--delta", type=float)
            sp.add_argument("--n", type=int, help="scan grid size per point (default 200)")
            sp.add_argument("--jobs", type=int, help="worker processes (default 1)")
    return ap


def _setup_logging() -> None:
    level = os.environ.get("LIENARD_ATLAS_LOG", "warn").lower()
    if level not in LOG_LEVELS:
        raise UsageError(f"LIENARD_ATLAS_LOG must be one of {', '.join(LOG_LEVELS)}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr, force=True)


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)  # exits 2 on malformed flags
    try:
        _setup_logging()
        if args.config:
            for k, v in _config_defaults(args.config, args.command).items():
                if not hasattr(args, k):
                    raise UsageError(f"config key {k!r} does not apply to {args.command}")
                if getattr(args, k) is None:
                    setattr(args, k, v)
        for k, v in FALLBACKS[args.command].items():
            if getattr(args, k) is None:
                setattr(args, k, v)
        if args.command == "trace" and not args.curve:
            raise UsageError("trace needs --curve")
        text = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"lienard-atlas: error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"lienard-atlas: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"lienard-atlas: error: {exc}", file=sys.stderr)
        return 2
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
