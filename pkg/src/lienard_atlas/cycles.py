"""Limit-cycle detection by return-map fixed points, plus no-cycle certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .equilibria import Equilibrium, find_equilibria
from .flow import (
    Direction,
    IntegratorOptions,
    NoReturn,
    Section,
    Stop,
    horizontal_line,
    integrate,
    positive_y_axis,
    return_map,
    vertical_line,
)
from .model import Form, State, SystemParams, eval_field

STABILITY_BAND = 1e-6


class ScanIncomplete(RuntimeError):
    def __init__(self, msg: str, unresolved: list, census: "CycleCensus"):
        super().__init__(msg)
        self.unresolved = unresolved
        self.census = census


class CycleKind(str, Enum):
    SMALL_ORIGIN = "SmallAroundOrigin"
    SMALL_RIGHT = "SmallAroundRight"
    SMALL_LEFT = "SmallAroundLeft"
    LARGE = "Large"


class Stability(str, Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    SEMISTABLE = "SemiStable"


@dataclass(frozen=True)
class LimitCycle:
    section_point: State
    period: float
    multiplier: float  # derivative of the full return map at the fixed point
    kind: CycleKind
    stability: Stability
    enclosed: tuple[str, ...]
    residual: float  # |P(y*) - y*|
    x_range: tuple[float, float]

    @property
    def is_small(self) -> bool:
        return self.kind is not CycleKind.LARGE


@dataclass(frozen=True)
class ScanSpec:
    n: int = 200
    y_min: float = 1e-4
    y_max: float | None = None
    opts: IntegratorOptions = IntegratorOptions()
    strict: bool = True
    confirm_semistable: bool = True


@dataclass
class ScanRecord:
    """Displacement P(c) - c over one section grid; NaN where no return."""

    section: str
    center: float
    coords: list[float] = field(default_factory=list)
    displacement: list[float] = field(default_factory=list)
    outcome: list[str] = field(default_factory=list)

    def sign_pattern(self) -> str:
        out = []
        for d in self.displacement:
            out.append("." if math.isnan(d) else ("+" if d > 0 else "-"))
        return "".join(out)


@dataclass(frozen=True)
class CycleCensus:
    cycles: tuple[LimitCycle, ...]
    scans: tuple[ScanRecord, ...]
    certificates: tuple[str, ...]
    unresolved: tuple = ()

    @property
    def n_large(self) -> int:
        return sum(1 for c in self.cycles if c.kind is CycleKind.LARGE)

    @property
    def n_small(self) -> int:
        return sum(1 for c in self.cycles if c.kind is not CycleKind.LARGE)

    @property
    def total(self) -> int:
        return len(self.cycles)

    def count(self, kind: CycleKind) -> int:
        return sum(1 for c in self.cycles if c.kind is kind)


def bendixson_dulac_certificate(p: SystemParams) -> bool:
    """True when f(x) = f0 + f2 x^2 >= 0 everywhere, i.e. mu3 >= 0 / a2 >= 0.

    The divergence -f(x) then has one sign and vanishes at most on x = 0,
    which rules out closed orbits.
    """
    _, _, f0, f2 = p.coeffs
    return f0 >= 0.0 and f2 >= 0.0


def strip_certificate(p: SystemParams) -> float | None:
    """Half-width of the strip around x = 0 that holds no closed orbit.

    This is the positive zero of F(x) = f0 x + f2 x^3 / 3, which equals
    sqrt(-3 a2) in scaled form.
    """
    _, _, f0, f2 = p.coeffs
    if f0 >= 0.0 or f2 <= 0.0:
        return None
    return math.sqrt(-3.0 * f0 / f2)


def _length_scale(p: SystemParams) -> float:
    g1, g3, f0, f2 = p.coeffs
    return max(1.0, abs(g1) ** 0.25, abs(g3) ** 0.5, abs(f0) ** 0.5, abs(f2) ** 0.5)


class _Map:
    """Displacement function of one return map, with bookkeeping."""

    def __init__(self, p: SystemParams, section: Section, half: bool, guards: list[Section],
                 origin: float, opts: IntegratorOptions):
        self.p, self.section, self.half, self.guards = p, section, half, guards
        self.origin, self.opts = origin, opts

    def coord(self, d: float) -> float:
        return self.origin + d

    def eval(self, d: float, derivative: bool = False):
        r = return_map(self.p, self.section, self.coord(d), self.half, self.opts, self.guards, derivative)
        return r

    def disp(self, d: float) -> float:
        try:
            return self.eval(d).value - self.coord(d)
        except NoReturn:
            return math.nan

    def disp_outcome(self, d: float) -> tuple[float, str]:
        try:
            return self.eval(d).value - self.coord(d), "return"
        except NoReturn as exc:
            term = exc.termination
            if term is None:
                return math.nan, "none"
            if term.reason is Stop.SECTION_HIT:
                return math.nan, "guard"
            return math.nan, term.reason.value


def _grid(lo: float, hi: float, n: int) -> np.ndarray:
    return np.geomspace(lo, hi, n)


def _scan(m: _Map, ds: np.ndarray, record: ScanRecord) -> tuple[np.ndarray, list[str]]:
    vals = np.empty(len(ds))
    outs = []
    for i, d in enumerate(ds):
        vals[i], o = m.disp_outcome(float(d))
        outs.append(o)
    record.coords = [m.coord(float(d)) for d in ds]
    record.displacement = [float(v) for v in vals]
    record.outcome = outs
    return vals, outs


def _brackets(m: _Map, ds: np.ndarray, vals: np.ndarray) -> tuple[list, list]:
    """Sign-change brackets, plus tangency candidates from local extrema."""
    brackets = []
    tangent = []
    n = len(ds)
    for i in range(n - 1):
        a, b = vals[i], vals[i + 1]
        if math.isnan(a) or math.isnan(b):
            continue
        if a == 0.0:
            brackets.append((ds[i], ds[i]))
        elif a * b < 0.0:
            brackets.append((ds[i], ds[i + 1]))
    # next to a no-return interval the displacement can change sign between
    # the domain edge and the first grid node (cycles hugging a separatrix)
    for i in range(n - 1):
        a, b = vals[i], vals[i + 1]
        if math.isnan(a) == math.isnan(b):
            continue
        inside, outside = (ds[i + 1], ds[i]) if math.isnan(a) else (ds[i], ds[i + 1])
        v_in = b if math.isnan(a) else a
        edge = _domain_edge(m, inside, outside)
        pts = [edge + (inside - edge) * 10.0 ** (-k) for k in range(14, 0, -1)]
        seq = [(u, m.disp(float(u))) for u in pts] + [(inside, v_in)]
        seq = [(u, v) for u, v in seq if not math.isnan(v)]
        if math.isnan(a):
            order = seq
        else:
            order = seq[::-1]
        for (u0, v0), (u1, v1) in zip(order, order[1:]):
            if v0 * v1 < 0.0:
                brackets.append((min(u0, u1), max(u0, u1)))
    # a local extremum of the displacement that stays on one side of zero may
    # hide a close pair of fixed points between grid nodes
    for i in range(1, n - 1):
        a, b, c = vals[i - 1], vals[i], vals[i + 1]
        if math.isnan(a) or math.isnan(b) or math.isnan(c):
            continue
        if not (a * b > 0.0 and b * c > 0.0):
            continue
        if abs(b) < abs(a) and abs(b) < abs(c):
            sgn = 1.0 if b > 0 else -1.0

            def obj(u, sgn=sgn):
                v = m.disp(float(math.exp(u)))
                return math.inf if math.isnan(v) else sgn * v

            res = minimize_scalar(obj, bounds=(math.log(ds[i - 1]), math.log(ds[i + 1])),
                                  method="bounded", options={"xatol": 1e-12})
            dstar = float(math.exp(res.x))
            vstar = sgn * res.fun
            if not math.isfinite(vstar):
                continue
            if vstar * b < 0.0:
                brackets.append((ds[i - 1], dstar))
                brackets.append((dstar, ds[i + 1]))
            elif abs(vstar) < 1e-10:
                tangent.append(dstar)
    return brackets, tangent


def _domain_edge(m: _Map, inside: float, outside: float) -> float:
    """Bisect the boundary between returning and non-returning starts."""
    for _ in range(60):
        mid = 0.5 * (inside + outside)
        if mid in (inside, outside):
            break
        if math.isnan(m.disp(mid)):
            outside = mid
        else:
            inside = mid
    return inside if abs(inside - outside) == 0.0 else outside


class _Hole(ArithmeticError):
    pass


def _nan_raises(f):
    def g(u):
        v = f(u)
        if math.isnan(v):
            raise _Hole(u)
        return v
    return g


def _refine_around_holes(m: _Map, lo: float, hi: float) -> list[float]:
    """A bracket with a no-return gap inside it.

    The displacement jumps across a separatrix, so a sign change that
    straddles the gap is not a fixed point. Resample and keep only sign
    changes between adjacent defined samples.
    """
    us = np.linspace(lo, hi, 65)
    vs = [m.disp(float(u)) for u in us]
    roots = []
    for (u0, v0), (u1, v1) in zip(zip(us, vs), zip(us[1:], vs[1:])):
        if math.isnan(v0) or math.isnan(v1) or v0 * v1 > 0.0:
            continue
        roots += _refine(m, float(u0), float(u1))
    return roots


def _refine(m: _Map, lo: float, hi: float) -> list[float]:
    """Fixed points of the displacement inside a sign-change bracket."""
    if lo == hi:
        return [lo]
    f = m.disp
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return [lo]
    if fhi == 0.0:
        return [hi]
    try:
        d = brentq(_nan_raises(f), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    except _Hole:
        return _refine_around_holes(m, lo, hi)
    # one Newton polish with the variational derivative
    try:
        r = m.eval(d, derivative=True)
        g = r.value - m.coord(d)
        dg = r.derivative - 1.0
        if dg != 0.0:
            step = -g / dg
            if lo <= d + step <= hi and abs(m.disp(d + step)) < abs(g):
                d += step
    except NoReturn:
        pass
    return [d]


def _winding(xs: np.ndarray, ys: np.ndarray, px: float, py: float = 0.0) -> int:
    """Winding number of a closed polygon about (px, py)."""
    ang = np.unwrap(np.arctan2(ys - py, xs - px))
    return int(round((ang[-1] - ang[0]) / (2.0 * math.pi)))


def _closed_orbit(p: SystemParams, start: State, section: Section, opts: IntegratorOptions):
    """Integrate one full turn from a fixed point of a return map."""
    v = eval_field(p, start)
    lead = v.x if section.vertical else v.y
    d = Direction.INCREASING if lead > 0 else Direction.DECREASING
    target = Section(section.kind, d, section.value, section.lo, section.hi, section.name)
    return integrate(p, start, opts, stop=target, capture=False)


def _classify_cycle(p: SystemParams, eqs: list[Equilibrium], traj) -> tuple[CycleKind | None, tuple[str, ...]]:
    xs = np.concatenate([traj.states[:, 0], traj.states[:1, 0]])
    ys = np.concatenate([traj.states[:, 1], traj.states[:1, 1]])
    enclosed = tuple(e.label for e in eqs if _winding(xs, ys, e.x) != 0)
    if len(eqs) > 1 and len(enclosed) == len(eqs):
        return CycleKind.LARGE, enclosed
    if enclosed == ("E_0",):
        return CycleKind.SMALL_ORIGIN, enclosed
    if enclosed == ("E_r2",):
        return CycleKind.SMALL_RIGHT, enclosed
    if enclosed == ("E_l2",):
        return CycleKind.SMALL_LEFT, enclosed
    return None, enclosed


def _stability(mult: float, semistable: bool) -> Stability:
    if semistable and abs(mult - 1.0) <= STABILITY_BAND:
        return Stability.SEMISTABLE
    return Stability.STABLE if mult < 1.0 else Stability.UNSTABLE


def _build_cycle(p, eqs, m: _Map, d: float, opts: IntegratorOptions, semistable: bool = False) -> LimitCycle | None:
    r = m.eval(d, derivative=True)
    y = m.coord(d)
    start = m.section.point(y)
    mult = r.derivative ** 2 if m.half else r.derivative
    traj = _closed_orbit(p, start, m.section, opts)
    if traj.termination.reason is not Stop.SECTION_HIT:
        return None
    kind, enclosed = _classify_cycle(p, eqs, traj)
    if kind is None:
        return None
    xs = traj.states[:, 0]
    return LimitCycle(
        section_point=start,
        period=float(traj.t[-1]),
        multiplier=float(mult),
        kind=kind,
        stability=_stability(mult, semistable),
        enclosed=enclosed,
        residual=abs(r.value - y),
        x_range=(float(xs.min()), float(xs.max())),
    )


def _confirm_semistable(p: SystemParams, m_builder, d: float, width: float) -> bool:
    """Perturb a2 by +-1e-4 and look for the 0 <-> 2 change of fixed points."""
    if p.form is not Form.SCALED:
        return False
    counts = []
    for da in (-1e-4, 1e-4):
        q = p.with_a2(p.a2 + da)
        m = m_builder(q)
        lo, hi = max(d - width, d * 0.5), d + width
        ds = np.linspace(lo, hi, 41)
        vals = np.array([m.disp(float(u)) for u in ds])
        ok = vals[~np.isnan(vals)]
        counts.append(int(np.sum(ok[:-1] * ok[1:] < 0.0)))
    return sorted(counts) == [0, 2]


def _scan_map(p, eqs, m: _Map, ds: np.ndarray, record: ScanRecord, spec: ScanSpec, m_builder,
              unresolved: list) -> list[LimitCycle]:
    vals, outs = _scan(m, ds, record)
    for d, o in zip(ds, outs):
        if o in (Stop.MAX_TIME.value, Stop.STEP_FAILURE.value):
            unresolved.append((record.section, m.coord(float(d)), o))
    brackets, tangent = _brackets(m, ds, vals)
    found = []
    for lo, hi in brackets:
        try:
            for d in _refine(m, float(lo), float(hi)):
                cyc = _build_cycle(p, eqs, m, d, spec.opts)
                if cyc is not None:
                    found.append(cyc)
        except (NoReturn, ValueError) as exc:
            unresolved.append((record.section, (m.coord(float(lo)), m.coord(float(hi))), str(exc)))
    for d in tangent:
        try:
            r = m.eval(d, derivative=True)
        except NoReturn:
            continue
        mult = r.derivative ** 2 if m.half else r.derivative
        if abs(mult - 1.0) > STABILITY_BAND:
            continue
        confirmed = spec.confirm_semistable and _confirm_semistable(p, m_builder, d, 0.05 * d)
        cyc = _build_cycle(p, eqs, m, d, spec.opts, semistable=confirmed)
        if cyc is not None:
            found.append(cyc)
    return found


def _dedup(cycles: list[LimitCycle]) -> list[LimitCycle]:
    out: list[LimitCycle] = []
    for c in cycles:
        if any(c.kind == o.kind and math.dist(c.section_point, o.section_point) < 1e-8 for o in out):
            continue
        out.append(c)
    return out


def _half_map(p: SystemParams, opts: IntegratorOptions) -> _Map:
    # an upward crossing of the positive x-axis means the orbit has started to
    # wind around an equilibrium in x > 0 and can no longer reach x = 0
    guard = horizontal_line(0.0, Direction.INCREASING, lo=0.0)
    return _Map(p, positive_y_axis(), True, [guard], 0.0, opts)


def _focus_map(p: SystemParams, eq: Equilibrium, left_wall: float, opts: IntegratorOptions) -> _Map:
    side = 1.0 if eq.x > 0 else -1.0
    if side > 0:
        sec = horizontal_line(0.0, Direction.DECREASING, lo=eq.x)
    else:
        sec = horizontal_line(0.0, Direction.INCREASING, hi=eq.x)
    sec = Section(sec.kind, sec.direction, 0.0, sec.lo, sec.hi, f"y = 0 beside {eq.label}")
    guard = vertical_line(left_wall)

    class _Side(_Map):
        def coord(self, d: float) -> float:
            return self.origin + side * d

    return _Side(p, sec, False, [guard], eq.x, opts)


def count_cycles(p: SystemParams, scan: ScanSpec = ScanSpec()) -> CycleCensus:
    """Census of limit cycles at one parameter point.

    Symmetric cycles (large ones and those around the origin) are fixed points
    of the half return map on the positive y-axis. Small cycles around an outer
    antisaddle are fixed points of the full return map on the ray y = 0 beyond
    it, with the nearest saddle abscissa as a wall.
    """
    if bendixson_dulac_certificate(p):
        return CycleCensus((), (), ("bendixson_dulac",))
    certs = []
    strip = strip_certificate(p)
    if strip is not None:
        certs.append(f"strip:{strip:.12g}")
    eqs = find_equilibria(p, classify_kinds=False)
    L = _length_scale(p)
    unresolved: list = []
    cycles: list[LimitCycle] = []
    scans: list[ScanRecord] = []

    # symmetric cycles
    hm = _half_map(p, scan.opts)
    y_hi = scan.y_max if scan.y_max is not None else (4.0 * L) ** 3
    if scan.y_max is None:
        for _ in range(6):
            d = hm.disp(y_hi)
            if math.isnan(d) or d < 0.0:
                break
            y_hi *= 4.0
    rec = ScanRecord("positive y-axis (half map)", 0.0)
    ys = _grid(scan.y_min, y_hi, scan.n)
    cycles += _scan_map(p, eqs, hm, ys, rec, scan, lambda q: _half_map(q, scan.opts), unresolved)
    scans.append(rec)

    # small cycles around each outer antisaddle
    saddles = [e for e in eqs if e.jac_det < 0.0]
    for eq in eqs:
        if eq.label not in ("E_l2", "E_r2") or eq.jac_det <= 0.0:
            continue
        inner = [s.x for s in saddles if abs(s.x) < abs(eq.x) and s.x * eq.x >= 0.0]
        wall = max(inner, key=abs) if inner else 0.0
        fm = _focus_map(p, eq, wall, scan.opts)
        reach = 4.0 * L - abs(eq.x)
        ds = _grid(scan.y_min * max(1.0, abs(eq.x)), max(reach, 1.0), scan.n)
        rec = ScanRecord(fm.section.name, eq.x)

        def builder(q, eq=eq, wall=wall):
            e2 = [e for e in find_equilibria(q, classify_kinds=False) if e.label == eq.label][0]
            return _focus_map(q, e2, wall, scan.opts)

        cycles += _scan_map(p, eqs, fm, ds, rec, scan, builder, unresolved)
        scans.append(rec)

    cycles = _dedup(cycles)
    cycles.sort(key=lambda c: (c.kind.value, c.section_point.x, c.section_point.y))
    census = CycleCensus(tuple(cycles), tuple(scans), tuple(certs), tuple(unresolved))
    if unresolved and scan.strict:
        raise ScanIncomplete(f"{len(unresolved)} unresolved scan points", unresolved, census)
    return census


def cycle_stability_integral(p: SystemParams, cyc: LimitCycle, opts: IntegratorOptions = IntegratorOptions()) -> float:
    """Integral of f(x) dt over one period, by Gauss quadrature on dense output.

    For a planar field the multiplier equals exp(integral of the divergence),
    and the divergence here is -f(x), so this integral is -log(multiplier).
    """
    sec = positive_y_axis() if cyc.section_point.x == 0.0 else horizontal_line(0.0)
    traj = _closed_orbit(p, cyc.section_point, sec, opts)
    _, _, f0, f2 = p.coeffs
    total = traj.integrate_along(lambda x, y: f0 + f2 * x * x)
    return float(total[-1])
