"""Saddle connections, bifurcation curves in the (a1, a2) plane, and region labels.

Every mismatch is a signed distance between two invariant-manifold branches
measured on an axis. Its zeros in a2 (at fixed a1, delta) are the curves

    Phi1  figure-eight loop at the origin (a1 >= 0)
    Phi2  homoclinic loops at E_r1 and E_l1 around the outer foci
    Phi3  two-saddle loop through E_l1, E_r1 around all three antisaddles
    Phi4  two-saddle loop through E_l1, E_r1 around the origin only
    Phi5  double large cycle
    P1sn, P2sn  saddle-node loops when a1 = -1
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import minimize_scalar

from .equilibria import DEGENERATE_DAMPING, Equilibrium, find_equilibria
from .flow import (Direction, IntegratorOptions, NoReturn, Section, Stop, horizontal_line,
                   negative_y_axis, positive_y_axis, return_map, shoot)
from .model import Form, State, SystemParams, f_of, g_of, jacobian, to_scaled

log = logging.getLogger(__name__)

SHOT_EPS = 1e-7
CENTER_EPS = 1e-3
CURVE_TOL = 1e-8
CENTER_OPTS = IntegratorOptions(max_time=1e6, max_steps=5_000_000)


class NoCrossing(RuntimeError):
    def __init__(self, msg: str, termination=None):
        super().__init__(msg)
        self.termination = termination


class BadBracket(ValueError):
    pass


class Unresolved(RuntimeError):
    pass


class Branch(str, Enum):
    UNSTABLE_RIGHT = "UnstableRight"
    UNSTABLE_LEFT = "UnstableLeft"
    STABLE_RIGHT = "StableRight"
    STABLE_LEFT = "StableLeft"

    @property
    def stable(self) -> bool:
        return self in (Branch.STABLE_RIGHT, Branch.STABLE_LEFT)

    @property
    def side(self) -> float:
        return 1.0 if self in (Branch.UNSTABLE_RIGHT, Branch.STABLE_RIGHT) else -1.0


class MismatchKind(str, Enum):
    FIGURE_EIGHT = "FigureEight"
    SMALL_RIGHT_HOMOCLINIC = "SmallRightHomoclinic"
    TWO_SADDLE_OUTER = "TwoSaddleOuter"
    SMALL_ORIGIN_LOOP = "SmallOriginLoop"
    SADDLE_NODE_LOOP_UPPER = "SaddleNodeLoopUpper"
    SADDLE_NODE_LOOP_LOWER = "SaddleNodeLoopLower"


class CurveKind(str, Enum):
    PHI1 = "Phi1"
    PHI2 = "Phi2"
    PHI3 = "Phi3"
    PHI4 = "Phi4"
    PHI5 = "Phi5"
    P1SN = "P1sn"
    P2SN = "P2sn"


CURVE_MISMATCH = {
    CurveKind.PHI1: MismatchKind.FIGURE_EIGHT,
    CurveKind.PHI2: MismatchKind.SMALL_RIGHT_HOMOCLINIC,
    CurveKind.PHI3: MismatchKind.TWO_SADDLE_OUTER,
    CurveKind.PHI4: MismatchKind.SMALL_ORIGIN_LOOP,
    CurveKind.P1SN: MismatchKind.SADDLE_NODE_LOOP_UPPER,
    CurveKind.P2SN: MismatchKind.SADDLE_NODE_LOOP_LOWER,
}


@dataclass(frozen=True)
class CurvePoint:
    a1: float
    delta: float
    a2_star: float
    kind: CurveKind
    bracket_width: float
    residual: float


# ---------------------------------------------------------------- shooting

def _eigen(p: SystemParams, x: float) -> tuple[float, float]:
    """(lambda_minus, lambda_plus) of the Jacobian at (x, 0); real or nan."""
    (_, _), (c, d) = jacobian(p, State(x, 0.0))
    disc = d * d + 4.0 * c
    if disc < 0.0:
        return math.nan, math.nan
    r = math.sqrt(disc)
    return (d - r) / 2.0, (d + r) / 2.0


def _seed(p: SystemParams, xs: float, branch: Branch, eps: float | None) -> tuple[State, float]:
    """Start point on the requested branch and the rate of departure along it (0 for a center direction)."""
    lm, lp = _eigen(p, xs)
    if math.isnan(lm):
        raise ValueError(f"equilibrium at x = {xs:g} is not a saddle")
    lam = lm if branch.stable else lp
    scale = max(1.0, abs(xs))
    if abs(lam) > 1e-9 * scale:
        if (lam > 0.0) == branch.stable:
            raise ValueError(f"equilibrium at x = {xs:g} has no {branch.value} branch")
        e = SHOT_EPS * scale if eps is None else eps
        n = math.hypot(1.0, lam)
        return State(xs + branch.side * e / n, branch.side * e * lam / n), abs(lam)
    # zero eigenvalue along (1, 0): seed on the slow manifold y = -g(x) / f(x)
    e = CENTER_EPS * scale if eps is None else eps
    x = xs + branch.side * e
    f = f_of(p, x)
    if f == 0.0:
        raise ValueError("slow manifold undefined where f vanishes")
    return State(x, -g_of(p, x) / f), 0.0


def manifold_shot(p: SystemParams, saddle: Equilibrium | float, branch: Branch | str, target: Section,
                  opts: IntegratorOptions | None = None, eps: float | None = None) -> State:
    """First crossing of ``target`` by one branch of a saddle's invariant manifolds.

    Unstable branches are followed forward, stable ones backward. A branch
    tangent to a zero eigenvalue (saddle-node, degenerate saddle) is seeded
    on the slow manifold at a larger offset.
    """
    branch = Branch(branch)
    xs = saddle.x if isinstance(saddle, Equilibrium) else float(saddle)
    s0, rate = _seed(p, xs, branch, eps)
    if opts is None:
        # leaving a weakly hyperbolic saddle takes about log(1/eps) / rate
        opts = CENTER_OPTS if rate == 0.0 else IntegratorOptions(max_time=max(1e3, 100.0 / rate))
    term = shoot(p, s0, [target], opts, reverse=branch.stable)
    if term.reason is not Stop.SECTION_HIT:
        raise NoCrossing(f"{branch.value} branch at x = {xs:g} missed {target.name}: {term.reason.value}", term)
    return term.state


def shot_spread(p: SystemParams, saddle: Equilibrium | float, branch: Branch | str, target: Section) -> float:
    """How far the landing point moves when the seeding offset is halved."""
    xs = saddle.x if isinstance(saddle, Equilibrium) else float(saddle)
    s0, rate = _seed(p, xs, Branch(branch), None)
    e = math.hypot(s0.x - xs, s0.y) if rate else abs(s0.x - xs)
    a = manifold_shot(p, xs, branch, target)
    b = manifold_shot(p, xs, branch, target, eps=e / 2.0)
    return math.hypot(a.x - b.x, a.y - b.y)


# ---------------------------------------------------------------- mismatches

def _scaled(p: SystemParams) -> SystemParams:
    return p if p.form is Form.SCALED else to_scaled(p)[0]


def _eq(p: SystemParams, label: str) -> Equilibrium:
    for e in find_equilibria(p, classify_kinds=False):
        if e.label == label:
            return e
    raise ValueError(f"{label} does not exist at {p.describe()}")


def _landing(p: SystemParams, xs: float, branch: Branch, target: Section) -> float:
    """Free coordinate where a branch meets the target.

    A stable branch that comes in from infinity never meets the axis; it is
    reported as landing at the far end of the section (+inf on an x-axis ray,
    -inf on the negative y-axis). A branch that settles on an equilibrium
    (strong damping turns foci into nodes) lands there. Both choices keep
    the mismatch sign meaningful.
    """
    try:
        return target.coord(manifold_shot(p, xs, branch, target))
    except NoCrossing as exc:
        term = exc.termination
        if term is None:
            raise
        if branch.stable and term.reason is Stop.ESCAPED:
            return target.hi if math.isinf(target.hi) else target.lo
        if term.reason is Stop.CONVERGED:
            return 0.0 if target.vertical else term.state.x
        raise


def mismatch(p: SystemParams, kind: MismatchKind | str) -> float:
    """Signed branch separation; its zero is the connection named by ``kind``."""
    kind = MismatchKind(kind)
    q = _scaled(p)
    if kind is MismatchKind.FIGURE_EIGHT:
        if q.a1 < 0.0:
            raise ValueError("the figure-eight loop needs a1 >= 0")
        axis = horizontal_line(0.0, lo=0.0)
        x_a = _landing(q, 0.0, Branch.STABLE_RIGHT, axis)
        x_b = _landing(q, 0.0, Branch.UNSTABLE_RIGHT, axis)
        return x_a - x_b
    if kind in (MismatchKind.SADDLE_NODE_LOOP_UPPER, MismatchKind.SADDLE_NODE_LOOP_LOWER):
        if q.a1 != -1.0:
            raise ValueError("saddle-node loops need a1 = -1")
        if q.a2 <= -1.0:
            raise ValueError("the saddle-node has a stable nodal part only for a2 > -1")
        y_a = _center_unstable_shot(q).y
        branch = Branch.STABLE_RIGHT if kind is MismatchKind.SADDLE_NODE_LOOP_UPPER else Branch.STABLE_LEFT
        y_b = _landing(q, -1.0, branch, negative_y_axis())
        return y_a + y_b
    if not -1.0 < q.a1 < 0.0:
        raise ValueError(f"{kind.value} needs -1 < a1 < 0")
    x_r1 = _eq(q, "E_r1").x
    x_l1 = -x_r1
    if kind is MismatchKind.SMALL_RIGHT_HOMOCLINIC:
        axis = horizontal_line(0.0, lo=x_r1)
        x_p = _landing(q, x_r1, Branch.STABLE_RIGHT, axis)
        x_q = _landing(q, x_r1, Branch.UNSTABLE_RIGHT, axis)
        return x_p - x_q
    if kind is MismatchKind.TWO_SADDLE_OUTER:
        x_m = _landing(q, x_l1, Branch.UNSTABLE_RIGHT, horizontal_line(0.0, lo=x_l1))
        x_p = _landing(q, x_r1, Branch.STABLE_RIGHT, horizontal_line(0.0, lo=x_r1))
        return x_m - x_p
    # SMALL_ORIGIN_LOOP
    y_q = _landing(q, x_l1, Branch.STABLE_RIGHT, negative_y_axis())
    y_s = _landing(q, x_l1, Branch.UNSTABLE_RIGHT, positive_y_axis())
    return y_q + y_s


def _center_unstable_shot(q: SystemParams) -> State:
    """Unstable slow branch of the saddle-node at (-1, 0), up to the positive y-axis."""
    x = -1.0 + CENTER_EPS
    s0 = State(x, -g_of(q, x) / f_of(q, x))
    term = shoot(q, s0, [positive_y_axis()], CENTER_OPTS)
    if term.reason is not Stop.SECTION_HIT:
        raise NoCrossing(f"slow branch missed the positive y-axis: {term.reason.value}", term)
    return term.state


# ---------------------------------------------------------------- double cycle

def _half_disp(p: SystemParams, y: float, opts: IntegratorOptions) -> tuple[float, float]:
    guard = horizontal_line(0.0, Direction.INCREASING, lo=0.0)
    try:
        r = return_map(p, positive_y_axis(), y, half=True, opts=opts, guards=[guard])
    except NoReturn:
        return math.nan, math.nan
    return r.value - y, r.derivative


PHI5_OPTS = IntegratorOptions(rel_tol=1e-12, abs_tol=1e-14)


def large_cycle_gap(p: SystemParams, opts: IntegratorOptions = PHI5_OPTS) -> tuple[float, float, float]:
    """Largest half-map displacement over the outermost returning interval.

    Positive means two large cycles straddle the maximiser, negative means
    none there. Returns (gap, y at the maximum, full-map multiplier there).
    """
    q = _scaled(p)
    ys = np.geomspace(1e-3, 1e3, 90)
    ds = np.array([_half_disp(q, float(y), opts)[0] for y in ys])
    ok = ~np.isnan(ds)
    if not ok.any():
        # no symmetric orbit comes back, so there is no large cycle at all
        return -math.inf, math.nan, math.nan
    # outermost contiguous run of returning starts
    hi = int(np.nonzero(ok)[0][-1])
    lo = hi
    while lo > 0 and ok[lo - 1]:
        lo -= 1
    pts = list(zip(ys[lo:hi + 1], ds[lo:hi + 1]))
    if lo > 0:
        # the displacement can peak in a thin layer next to the separatrix
        inside, outside = float(ys[lo]), float(ys[lo - 1])
        for _ in range(60):
            mid = 0.5 * (inside + outside)
            if math.isnan(_half_disp(q, mid, opts)[0]):
                outside = mid
            else:
                inside = mid
        edge = inside
        for k in range(14, 0, -1):
            y = edge + (float(ys[lo]) - edge) * 10.0 ** (-k)
            d = _half_disp(q, y, opts)[0]
            if not math.isnan(d):
                pts.append((y, d))
    pts.sort()
    k = max(range(len(pts)), key=lambda i: pts[i][1])
    a = pts[max(k - 1, 0)][0]
    b = pts[min(k + 1, len(pts) - 1)][0]
    y_best, d_best = pts[k]

    def neg(y):
        d = _half_disp(q, y, opts)[0]
        return math.inf if math.isnan(d) else -d

    if b > a:
        res = minimize_scalar(neg, bounds=(a, b), method="bounded", options={"xatol": 1e-12 * b})
        if -res.fun > d_best:
            y_best, d_best = res.x, -res.fun
    _, der = _half_disp(q, float(y_best), opts)
    return float(d_best), float(y_best), der * der


# ---------------------------------------------------------------- tracing

def _default_bracket(kind: CurveKind, a1: float, delta: float) -> tuple[float, float]:
    if kind is CurveKind.PHI1:
        return (-1.0, -1.0 / 3.0)
    if kind is CurveKind.PHI2:
        return (-1.0, (a1 - 1.0 - math.sqrt(-a1)) / 3.0)
    if kind is CurveKind.PHI4:
        return (a1 / 3.0, 0.0)
    if kind is CurveKind.PHI3:
        return (curve_value(CurveKind.PHI2, a1, delta), curve_value(CurveKind.PHI4, a1, delta))
    if kind in (CurveKind.P1SN, CurveKind.P2SN):
        return (-1.0 / 3.0, 0.0)
    if a1 >= 0.0:
        return (curve_value(CurveKind.PHI1, a1, delta), -1.0 / 3.0)
    return (curve_value(CurveKind.PHI3, a1, delta), min(a1, -1.0 / 3.0))


def _curve_fn(kind: CurveKind, a1: float, delta: float):
    if kind is CurveKind.PHI5:
        return lambda a2: large_cycle_gap(SystemParams.scaled(a1, a2, delta))[0]
    mk = CURVE_MISMATCH[kind]
    return lambda a2: mismatch(SystemParams.scaled(a1, a2, delta), mk)


def trace_curve(kind: CurveKind | str, a1: float, delta: float,
                bracket: tuple[float, float] | None = None, tol: float = CURVE_TOL) -> CurvePoint:
    """Bisection on a2 for the zero of the curve's mismatch at fixed (a1, delta)."""
    kind = CurveKind(kind)
    if kind in (CurveKind.P1SN, CurveKind.P2SN) and a1 != -1.0:
        raise ValueError("saddle-node loop curves live on a1 = -1")
    if bracket is None:
        bracket = _default_bracket(kind, a1, delta)
    lo, hi = sorted(float(v) for v in bracket)
    fn = _curve_fn(kind, a1, delta)
    # nudge off endpoints where the mismatch is undefined (a2 = -1 etc.)
    pad = 1e-9
    f_lo, f_hi = fn(lo + pad), fn(hi - pad)
    lo, hi = lo + pad, hi - pad
    if f_lo == 0.0:
        hi = lo
    elif f_hi == 0.0:
        lo = hi
    elif (f_lo > 0.0) == (f_hi > 0.0):
        raise BadBracket(f"{kind.value} mismatch has the same sign at a2 = {lo:g} ({f_lo:.3g}) "
                         f"and a2 = {hi:g} ({f_hi:.3g})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0.0:
            lo = hi = mid
            break
        if (fm > 0.0) == (f_lo > 0.0):
            lo, f_lo = mid, fm
        else:
            hi = mid
    star = 0.5 * (lo + hi)
    if kind is CurveKind.PHI5:
        _, _, mult = large_cycle_gap(SystemParams.scaled(a1, star, delta))
        residual = abs(mult - 1.0) if math.isfinite(mult) else math.inf
    else:
        residual = abs(fn(star))
    log.debug("%s at a1=%g delta=%g: a2*=%.12g", kind.value, a1, delta, star)
    return CurvePoint(a1, delta, star, kind, hi - lo, residual)


_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()


def _key(kind: CurveKind, a1: float, delta: float):
    return (kind, round(a1, 10), round(delta, 10))


def curve_point(kind: CurveKind | str, a1: float, delta: float) -> CurvePoint:
    """trace_curve with the default bracket, memoised per (kind, a1, delta)."""
    kind = CurveKind(kind)
    key = _key(kind, a1, delta)
    hit = _CACHE.get(key)
    if hit is None:
        pt = trace_curve(kind, a1, delta)
        with _CACHE_LOCK:
            hit = _CACHE.setdefault(key, pt)
    return hit


def curve_value(kind: CurveKind | str, a1: float, delta: float) -> float:
    kind = CurveKind(kind)
    if a1 == -1.0 and kind is CurveKind.PHI3:
        kind = CurveKind.P2SN
    elif a1 == -1.0 and kind is CurveKind.PHI4:
        kind = CurveKind.P1SN
    return curve_point(kind, a1, delta).a2_star


def clear_curve_cache() -> None:
    with _CACHE_LOCK:
        _CACHE.clear()


_A_STAR: dict = {}


def a_star(delta: float, tol: float = 1e-6) -> tuple[float, float]:
    """a1 where Phi3 meets the diagonal a2 = a1, and |Phi5 - Phi3| just to its right.

    The second value measures how well the double-cycle curve closes onto
    the same point; it is computed at a* + 1e-3.
    """
    key = round(delta, 10)
    if key in _A_STAR:
        return _A_STAR[key]
    lo, hi = -0.99, -0.35
    g_lo = curve_value(CurveKind.PHI3, lo, delta) - lo
    g_hi = curve_value(CurveKind.PHI3, hi, delta) - hi
    if (g_lo > 0.0) == (g_hi > 0.0):
        raise Unresolved(f"Phi3 - a1 keeps one sign on [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        g = curve_value(CurveKind.PHI3, mid, delta) - mid
        if (g > 0.0) == (g_lo > 0.0):
            lo = mid
        else:
            hi = mid
    star = 0.5 * (lo + hi)
    a = star + 1e-3
    try:
        gap = abs(curve_value(CurveKind.PHI5, a, delta) - curve_value(CurveKind.PHI3, a, delta))
    except (BadBracket, NoCrossing, Unresolved):
        gap = math.nan
    _A_STAR[key] = (star, gap)
    return star, gap


# ---------------------------------------------------------------- regions

_BOUNDARY = {
    CurveKind.PHI1: "HL1", CurveKind.PHI2: "HL2", CurveKind.PHI4: "HE2",
    CurveKind.P1SN: "SL2", CurveKind.P2SN: "SL1",
}
_COARSE = {"I": "R1", "II": "R2", "III": "R3", "IV": "R4", "V": "R5", "VI": "R6", "VII": "R7",
           "VIII": "R8", "IX": "R9", "X": "R10", "XI": "R11"}


def region_classify(a1: float, a2: float, delta: float, tol: float = CURVE_TOL) -> str:
    """Region label of (a1, a2, delta), or a boundary tag within tol of a curve.

    Labels I..XI apply for delta < 2 sqrt(3) and R1..R11 above; on a1 = -1
    the strata T1..T5 and the saddle-node loop lines are returned.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    if a1 < -1.0:
        raise ValueError("a1 must be >= -1")
    try:
        label = _region(a1, a2, delta, tol)
    except (BadBracket, NoCrossing) as exc:
        raise Unresolved(f"curve tracing failed at a1={a1}, delta={delta}: {exc}") from exc
    if delta >= DEGENERATE_DAMPING and label in _COARSE:
        return _COARSE[label]
    return label


def _near(a2: float, kind: CurveKind, a1: float, delta: float, tol: float) -> tuple[float, bool]:
    v = curve_value(kind, a1, delta)
    return v, abs(a2 - v) <= tol


def _region(a1: float, a2: float, delta: float, tol: float) -> str:
    if a1 == -1.0:
        if a2 < -1.0:
            return "T1"
        if a2 == -1.0:
            return "BT"
        if a2 >= 0.0:
            return "T5"
        p2, on = _near(a2, CurveKind.P2SN, a1, delta, tol)
        if on:
            return "SL1"
        if a2 < p2:
            return "T2"
        p1, on = _near(a2, CurveKind.P1SN, a1, delta, tol)
        if on:
            return "SL2"
        return "T3" if a2 < p1 else "T4"
    if a1 >= 0.0:
        if a2 <= -1.0:
            return "IV"
        if a2 >= -1.0 / 3.0:
            return "I"
        v1, on = _near(a2, CurveKind.PHI1, a1, delta, tol)
        if on:
            return "HL1"
        if a2 < v1:
            return "III"
        v5, on = _near(a2, CurveKind.PHI5, a1, delta, tol)
        if on:
            return "DL1"
        return "II" if a2 < v5 else "I"
    if a2 <= -1.0:
        return "V"
    if a2 >= 0.0:
        return "XI"
    v4, on = _near(a2, CurveKind.PHI4, a1, delta, tol)
    if on:
        return "HE2"
    if a2 > v4:
        return "X"
    v2, on = _near(a2, CurveKind.PHI2, a1, delta, tol)
    if on:
        return "HL2"
    if a2 < v2:
        return "VI"
    v3, on = _near(a2, CurveKind.PHI3, a1, delta, tol)
    if on:
        # left of a* the outer two-saddle loop is stable, right of it unstable
        return "HE11" if v3 > a1 else "HE12"
    if a2 < v3:
        return "VII"
    if v3 >= a1:
        return "IX"
    v5, on = _near(a2, CurveKind.PHI5, a1, delta, tol)
    if on:
        return "DL2"
    return "VIII" if a2 < v5 else "IX"
