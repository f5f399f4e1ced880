"""Orbit integration, section events, return maps and variational derivatives."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernel as K
from .equilibria import find_equilibria
from .model import State, SystemParams, energy, eval_field


class NoReturn(RuntimeError):
    """The orbit did not come back to the section."""

    def __init__(self, msg: str, termination: "Termination | None" = None):
        super().__init__(msg)
        self.termination = termination


@dataclass(frozen=True)
class IntegratorOptions:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_time: float = 1e3
    max_radius: float = 1e6
    initial_step: float = 1e-4
    max_steps: int = 2_000_000
    event_tol: float = 1e-13

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_time", "max_radius", "initial_step"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.rel_tol < 1e-14:
            raise ValueError("rel_tol must be >= 1e-14")


class SectionKind(str, Enum):
    POSITIVE_Y_AXIS = "PositiveYAxis"
    NEGATIVE_Y_AXIS = "NegativeYAxis"
    POSITIVE_X_AXIS = "PositiveXAxis"
    NEGATIVE_X_AXIS = "NegativeXAxis"
    VERTICAL_LINE = "VerticalLine"
    HORIZONTAL_LINE = "HorizontalLine"


class Direction(int, Enum):
    INCREASING = 1
    DECREASING = -1
    EITHER = 0


@dataclass(frozen=True)
class Section:
    """A line x = value or y = value, optionally cut to lo < other < hi.

    ``direction`` refers to the coordinate that is fixed on the section
    (x for vertical sections, y for horizontal ones).
    """

    kind: SectionKind
    direction: Direction = Direction.EITHER
    value: float = 0.0
    lo: float = -math.inf
    hi: float = math.inf
    name: str = ""

    @property
    def vertical(self) -> bool:
        return self.kind in (SectionKind.POSITIVE_Y_AXIS, SectionKind.NEGATIVE_Y_AXIS,
                             SectionKind.VERTICAL_LINE)

    def row(self) -> list[float]:
        return [0.0 if self.vertical else 1.0, self.value, float(self.direction.value), self.lo, self.hi]

    def point(self, coord: float) -> State:
        """The point of the section whose free coordinate equals coord."""
        return State(self.value, coord) if self.vertical else State(coord, self.value)

    def coord(self, s: State) -> float:
        return s.y if self.vertical else s.x


def positive_y_axis(direction: Direction = Direction.EITHER) -> Section:
    return Section(SectionKind.POSITIVE_Y_AXIS, direction, 0.0, 0.0, math.inf, "positive y-axis")


def negative_y_axis(direction: Direction = Direction.EITHER) -> Section:
    return Section(SectionKind.NEGATIVE_Y_AXIS, direction, 0.0, -math.inf, 0.0, "negative y-axis")


def positive_x_axis(direction: Direction = Direction.EITHER) -> Section:
    return Section(SectionKind.POSITIVE_X_AXIS, direction, 0.0, 0.0, math.inf, "positive x-axis")


def negative_x_axis(direction: Direction = Direction.EITHER) -> Section:
    return Section(SectionKind.NEGATIVE_X_AXIS, direction, 0.0, -math.inf, 0.0, "negative x-axis")


def vertical_line(x0: float, direction: Direction = Direction.EITHER,
                  lo: float = -math.inf, hi: float = math.inf) -> Section:
    return Section(SectionKind.VERTICAL_LINE, direction, x0, lo, hi, f"x = {x0:g}")


def horizontal_line(y0: float, direction: Direction = Direction.EITHER,
                    lo: float = -math.inf, hi: float = math.inf) -> Section:
    return Section(SectionKind.HORIZONTAL_LINE, direction, y0, lo, hi, f"y = {y0:g}")


class Stop(str, Enum):
    MAX_TIME = "MaxTime"
    SECTION_HIT = "SectionHit"
    ESCAPED = "Escaped"
    CONVERGED = "ConvergedToEquilibrium"
    STEP_FAILURE = "StepFailure"


@dataclass(frozen=True)
class Termination:
    reason: Stop
    section: Section | None = None
    state: State | None = None
    time: float | None = None
    equilibrium: str | None = None


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Accepted steps of one integration.

    ``t`` holds elapsed time of the integrated flow; for ``reverse=True`` the
    orbit is traversed backwards, so the true time is -t.
    """

    params: SystemParams
    t: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    termination: Termination
    reverse: bool = False
    steps: int = 0

    @property
    def samples(self) -> list[tuple[float, State]]:
        return [(float(t), State(float(s[0]), float(s[1]))) for t, s in zip(self.t, self.states)]

    @property
    def end(self) -> State:
        return State(float(self.states[-1, 0]), float(self.states[-1, 1]))

    def _second_derivs(self) -> np.ndarray:
        g1, g3, f0, f2 = self.params.coeffs
        x, y = self.states[:, 0], self.states[:, 1]
        dx, dy = self.derivs[:, 0], self.derivs[:, 1]
        x2 = x * x
        dg = g1 + x2 * (3.0 * g3 + 5.0 * x2)
        f = f0 + f2 * x2
        sgn = -1.0 if self.reverse else 1.0
        ddx = dy
        ddy = sgn * (-dg * dx - 2.0 * f2 * x * dx * y - f * dy)
        return np.column_stack([ddx, ddy])

    def dense(self, tq: np.ndarray | float) -> np.ndarray:
        """Quintic Hermite interpolation of (x, y) at the requested times."""
        tq = np.atleast_1d(np.asarray(tq, dtype=float))
        acc = self._second_derivs()
        idx = np.clip(np.searchsorted(self.t, tq, side="right") - 1, 0, len(self.t) - 2)
        t0, t1 = self.t[idx], self.t[idx + 1]
        h = (t1 - t0)[:, None]
        u = ((tq - t0) / (t1 - t0))[:, None]
        p0, p1 = self.states[idx, :2], self.states[idx + 1, :2]
        v0, v1 = self.derivs[idx, :2] * h, self.derivs[idx + 1, :2] * h
        a0, a1 = acc[idx] * h * h, acc[idx + 1] * h * h
        u2, u3 = u * u, u * u * u
        u4, u5 = u3 * u, u3 * u2
        h00 = 1 - 10 * u3 + 15 * u4 - 6 * u5
        h10 = u - 6 * u3 + 8 * u4 - 3 * u5
        h20 = 0.5 * (u2 - 3 * u3 + 3 * u4 - u5)
        h01 = 10 * u3 - 15 * u4 + 6 * u5
        h11 = -4 * u3 + 7 * u4 - 3 * u5
        h21 = 0.5 * (u3 - 2 * u4 + u5)
        return h00 * p0 + h10 * v0 + h20 * a0 + h01 * p1 + h11 * v1 + h21 * a1

    def integrate_along(self, fn) -> np.ndarray:
        """Running integral of fn(x, y) dt by 3-point Gauss rule per step."""
        nodes = np.array([0.5 - math.sqrt(15) / 10, 0.5, 0.5 + math.sqrt(15) / 10])
        weights = np.array([5.0, 8.0, 5.0]) / 18.0
        t0, t1 = self.t[:-1], self.t[1:]
        total = np.zeros(len(self.t))
        acc = np.zeros(len(t0))
        for nd, w in zip(nodes, weights):
            pts = self.dense(t0 + nd * (t1 - t0))
            acc += w * fn(pts[:, 0], pts[:, 1])
        total[1:] = np.cumsum(acc * (t1 - t0))
        return total


def _sink_points(p: SystemParams, reverse: bool) -> tuple[np.ndarray, np.ndarray]:
    """Hyperbolic attractors of the integrated flow, with capture radii."""
    pts, rad = [], []
    try:
        eqs = find_equilibria(p, classify_kinds=False)
    except ValueError:
        eqs = []
    for eq in eqs:
        tr = -eq.jac_tr if reverse else eq.jac_tr
        if eq.jac_det > 0.0 and tr < -1e-8 * max(1.0, eq.jac_det):
            pts.append((eq.x, 0.0))
            rad.append(1e-7 * max(1.0, abs(eq.x)))
    if not pts:
        return np.zeros((0, 2)), np.zeros(0)
    return np.array(pts, dtype=float), np.array(rad, dtype=float)


_CONV_CACHE: dict = {}


def _conv(p: SystemParams, reverse: bool):
    key = (p.coeffs, reverse)
    hit = _CONV_CACHE.get(key)
    if hit is None:
        hit = _sink_points(p, reverse)
        if len(_CONV_CACHE) > 4096:
            _CONV_CACHE.clear()
        _CONV_CACHE[key] = hit
    return hit


def _run(p: SystemParams, s0, mode: int, opts: IntegratorOptions, sections=(), reverse: bool = False,
         store: bool = True, capture: bool = True, max_time: float | None = None):
    c = np.array(p.coeffs, dtype=float)
    sec = np.array([s.row() for s in sections], dtype=float).reshape(len(sections), 5)
    if capture:
        conv, conv_r = _conv(p, reverse)
    else:
        conv, conv_r = np.zeros((0, 2)), np.zeros(0)
    tmax = opts.max_time if max_time is None else max_time
    out = K.run(c, mode, -1.0 if reverse else 1.0, np.asarray(s0, dtype=float), tmax,
                opts.rel_tol, opts.abs_tol, opts.initial_step, tmax, opts.max_radius,
                sec, conv, conv_r, store, opts.max_steps, opts.event_tol)
    return out


def _termination(p, status, idx, t, s, sections, reverse) -> Termination:
    st = State(float(s[0]), float(s[1]))
    if status == K.ST_SECTION:
        return Termination(Stop.SECTION_HIT, sections[idx], st, float(t))
    if status == K.ST_ESCAPED:
        return Termination(Stop.ESCAPED, state=st, time=float(t))
    if status == K.ST_CONVERGED:
        eqs = find_equilibria(p, classify_kinds=False)
        near = min(eqs, key=lambda e: (e.x - st.x) ** 2 + st.y ** 2)
        return Termination(Stop.CONVERGED, state=st, time=float(t), equilibrium=near.label)
    if status == K.ST_STEPFAIL:
        return Termination(Stop.STEP_FAILURE, state=st, time=float(t))
    return Termination(Stop.MAX_TIME, state=st, time=float(t))


def integrate(p: SystemParams, s0: State, opts: IntegratorOptions = IntegratorOptions(),
              stop: Section | list[Section] | None = None, reverse: bool = False,
              capture: bool = True) -> Trajectory:
    """Integrate from s0 until max_time, a section crossing, escape or capture.

    ``capture`` stops the run once the orbit is within 1e-7 of a hyperbolic
    attractor of the integrated flow.
    """
    if not all(math.isfinite(v) for v in s0):
        raise ValueError("initial state must be finite")
    sections = [] if stop is None else ([stop] if isinstance(stop, Section) else list(stop))
    status, idx, t, s, ts, ss, fs, nsteps = _run(p, s0, 0, opts, sections, reverse, True, capture)
    term = _termination(p, status, idx, t, s, sections, reverse)
    return Trajectory(p, ts.copy(), ss.copy(), fs.copy(), term, reverse, int(nsteps))


def shoot(p: SystemParams, s0: State, sections: list[Section], opts: IntegratorOptions = IntegratorOptions(),
          reverse: bool = False, capture: bool = True, max_time: float | None = None) -> Termination:
    """Like integrate, without storing samples."""
    status, idx, t, s, *_ = _run(p, s0, 0, opts, sections, reverse, False, capture, max_time)
    return _termination(p, status, idx, t, s, sections, reverse)


@dataclass(frozen=True)
class ReturnResult:
    value: float
    derivative: float
    time: float
    state: State


def _section_time_correction(p: SystemParams, sec: Section, s: np.ndarray) -> tuple[float, float]:
    """Derivative of the free coordinate at the crossing along the tangent."""
    fx, fy = eval_field(p, State(s[0], s[1]))
    u, v = s[2], s[3]
    if sec.vertical:
        # crossing time shifts by -u / fx
        return v - fy * u / fx, -u / fx
    return u - fx * v / fy, -v / fy


def return_map(p: SystemParams, section: Section, y0: float, half: bool = False,
               opts: IntegratorOptions = IntegratorOptions(),
               guards: list[Section] | None = None, derivative: bool = True) -> ReturnResult:
    """Return map on ``section`` started at its point with free coordinate y0.

    Full map: first return to the same section in the same direction.
    Half map: first crossing of the negated section, mapped back through
    (x, y) -> (-x, -y); its fixed points are the symmetric closed orbits.
    ``guards`` are extra sections whose crossing aborts with NoReturn.
    """
    s0 = section.point(y0)
    f0 = eval_field(p, s0)
    if abs(f0.x) + abs(f0.y) == 0.0:
        raise NoReturn("start point is an equilibrium")
    if half:
        target = Section(section.kind, Direction(-section.direction.value), -section.value,
                         -section.hi, -section.lo, "negated " + section.name)
    else:
        target = section
    if target.direction is Direction.EITHER:
        # keep the direction the flow has on the start section
        sgn = np.sign(f0.x if section.vertical else f0.y)
        if half:
            sgn = -sgn
        d = Direction(int(sgn)) if sgn != 0 else Direction.EITHER
        target = Section(target.kind, d, target.value, target.lo, target.hi, target.name)
    sections = [target] + list(guards or [])
    if derivative:
        tang = (0.0, 1.0) if section.vertical else (1.0, 0.0)
        y_init = np.array([s0.x, s0.y, tang[0], tang[1]])
        status, idx, t, s, *_ = _run(p, y_init, 1, opts, sections, False, False, True)
    else:
        status, idx, t, s, *_ = _run(p, np.array([s0.x, s0.y]), 0, opts, sections, False, False, True)
    if status != K.ST_SECTION or idx != 0:
        term = _termination(p, status, idx, t, s, sections, False)
        raise NoReturn(f"no return to {target.name}: {term.reason.value}", term)
    dval = math.nan
    if derivative:
        dval, _ = _section_time_correction(p, target, s)
    if half:
        dval = -dval
        val = -(s[1] if section.vertical else s[0])
        state = State(-float(s[0]), -float(s[1]))
    else:
        val = s[1] if section.vertical else s[0]
        state = State(float(s[0]), float(s[1]))
    return ReturnResult(float(val), float(dval), float(t), state)


def energy_audit(p: SystemParams, traj: Trajectory) -> float:
    """max_t |E(t) - E(0) - int_0^t dE/dt| along the stored trajectory."""
    g1, g3, f0, f2 = p.coeffs
    sgn = -1.0 if traj.reverse else 1.0

    def rate(x, y):
        return sgn * -(f0 + f2 * x * x) * y * y

    integral = traj.integrate_along(rate)
    e = np.array([energy(p, State(x, y)) for x, y in traj.states[:, :2]])
    return float(np.max(np.abs(e - e[0] - integral)))
