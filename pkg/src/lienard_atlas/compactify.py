"""Behaviour at infinity via the weighted (1, 3) compactification.

The field is quasi-homogeneous of weights (1, 3) at top order: x' = y has
weight 3 and the y-equation is led by x^5 and x^2 y. The directional charts are

    Ux: x =  1/v, y = u/v^3        Vx: x = -1/v, y = u/v^3
    Uy: x = u/v,  y =  1/v^3       Vy: x = u/v,  y = -1/v^3

followed by multiplication with the smallest power of v that clears the
poles. The equator is {v = 0}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .equilibria import DEGENERATE_DAMPING
from .flow import IntegratorOptions, NoReturn, positive_y_axis, return_map
from .model import State, SystemParams, eval_field

THRESHOLD_TOL = 1e-9

Poly = dict  # {(i, j): Fraction} for the monomial u^i v^j, Laurent allowed


class ThresholdAmbiguity(ValueError):
    """The damping slope is within tolerance of 2 sqrt(3) but not equal to it."""


class NoConclusion(RuntimeError):
    pass


class Chart(str, Enum):
    UX = "Ux"
    VX = "Vx"
    UY = "Uy"
    VY = "Vy"


class EquatorStability(str, Enum):
    REPELLING = "Repelling"
    NOT_REPELLING = "NotRepelling"


# (x, y) as signed monomials c u^a v^b, and (u, v) as rational powers of |x|, |y|
_CHART_MAPS = {
    Chart.UX: (((1, 0, -1), (1, 1, -3)), ((-3, 1), (-1, 0))),
    Chart.VX: (((-1, 0, -1), (1, 1, -3)), ((-3, 1), (-1, 0))),
    Chart.UY: (((1, 1, -1), (1, 0, -3)), ((1, Fraction(-1, 3)), (0, Fraction(-1, 3)))),
    Chart.VY: (((1, 1, -1), (-1, 0, -3)), ((1, Fraction(-1, 3)), (0, Fraction(-1, 3)))),
}


def _add(p: Poly, q: Poly) -> Poly:
    out = dict(p)
    for k, c in q.items():
        out[k] = out.get(k, Fraction(0)) + c
    return {k: c for k, c in out.items() if c != 0}


def _mul(p: Poly, q: Poly) -> Poly:
    out: Poly = {}
    for (i, j), c in p.items():
        for (k, l), d in q.items():
            key = (i + k, j + l)
            out[key] = out.get(key, Fraction(0)) + c * d
    return {k: c for k, c in out.items() if c != 0}


def _scale(p: Poly, c) -> Poly:
    c = Fraction(c)
    return {k: v * c for k, v in p.items() if v * c != 0}


def _pow(p: Poly, n: int) -> Poly:
    out: Poly = {(0, 0): Fraction(1)}
    for _ in range(n):
        out = _mul(out, p)
    return out


def _mono(c, i: int, j: int) -> Poly:
    return {(i, j): Fraction(c)}


def _eval(p: dict, u: float, v: float) -> float:
    return sum(float(c) * u ** i * v ** j for (i, j), c in p.items())


@dataclass(frozen=True)
class ChartField:
    """Polynomial field (u', v') of one chart, coefficients keyed by (i, j) for u^i v^j."""

    chart: Chart
    u_coeffs: dict
    v_coeffs: dict
    v_power: int  # the time rescaling multiplies by v^v_power

    def __call__(self, u: float, v: float) -> tuple[float, float]:
        return _eval(self.u_coeffs, u, v), _eval(self.v_coeffs, u, v)

    def as_floats(self) -> tuple[dict, dict]:
        return ({k: float(c) for k, c in self.u_coeffs.items()},
                {k: float(c) for k, c in self.v_coeffs.items()})

    def equator_invariant(self) -> bool:
        return all(j >= 1 for (_, j) in self.v_coeffs)

    def to_affine(self, u: float, v: float) -> State:
        (cx, ax, bx), (cy, ay, by) = _CHART_MAPS[self.chart][0]
        return State(cx * u ** ax * v ** bx, cy * u ** ay * v ** by)

    def from_affine(self, s: State) -> tuple[float, float]:
        if self.chart in (Chart.UX, Chart.VX):
            v = 1.0 / abs(s.x)
            return s.y * v ** 3, v
        v = abs(s.y) ** (-1.0 / 3.0)
        return s.x * v, v

    def equator_polynomial(self) -> list[float]:
        """Coefficients of u'(u, 0), ascending in u."""
        deg = max((i for (i, j) in self.u_coeffs if j == 0), default=0)
        out = [0.0] * (deg + 1)
        for (i, j), c in self.u_coeffs.items():
            if j == 0:
                out[i] += float(c)
        return out

    def jacobian(self, u: float, v: float) -> tuple[tuple[float, float], tuple[float, float]]:
        def d(p, wrt):
            tot = 0.0
            for (i, j), c in p.items():
                e = i if wrt == 0 else j
                if e:
                    tot += float(c) * e * u ** (i - (wrt == 0)) * v ** (j - (wrt == 1))
            return tot
        return ((d(self.u_coeffs, 0), d(self.u_coeffs, 1)), (d(self.v_coeffs, 0), d(self.v_coeffs, 1)))


def chart_field(p: SystemParams, chart: Chart | str) -> ChartField:
    chart = Chart(chart)
    g1, g3, f0, f2 = (Fraction(c) for c in p.coeffs)
    (cx, ax, bx), (cy, ay, by) = _CHART_MAPS[chart][0]
    (lux, luy), (lvx, lvy) = _CHART_MAPS[chart][1]
    X = _mono(cx, ax, bx)
    Y = _mono(cy, ay, by)
    xdot = Y
    gx = _add(_add(_scale(X, g1), _scale(_pow(X, 3), g3)), _pow(X, 5))
    fx = _add(_scale(_mono(1, 0, 0), f0), _scale(_pow(X, 2), f2))
    ydot = _scale(_add(gx, _mul(fx, Y)), -1)
    # log-derivatives: x'/x and y'/y, dividing by monomials
    inv_x = _mono(Fraction(1, cx), -ax, -bx)
    inv_y = _mono(Fraction(1, cy), -ay, -by)
    lx = _mul(xdot, inv_x)
    ly = _mul(ydot, inv_y)
    udot = _mul(_mono(1, 1, 0), _add(_scale(lx, lux), _scale(ly, luy)))
    vdot = _mul(_mono(1, 0, 1), _add(_scale(lx, lvx), _scale(ly, lvy)))
    k = -min(0, min(j for (_, j) in {**udot, **vdot}))
    udot = _mul(udot, _mono(1, 0, k))
    vdot = _mul(vdot, _mono(1, 0, k))
    if any(i < 0 for (i, _) in {**udot, **vdot}):
        raise ArithmeticError("chart field is not polynomial in u")
    return ChartField(chart, udot, vdot, k)


@dataclass(frozen=True)
class InfinityEquilibrium:
    chart: Chart
    u: float
    eigenvalues: tuple[complex, complex]
    label: str
    degenerate: bool = False


def _eig2(j) -> tuple[complex, complex]:
    (a, b), (c, d) = j
    tr, det = a + d, a * d - b * c
    disc = tr * tr / 4.0 - det
    r = complex(disc) ** 0.5
    return (tr / 2.0 - r, tr / 2.0 + r)


def _label(ev: tuple[complex, complex]) -> str:
    re = sorted(z.real for z in ev)
    if abs(re[0]) < 1e-12 or abs(re[1]) < 1e-12:
        return "SaddleNode"
    if re[0] < 0.0 < re[1]:
        return "Saddle"
    return "StableNode" if re[1] < 0.0 else "UnstableNode"


def infinity_equilibria(p: SystemParams) -> list[InfinityEquilibrium]:
    """Equator equilibria in the x-direction charts.

    Points of the equator not covered by Ux/Vx (u = 0 in Uy/Vy) are never
    equilibria, since u' = +-3 there, so the x-charts see every one.
    """
    b = p.damping_slope
    gap = b - DEGENERATE_DAMPING
    if gap != 0.0 and abs(gap) <= THRESHOLD_TOL:
        raise ThresholdAmbiguity(f"damping {b!r} is within {THRESHOLD_TOL:g} of 2*sqrt(3)")
    if gap < 0.0:
        return []
    out = []
    for chart in (Chart.UX, Chart.VX):
        cf = chart_field(p, chart)
        c0, c1, c2 = cf.equator_polynomial()[:3]
        if gap == 0.0:
            u = -c1 / (2.0 * c2)
            ev = _eig2(cf.jacobian(u, 0.0))
            out.append(InfinityEquilibrium(chart, u, ev, "SaddleNode", degenerate=True))
            continue
        r = math.sqrt(c1 * c1 - 4.0 * c0 * c2)
        q = -0.5 * (c1 + math.copysign(r, c1))
        for u in sorted((q / c2, c0 / q)):
            ev = _eig2(cf.jacobian(u, 0.0))
            out.append(InfinityEquilibrium(chart, u, ev, _label(ev)))
    return out


def weighted_radius(s: State) -> float:
    return max(abs(s.x), abs(s.y) ** (1.0 / 3.0))


def equator_stability_probe(p: SystemParams, radius: float = 100.0,
                            opts: IntegratorOptions | None = None, max_turns: int = 200) -> EquatorStability:
    """Follow the orbit started at weighted radius ``radius`` on the positive y-axis.

    Each full turn is one return to the positive y-axis, where the weighted
    radius is y^(1/3). Repelling once it drops below radius / 2; a turn that
    moves outward or an escape means not repelling.
    """
    if p.damping_slope >= DEGENERATE_DAMPING:
        raise ValueError("the equator is a closed orbit only for damping slope below 2*sqrt(3)")
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    if opts is None:
        opts = IntegratorOptions(max_radius=1e3 * radius, max_time=1e3)
    sec = positive_y_axis()
    y = radius ** 3
    elapsed = 0.0
    for _ in range(max_turns):
        try:
            r = return_map(p, sec, y, opts=opts, derivative=False)
        except NoReturn as exc:
            if exc.termination is not None and exc.termination.reason.value == "Escaped":
                return EquatorStability.NOT_REPELLING
            raise NoConclusion(str(exc)) from exc
        elapsed += r.time
        if r.value ** (1.0 / 3.0) < radius / 2.0:
            return EquatorStability.REPELLING
        if r.value >= y:
            return EquatorStability.NOT_REPELLING
        y = r.value
        if elapsed > opts.max_time:
            break
    raise NoConclusion("no decision within the time budget")


def pushforward_residual(p: SystemParams, chart: Chart | str, u: float, v: float) -> float:
    """Mismatch between the chart field and the affine field carried into the chart."""
    cf = chart_field(p, chart)
    s = cf.to_affine(u, v)
    fx, fy = eval_field(p, s)
    (lux, luy), (lvx, lvy) = _CHART_MAPS[cf.chart][1]
    # (u, v) are monomials in |x|, |y|, so their rates are log-derivatives
    du = u * (float(lux) * fx / s.x + float(luy) * fy / s.y)
    dv = v * (float(lvx) * fx / s.x + float(lvy) * fy / s.y)
    scale = v ** cf.v_power
    cu, cvv = cf(u, v)
    return max(abs(cu - scale * du), abs(cvv - scale * dv)) / max(1.0, abs(cu), abs(cvv))
