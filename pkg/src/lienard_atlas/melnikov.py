"""Abelian integrals of the Hamiltonian limit and the zeros of M(e) = a2 I0 + I2.

With delta = 0 the scaled system conserves

    E(x, y) = x^6/6 + (a1 - 1) x^4/4 - a1 x^2/2 + y^2/2.

For -1 < a1 < 0 and e > e2 the level E = e is a single closed curve around
all five equilibria. Along it dx = y dt, so

    I_i  = oint x^i y dx  = oint x^i y^2 dt
    I_i' = oint x^i / y dx = oint x^i dt

are both smooth time integrals over one period, which is how they are
computed here (no endpoint singularity at the turning points).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import _kernel as K
from .flow import Direction, IntegratorOptions, _run, horizontal_line
from .model import SystemParams

QUAD_OPTS = IntegratorOptions(rel_tol=1e-13, abs_tol=1e-15, max_time=1e4, initial_step=1e-3)
CLOSE_TOL = 1e-8
SEED_OFFSET = 1e-6


class PeriodNotClosed(RuntimeError):
    pass


class SingularDrift(ValueError):
    """The Riccati time rescaling vanishes inside the requested energy span."""


def energy_bounds(a1: float) -> tuple[float, float]:
    """(e1, e2): e2 is the level of the inner saddles, e1 = min(0, -a1/4 - 1/12)."""
    if not -1.0 < a1 < 0.0:
        raise ValueError("energy bounds need -1 < a1 < 0")
    return min(0.0, -a1 / 4.0 - 1.0 / 12.0), a1 * a1 / 4.0 + a1 ** 3 / 12.0


def _G(a1: float, x: float) -> float:
    x2 = x * x
    return x2 * (-a1 / 2.0 + x2 * ((a1 - 1.0) / 4.0 + x2 / 6.0))


def eta(a1: float, e: float) -> float:
    """Largest root of E(x, 0) = e, by Newton with a bisection fallback."""
    _, e2 = energy_bounds(a1)
    if e <= e2:
        raise ValueError(f"level e = {e} does not exceed e2 = {e2}")
    seed = (6.0 * e) ** (1.0 / 6.0) + 1.0
    x = seed
    for _ in range(60):
        x2 = x * x
        gx = x * (-a1 + x2 * ((a1 - 1.0) + x2))
        if gx <= 0.0:
            break
        step = (_G(a1, x) - e) / gx
        x -= step
        if abs(step) <= 1e-14 * x:
            break
    if x > 1.0 and abs(_G(a1, x) - e) <= 1e-12 * max(1.0, e):
        return x
    # the level is increasing in x beyond x = 1, so [1, 2 seed] brackets it
    return brentq(lambda t: _G(a1, t) - e, 1.0, 2.0 * seed, xtol=1e-15, rtol=1e-15)


@dataclass(frozen=True)
class HamiltonianLevel:
    a1: float
    e: float
    eta: float
    period: float


@dataclass(frozen=True)
class AbelianRow:
    a1: float
    e: float
    I0: float
    I2: float
    I4: float
    dI0: float
    dI2: float
    dI4: float
    dI6: float = math.nan
    dI8: float = math.nan
    dI10: float = math.nan
    odd_moment: float = math.nan  # oint x y^2 dt, zero by symmetry
    closure: float = math.nan  # how far the orbit misses its start after one period
    Z: float = math.nan
    w: float = math.nan
    M: float = math.nan
    P: float = math.nan
    pf_residuals: dict = field(default_factory=dict)

    @property
    def dZ(self) -> float:
        return 0.75 * (self.a1 - 1.0) * self.dI2 + self.dI4

    def with_a2(self, a2: float) -> "AbelianRow":
        return replace(self, M=a2 * self.I0 + self.I2)


def abelian_integrals(a1: float, e: float, opts: IntegratorOptions = QUAD_OPTS) -> AbelianRow:
    """I0, I2, I4 and I0', ..., I10' over one period of the level curve E = e."""
    _, e2 = energy_bounds(a1)
    if not e > e2 + 1e-10:
        raise ValueError(f"e = {e} is not above e2 = {e2}")
    h = eta(a1, e)
    p = SystemParams.scaled(a1, 0.0, 0.0)
    s0 = np.zeros(12)
    s0[0] = h
    # one full turn: back to the positive x-axis moving downward
    sec = horizontal_line(0.0, Direction.DECREASING, lo=0.0)
    status, _, t, s, *_ = _run(p, s0, 2, opts, [sec], False, False, False)
    if status != K.ST_SECTION:
        raise PeriodNotClosed(f"orbit at e = {e} did not return (status {status})")
    miss = abs(s[0] - h)
    if miss > CLOSE_TOL:
        raise PeriodNotClosed(f"return misses the start by {miss:.3g}")
    I0, I2, I4 = s[2], s[3], s[4]
    dI = s[5:11]
    Z = 0.75 * (a1 - 1.0) * I2 + I4
    dZ = 0.75 * (a1 - 1.0) * dI[1] + dI[2]
    return AbelianRow(a1=a1, e=e, I0=I0, I2=I2, I4=I4, dI0=dI[0], dI2=dI[1], dI4=dI[2],
                      dI6=dI[3], dI8=dI[4], dI10=dI[5], odd_moment=s[11], closure=miss,
                      Z=Z, w=dZ / dI[0], P=I2 / I0)


def hamiltonian_level(a1: float, e: float) -> HamiltonianLevel:
    row = abelian_integrals(a1, e)
    return HamiltonianLevel(a1, e, eta(a1, e), row.dI0)


def D_of(a1: float, e: float) -> float:
    return 3.0 * e * (3.0 * a1 + 12.0 * e + 1.0) * (-a1 ** 3 - 3.0 * a1 ** 2 + 12.0 * e)


def a_matrix(a1: float, e: float) -> tuple[tuple[float, float], ...]:
    """Rows (a_i1, a_i2) of the second-order system for (I0'', I2'', Z'')."""
    a11 = -3.0 * e * (3.0 + 7.0 * a1 - 7.0 * a1 ** 2 - 3.0 * a1 ** 3 + 48.0 * e)
    a12 = 10.0 * a1 ** 2 + 3.0 * a1 ** 3 - 12.0 * e + 3.0 * a1 * (1.0 + 4.0 * e)
    a21 = 3.0 * e * a12
    a22 = -12.0 * (1.0 + a1) ** 2 * e
    a31 = -2.25 * e * (-7.0 * a1 ** 3 - 3.0 * a1 ** 4 + 4.0 * e + a1 ** 2 * (7.0 + 4.0 * e)
                       + a1 * (3.0 + 56.0 * e))
    a32 = -3.0 * (-3.0 - 7.0 * a1 + 7.0 * a1 ** 2 + 3.0 * a1 ** 3 - 48.0 * e) * e
    return ((a11, a12), (a21, a22), (a31, a32))


def _rel(lhs: float, *terms: float) -> float:
    """|lhs - sum(terms)| relative to the largest magnitude involved."""
    scale = max([abs(lhs)] + [abs(t) for t in terms] + [1e-300])
    return abs(lhs - sum(terms)) / scale


def picard_fuchs_residuals(row: AbelianRow, fd_step: float = 1e-4,
                           opts: IntegratorOptions = QUAD_OPTS) -> dict[str, float]:
    """Relative residual of each linear identity among the integrals.

    The system for (I0'', I2'', Z'') is checked by differentiating I0', I2',
    Z' in e with a 5-point central stencil of step fd_step * e.
    """
    a1, e = row.a1, row.e
    d = [row.dI0, row.dI2, row.dI4, row.dI6, row.dI8, row.dI10]
    I = {0: row.I0, 2: row.I2, 4: row.I4}
    res: dict[str, float] = {}
    for i in (0, 2, 4):
        k = i // 2
        res[f"IdI[i={i}]"] = _rel(I[i], 2.0 * e * d[k], a1 * d[k + 1],
                                  -(a1 - 1.0) / 2.0 * d[k + 2], -d[k + 3] / 3.0)
        res[f"IdI2[i={i}]"] = _rel(I[i], -a1 * d[k + 1] / (i + 1), (a1 - 1.0) * d[k + 2] / (i + 1),
                                   d[k + 3] / (i + 1))
    q = a1 * a1 - a1 + 1.0
    res["I6810[6]"] = _rel(d[3], row.I0, a1 * d[1], -(a1 - 1.0) * d[2])
    res["I6810[8]"] = _rel(d[4], (1.0 - a1) * row.I0, 3.0 * row.I2, -(a1 - 1.0) * a1 * d[1], q * d[2])
    res["I6810[10]"] = _rel(d[5], q * row.I0, -3.0 * (a1 - 1.0) * row.I2, 5.0 * row.I4,
                            a1 * q * d[1], -(a1 - 1.0) * (1.0 + a1 * a1) * d[2])
    res["I024[0]"] = _rel(row.I0, 1.5 * e * d[0], a1 / 2.0 * d[1], (1.0 - a1) / 8.0 * d[2])
    res["I024[2]"] = _rel(row.I2, (1.0 - a1) * e / 8.0 * d[0], (a1 - a1 * a1 + 8.0 * e) / 8.0 * d[1],
                          (9.0 + 14.0 * a1 + 9.0 * a1 * a1) / 96.0 * d[2])
    res["I024[4]"] = _rel(row.I4, 3.0 * (5.0 + 6.0 * a1 + 5.0 * a1 * a1) * e / 128.0 * d[0],
                          3.0 * (5.0 * a1 + 6.0 * a1 ** 2 + 5.0 * a1 ** 3 + 8.0 * e - 8.0 * a1 * e) / 128.0 * d[1],
                          (45.0 + 73.0 * a1 - 73.0 * a1 ** 2 - 45.0 * a1 ** 3 + 384.0 * e) / 512.0 * d[2])
    h = fd_step * e
    rows = {k: abelian_integrals(a1, e + k * h, opts) for k in (-2, -1, 1, 2)}
    coef = {-2: 1.0, -1: -8.0, 1: 8.0, 2: -1.0}

    def deriv(attr):
        return sum(c * getattr(rows[k], attr) for k, c in coef.items()) / (12.0 * h)

    dd = (deriv("dI0"), deriv("dI2"), deriv("dZ"))
    Dv = D_of(a1, e)
    for n, (a_1, a_2), lhs in zip(("I0''", "I2''", "Z''"), a_matrix(a1, e), dd):
        res[f"D2[{n}]"] = _rel(Dv * lhs, a_1 * row.dI0, a_2 * row.dZ)
    return res


# ---------------------------------------------------------------- Riccati flow

def riccati_coeffs(a1: float, e: float) -> tuple[float, float, float, float]:
    """(e_dot, v0, v1, v2) of the planar system for (e, w)."""
    edot = 12.0 * e * (1.0 + 3.0 * a1 + 12.0 * e) * (-3.0 * a1 ** 2 - a1 ** 3 + 12.0 * e)
    v0 = -9.0 * e * (3 * a1 + 7 * a1 ** 2 - 7 * a1 ** 3 - 3 * a1 ** 4 + 4 * e + 56 * a1 * e + 4 * a1 ** 2 * e)
    v1 = 24.0 * e * (3 + 7 * a1 - 7 * a1 ** 2 - 3 * a1 ** 3 + 48 * e)
    v2 = -4.0 * (3 * a1 + 10 * a1 ** 2 + 3 * a1 ** 3 - 12 * e + 12 * a1 * e)
    return edot, v0, v1, v2


def asymptotic_seed(a1: float, offset: float = SEED_OFFSET) -> float:
    """Two-term expansion of w just above e2."""
    return a1 * (3.0 + a1) / 4.0 + 3.0 * a1 * (1.0 + a1) / math.log(offset)


def riccati_w(a1: float, e_grid, anchored: bool = False, offset: float = SEED_OFFSET) -> list[tuple[float, float]]:
    """Integrate dw/de = (v0 + v1 w + v2 w^2) / e_dot from e2 + offset across e_grid.

    The default seed is the two-term expansion at e2. With ``anchored`` the
    seed is the quadrature value of w at e2 + offset instead. The variable of
    integration is s = log(e - e2), which removes the 1/(e - e2) blow-up of
    the slope at the separatrix level.
    """
    _, e2 = energy_bounds(a1)
    grid = np.asarray(e_grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0 or np.any(np.diff(grid) <= 0.0):
        raise ValueError("e_grid must be a non-empty ascending list")
    if grid[0] <= e2:
        raise ValueError("e_grid must lie above e2")
    start = e2 + offset
    if grid[0] < start:
        raise ValueError(f"e_grid starts below the seed level e2 + {offset:g}")
    # e_dot vanishes at e2, at e = 0 and at e = -(1 + 3 a1) / 12
    for r in (0.0, -(1.0 + 3.0 * a1) / 12.0):
        if start <= r <= grid[-1]:
            raise SingularDrift(f"e_dot vanishes at e = {r:g} inside [{start:g}, {grid[-1]:g}]")
    w0 = abelian_integrals(a1, start).w if anchored else asymptotic_seed(a1, offset)

    def rhs(s, w):
        de = math.exp(s)
        e = e2 + de
        edot, v0, v1, v2 = riccati_coeffs(a1, e)
        return [de * (v0 + v1 * w[0] + v2 * w[0] * w[0]) / edot]

    ss = np.log(grid - e2)
    sol = solve_ivp(rhs, (math.log(offset), ss[-1]), [w0], method="DOP853", t_eval=ss,
                    rtol=1e-12, atol=1e-14)
    if not sol.success:
        raise RuntimeError(f"Riccati integration failed: {sol.message}")
    return [(float(e), float(w)) for e, w in zip(grid, sol.y[0])]


# ---------------------------------------------------------------- zeros of M

@lru_cache(maxsize=65536)
def _i0_i2(a1: float, e: float) -> tuple[float, float]:
    row = abelian_integrals(a1, e)
    return row.I0, row.I2


def melnikov_M(a1: float, a2: float, e: float) -> float:
    i0, i2 = _i0_i2(a1, e)
    return a2 * i0 + i2


def melnikov_zero_count(a1: float, a2: float, e_range: tuple[float, float] | None = None,
                        n: int = 64) -> tuple[int, list[float], list[float]]:
    """Sign changes of M on a grid, refined to 1e-10 in e.

    The grid is geometric in e - e2 so the approach to the separatrix level
    is resolved. Returns (count, zeros, P at each zero).
    """
    _, e2 = energy_bounds(a1)
    if e_range is None:
        e_range = (e2 + 1e-6, 10.0 * e2 + 1.0)
    lo, hi = e_range
    if lo <= e2:
        raise ValueError("e_range must lie above e2")
    if n < 2:
        raise ValueError("need at least two grid points")
    es = e2 + np.geomspace(lo - e2, hi - e2, n)
    ms = [melnikov_M(a1, a2, float(e)) for e in es]
    zeros = []
    for (ea, ma), (eb, mb) in zip(zip(es, ms), zip(es[1:], ms[1:])):
        if ma == 0.0:
            zeros.append(float(ea))
        elif ma * mb < 0.0:
            zeros.append(brentq(lambda e: a2 * abelian_integrals(a1, e).I0 + abelian_integrals(a1, e).I2,
                                float(ea), float(eb), xtol=1e-10, rtol=1e-14))
    ps = [(lambda r: r.I2 / r.I0)(abelian_integrals(a1, z)) for z in zeros]
    return len(zeros), zeros, ps
