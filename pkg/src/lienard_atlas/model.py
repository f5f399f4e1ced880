"""Quintic Z2-equivariant Lienard family in raw and scaled coordinates.

Raw form:     x' = y,  y' = -(mu1 x + mu2 x^3 + x^5) - (mu3 + b x^2) y
Scaled form:  x' = y,  y' = -x (a1 + x^2)(x^2 - 1) - delta (a2 + x^2) y

Both are the same polynomial shape, so internally every parameter set is
reduced to four numbers (g1, g3, f0, f2) with

    g(x) = g1 x + g3 x^3 + x^5,    f(x) = f0 + f2 x^2.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple


class DomainError(ValueError):
    """Raised when a raw parameter point has no scaled representative."""


class Form(str, Enum):
    RAW = "raw"
    SCALED = "scaled"


class State(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class SystemParams:
    """One point of parameter space, tagged with its parameterization.

    Use the ``raw`` and ``scaled`` constructors; they validate and normalize.
    """

    form: Form
    mu1: float = math.nan
    mu2: float = math.nan
    mu3: float = math.nan
    b: float = math.nan
    a1: float = math.nan
    a2: float = math.nan
    delta: float = math.nan
    # set when a b < 0 input was folded onto b > 0 by reversing time
    time_reversed: bool = False

    @classmethod
    def raw(cls, mu1: float, mu2: float, mu3: float, b: float) -> "SystemParams":
        vals = [float(v) for v in (mu1, mu2, mu3, b)]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("raw parameters must be finite")
        mu1, mu2, mu3, b = vals
        if b == 0.0:
            raise ValueError("b must be nonzero")
        flipped = False
        if b < 0.0:
            # (y, t, mu3, b) -> (-y, -t, -mu3, -b) maps the system onto itself
            warnings.warn(
                "b < 0 normalized to b > 0 via (y, t, mu3, b) -> (-y, -t, -mu3, -b); "
                "orbits are traversed in reversed time",
                stacklevel=2,
            )
            mu3, b, flipped = -mu3, -b, True
        return cls(Form.RAW, mu1=mu1, mu2=mu2, mu3=mu3, b=b, time_reversed=flipped)

    @classmethod
    def scaled(cls, a1: float, a2: float, delta: float) -> "SystemParams":
        a1, a2, delta = float(a1), float(a2), float(delta)
        if not all(math.isfinite(v) for v in (a1, a2, delta)):
            raise ValueError("scaled parameters must be finite")
        if a1 < -1.0:
            raise ValueError(f"a1 must be >= -1, got {a1}")
        # delta = 0 is the Hamiltonian limit, used by the Abelian-integral code
        if delta < 0.0:
            raise ValueError(f"delta must be >= 0, got {delta}")
        return cls(Form.SCALED, a1=a1, a2=a2, delta=delta)

    @property
    def coeffs(self) -> tuple[float, float, float, float]:
        """(g1, g3, f0, f2) of g(x) = g1 x + g3 x^3 + x^5, f(x) = f0 + f2 x^2."""
        if self.form is Form.RAW:
            return (self.mu1, self.mu2, self.mu3, self.b)
        return (-self.a1, self.a1 - 1.0, self.delta * self.a2, self.delta)

    @property
    def damping_slope(self) -> float:
        """b in raw form, delta in scaled form (the x^2 coefficient of f)."""
        return self.coeffs[3]

    def as_raw(self) -> "SystemParams":
        """The same vector field read as a raw quadruple (no rescaling)."""
        if self.form is Form.RAW:
            return self
        g1, g3, f0, f2 = self.coeffs
        if f2 == 0.0:
            raise ValueError("delta = 0 has no raw representative (b > 0 required)")
        return SystemParams(Form.RAW, mu1=g1, mu2=g3, mu3=f0, b=f2)

    def with_a2(self, a2: float) -> "SystemParams":
        if self.form is not Form.SCALED:
            raise ValueError("with_a2 needs scaled parameters")
        return SystemParams.scaled(self.a1, a2, self.delta)

    def describe(self) -> dict:
        if self.form is Form.RAW:
            return {"form": "raw", "mu1": self.mu1, "mu2": self.mu2, "mu3": self.mu3, "b": self.b}
        return {"form": "scaled", "a1": self.a1, "a2": self.a2, "delta": self.delta}


@dataclass(frozen=True)
class LienardForms:
    """Coefficient lists in ascending powers of x."""

    g_coeffs: tuple[float, ...]
    f_coeffs: tuple[float, ...]
    F_coeffs: tuple[float, ...]
    energy_coeffs: tuple[float, ...]


def lienard_forms(p: SystemParams) -> LienardForms:
    g1, g3, f0, f2 = p.coeffs
    g = (0.0, g1, 0.0, g3, 0.0, 1.0)
    f = (f0, 0.0, f2)
    F = (0.0, f0, 0.0, f2 / 3.0)
    G = (0.0, 0.0, g1 / 2.0, 0.0, g3 / 4.0, 0.0, 1.0 / 6.0)
    return LienardForms(g, f, F, G)


def in_G2(mu1: float, mu2: float) -> bool:
    """True when x^4 + mu2 x^2 + mu1 has a positive root in x^2."""
    disc = mu2 * mu2 - 4.0 * mu1
    return disc >= 0.0 and -mu2 + math.sqrt(disc) > 0.0


def to_scaled(p: SystemParams) -> tuple[SystemParams, float]:
    """Rescale a raw point so the outer equilibria sit at x = +-1.

    Returns the scaled parameters and s, with (x, y, t) -> (s x, s^3 y, t / s^2)
    carrying scaled orbits to raw ones.
    """
    if p.form is Form.SCALED:
        return p, 1.0
    if not in_G2(p.mu1, p.mu2):
        raise DomainError(f"(mu1, mu2) = ({p.mu1}, {p.mu2}) has a unique equilibrium; no scaling exists")
    s2 = (-p.mu2 + math.sqrt(p.mu2 * p.mu2 - 4.0 * p.mu1)) / 2.0
    s = math.sqrt(s2)
    a1 = p.mu2 / s2 + 1.0
    # roundoff can push a1 a hair below -1 on the double-root boundary
    if -1.0 - 1e-12 < a1 < -1.0:
        a1 = -1.0
    return SystemParams.scaled(a1, p.mu3 / (p.b * s2), p.b), s


def from_scaled(p: SystemParams, s: float) -> SystemParams:
    """Inverse of to_scaled for a chosen s > 0."""
    if p.form is not Form.SCALED:
        raise ValueError("from_scaled needs scaled parameters")
    if s <= 0.0:
        raise ValueError("s must be positive")
    s2 = s * s
    return SystemParams.raw(-p.a1 * s2 * s2, (p.a1 - 1.0) * s2, p.a2 * p.delta * s2, p.delta)


def g_of(p: SystemParams, x: float) -> float:
    g1, g3, _, _ = p.coeffs
    x2 = x * x
    return x * (g1 + x2 * (g3 + x2))


def f_of(p: SystemParams, x: float) -> float:
    _, _, f0, f2 = p.coeffs
    return f0 + f2 * x * x


def eval_field(p: SystemParams, s: State) -> State:
    x, y = s
    return State(y, -g_of(p, x) - f_of(p, x) * y)


def jacobian(p: SystemParams, s: State) -> tuple[tuple[float, float], tuple[float, float]]:
    g1, g3, f0, f2 = p.coeffs
    x, y = s
    x2 = x * x
    dg = g1 + x2 * (3.0 * g3 + 5.0 * x2)
    return ((0.0, 1.0), (-dg - 2.0 * f2 * x * y, -(f0 + f2 * x2)))


def divergence(p: SystemParams, s: State) -> float:
    return -f_of(p, s.x)


def symmetry_image(s: State) -> State:
    return State(-s.x, -s.y)


def potential(p: SystemParams, x: float) -> float:
    """Integral of g from 0 to x."""
    g1, g3, _, _ = p.coeffs
    x2 = x * x
    return x2 * (g1 / 2.0 + x2 * (g3 / 4.0 + x2 / 6.0))


def energy(p: SystemParams, s: State) -> float:
    return potential(p, s.x) + 0.5 * s.y * s.y


def energy_rate(p: SystemParams, s: State) -> float:
    return -f_of(p, s.x) * s.y * s.y
