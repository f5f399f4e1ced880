"""Finite equilibria, their classification, and local bifurcation surfaces.

All decisions are made in raw coordinates. A scaled point (a1, a2, delta) is
the raw point (mu1, mu2, mu3, b) = (-a1, a1 - 1, delta a2, delta) without any
rescaling, so the same rules apply to both forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .model import Form, SystemParams

DEFAULT_TOL = 1e-9
DEGENERATE_DAMPING = 2.0 * math.sqrt(3.0)

LABELS_5 = ("E_l2", "E_l1", "E_0", "E_r1", "E_r2")


class ToleranceAmbiguity(ValueError):
    """The parameter point is within tol of rows that disagree."""


class NotWeakFocus(ValueError):
    pass


class Kind(str, Enum):
    SINK = "Sink"
    SOURCE = "Source"
    SADDLE = "Saddle"
    STABLE_WEAK_FOCUS = "StableWeakFocusOrder1"
    UNSTABLE_WEAK_FOCUS = "UnstableWeakFocusOrder1"
    SADDLE_NODE_STABLE = "SaddleNodeStableSector"
    SADDLE_NODE_UNSTABLE = "SaddleNodeUnstableSector"
    CUSP = "Cusp"
    STABLE_DEGENERATE_NODE = "StableDegenerateNode"
    UNSTABLE_DEGENERATE_NODE = "UnstableDegenerateNode"
    DEGENERATE_SADDLE = "DegenerateSaddle"
    STABLE_FOCUS_DEGENERATE = "StableFocusDegenerate"


@dataclass(frozen=True)
class ClassKind:
    kind: Kind
    focal_value: float | None = None
    # stability read off an energy argument rather than stated in the table
    inferred: bool = False

    def __post_init__(self):
        weak = self.kind in (Kind.STABLE_WEAK_FOCUS, Kind.UNSTABLE_WEAK_FOCUS)
        if weak != (self.focal_value is not None):
            raise ValueError("focal_value is required exactly for weak foci")


@dataclass(frozen=True)
class Equilibrium:
    x: float
    label: str
    jac_det: float
    jac_tr: float
    disc: float  # mu2^2 - 4 mu1
    kind: ClassKind | None = None
    merged: bool = False  # a multiple root of the quintic

    @property
    def is_saddle(self) -> bool:
        return self.jac_det < 0.0

    @property
    def is_antisaddle(self) -> bool:
        return self.jac_det > 0.0


def _raw(p: SystemParams) -> tuple[float, float, float, float]:
    g1, g3, f0, f2 = p.coeffs
    return g1, g3, f0, f2


def _jac_at(p: SystemParams, x: float) -> tuple[float, float]:
    g1, g3, f0, f2 = _raw(p)
    x2 = x * x
    return g1 + x2 * (3.0 * g3 + 5.0 * x2), -(f0 + f2 * x2)


def find_equilibria(p: SystemParams, tol: float = DEFAULT_TOL, classify_kinds: bool = True) -> list[Equilibrium]:
    """Roots of x (x^4 + mu2 x^2 + mu1) sorted by abscissa.

    The quartic factor is solved as a quadratic in z = x^2. Roots within tol
    of each other (or of z = 0) are merged into one degenerate equilibrium.
    """
    mu1, mu2, _, _ = _raw(p)
    disc = mu2 * mu2 - 4.0 * mu1
    zs: list[tuple[float, str]] = []  # (x^2, label of the right-hand root)
    origin_merged = False
    outer_merged = False
    if disc >= -tol:
        r = math.sqrt(max(disc, 0.0))
        # stable evaluation of both roots of z^2 + mu2 z + mu1
        if mu2 <= 0.0:
            z_out = (-mu2 + r) / 2.0
            z_in = mu1 / z_out if z_out != 0.0 else 0.0
        else:
            z_in = (-mu2 - r) / 2.0
            z_out = mu1 / z_in if z_in != 0.0 else 0.0
        if abs(disc) <= tol:
            if z_out > tol:
                zs.append((z_out, "E_r2"))
                outer_merged = True
            elif abs(z_out) <= tol:
                origin_merged = True
        else:
            if z_out > tol:
                zs.append((z_out, "E_r2"))
            elif abs(z_out) <= tol:
                origin_merged = True
            if z_in > tol:
                zs.append((z_in, "E_r1"))
            elif abs(z_in) <= tol:
                origin_merged = True
    pts: list[tuple[float, str, bool]] = [(0.0, "E_0", origin_merged)]
    for z, lab in zs:
        x = math.sqrt(z)
        # polish the root of the quintic with two Newton steps
        for _ in range(2):
            g = x * (mu1 + x * x * (mu2 + x * x))
            dg = mu1 + x * x * (3.0 * mu2 + 5.0 * x * x)
            if dg != 0.0:
                x -= g / dg
        pts.append((x, lab, outer_merged and lab == "E_r2"))
        pts.append((-x, lab.replace("r", "l"), outer_merged and lab == "E_r2"))
    pts.sort(key=lambda t: t[0])
    out = []
    for x, lab, merged in pts:
        det, tr = _jac_at(p, x)
        eq = Equilibrium(x=x, label=lab, jac_det=det, jac_tr=tr, disc=disc, merged=merged)
        if classify_kinds:
            eq = Equilibrium(x=x, label=lab, jac_det=det, jac_tr=tr, disc=disc, merged=merged,
                             kind=classify(p, eq, tol))
        out.append(eq)
    return out


def _cmp(v: float, tol: float) -> int:
    if v > tol:
        return 1
    if v < -tol:
        return -1
    return 0


def classify(p: SystemParams, eq: Equilibrium, tol: float = DEFAULT_TOL) -> ClassKind:
    """Type and stability of one equilibrium by the decision table."""
    mu1, mu2, mu3, b = _raw(p)
    if b <= 0.0:
        raise ValueError("classification needs b > 0")
    disc = mu2 * mu2 - 4.0 * mu1
    if eq.label == "E_0":
        s1 = _cmp(mu1, tol)
        if s1 > 0:
            s3 = _cmp(mu3, tol)
            if s3 > 0:
                return ClassKind(Kind.SINK)
            if s3 < 0:
                return ClassKind(Kind.SOURCE)
            return ClassKind(Kind.STABLE_WEAK_FOCUS, focal_value=-b / (8.0 * math.sqrt(mu1)))
        if s1 < 0:
            return ClassKind(Kind.SADDLE)
        # mu1 = 0: triple (or quintuple) root at the origin
        s2 = _cmp(mu2, tol)
        if s2 < 0:
            return ClassKind(Kind.DEGENERATE_SADDLE)
        s3 = _cmp(mu3, tol)
        if s3 > 0:
            return ClassKind(Kind.STABLE_DEGENERATE_NODE)
        if s3 < 0:
            return ClassKind(Kind.UNSTABLE_DEGENERATE_NODE)
        if s2 > 0:
            return ClassKind(Kind.STABLE_FOCUS_DEGENERATE)
        if b < DEGENERATE_DAMPING - tol:
            return ClassKind(Kind.STABLE_FOCUS_DEGENERATE)
        return ClassKind(Kind.STABLE_DEGENERATE_NODE, inferred=True)

    if eq.label in ("E_l1", "E_r1"):
        if _cmp(disc, tol) == 0:
            raise ToleranceAmbiguity("inner and outer pairs coincide within tol")
        return ClassKind(Kind.SADDLE)

    # outer pair E_l2 / E_r2
    if _cmp(disc, tol) == 0:
        if _cmp(mu1, tol) == 0:
            raise ToleranceAmbiguity("double-root row and mu1 = 0 row both apply")
        s = _cmp(mu3 - b * mu2 / 2.0, tol)
        if s == 0:
            return ClassKind(Kind.CUSP)
        return ClassKind(Kind.SADDLE_NODE_STABLE if s > 0 else Kind.SADDLE_NODE_UNSTABLE)
    if _cmp(mu1, tol) == 0 and mu2 < 0.0 and eq.merged:
        raise ToleranceAmbiguity("outer pair merged with the origin")
    r = math.sqrt(disc)
    s = _cmp(mu3 - b * (mu2 - r) / 2.0, tol)
    if s > 0:
        return ClassKind(Kind.SINK)
    if s < 0:
        return ClassKind(Kind.SOURCE)
    return ClassKind(Kind.UNSTABLE_WEAK_FOCUS, focal_value=_outer_focal_value(mu2, b, disc))


def _outer_focal_value(mu2: float, b: float, disc: float) -> float:
    r = math.sqrt(disc)
    return b * (2.0 * r - mu2) / (4.0 * r * math.sqrt(disc - mu2 * r))


def first_focal_value(p: SystemParams, eq: Equilibrium, tr_tol: float = 1e-10) -> float:
    """First Lyapunov (focal) value at a weak-focus candidate."""
    if abs(eq.jac_tr) > tr_tol or eq.jac_det <= 0.0:
        raise NotWeakFocus(f"{eq.label}: trace {eq.jac_tr:.3g}, determinant {eq.jac_det:.3g}")
    mu1, mu2, _, b = _raw(p)
    if eq.label == "E_0":
        return -b / (8.0 * math.sqrt(mu1))
    if eq.label in ("E_l2", "E_r2"):
        return _outer_focal_value(mu2, b, mu2 * mu2 - 4.0 * mu1)
    raise NotWeakFocus(f"{eq.label} is not a focus candidate")


@dataclass(frozen=True)
class SurfaceMembership:
    labels: frozenset[str]
    residuals: dict[str, float] = field(default_factory=dict)

    def __contains__(self, item: str) -> bool:
        return item in self.labels


def surface_membership(p: SystemParams, tol: float = DEFAULT_TOL) -> SurfaceMembership:
    """Which local bifurcation surfaces pass through p (within tol)."""
    mu1, mu2, mu3, b = _raw(p)
    disc = mu2 * mu2 - 4.0 * mu1
    res: dict[str, float] = {}
    hit: set[str] = set()

    res["P1"] = res["P2"] = mu1
    if abs(mu1) <= tol and mu2 > tol:
        hit.add("P1")
    if abs(mu1) <= tol and mu2 < -tol:
        hit.add("P2")
    res["SN"] = disc
    if abs(disc) <= tol and mu2 < -tol:
        hit.add("SN")
    res["H1"] = mu3
    if mu1 > tol and abs(mu3) <= tol:
        hit.add("H1")
    # outer pair exists when disc >= 0 and -mu2 + sqrt(disc) > 0
    if disc >= -tol and (-mu2 + math.sqrt(max(disc, 0.0))) > tol:
        h2 = mu3 - b * (mu2 - math.sqrt(max(disc, 0.0))) / 2.0
        res["H2"] = h2
        if abs(h2) <= tol:
            hit.add("H2")
    res["DBT1"] = res["DBT2"] = max(abs(mu1), abs(mu3))
    if abs(mu1) <= tol and abs(mu3) <= tol:
        if mu2 > tol:
            hit.add("DBT1")
        elif mu2 < -tol:
            hit.add("DBT2")
    if "SN" in hit and "H2" in hit:
        hit.add("BT")
        res["BT"] = max(abs(disc), abs(res["H2"]))
    # a1 = -1 in scaled coordinates is the double-root locus seen from the
    # outer pair; a1 = 0 is the pitchfork at the origin
    if p.form is Form.SCALED:
        res["T"] = p.a1 + 1.0
        if abs(p.a1 + 1.0) <= tol:
            hit.add("T")
    res["DE"] = b - DEGENERATE_DAMPING
    if abs(b - DEGENERATE_DAMPING) <= tol:
        hit.add("DE")
    return SurfaceMembership(frozenset(hit), res)
