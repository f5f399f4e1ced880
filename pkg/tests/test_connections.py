import math

import pytest
from scipy.integrate import solve_ivp

from lienard_atlas.connections import (BadBracket, Branch, CurveKind, MismatchKind, a_star, curve_value,
                                       manifold_shot, mismatch, region_classify, shot_spread, trace_curve)
from lienard_atlas.equilibria import find_equilibria
from lienard_atlas.flow import positive_x_axis
from lienard_atlas.model import State, SystemParams, eval_field, jacobian


def scipy_landing(p, xs, stable, T=200.0):
    """First crossing of y = 0 beyond xs by the right branch of the saddle at (xs, 0),
    followed with scipy's integrator (backward for the stable branch)."""
    (_, _), (c, d) = jacobian(p, State(xs, 0.0))
    root = math.sqrt(d * d / 4 + c)
    lam = d / 2 - root if stable else d / 2 + root
    n = math.hypot(1.0, lam)
    s0 = [xs + 1e-8 / n, 1e-8 * lam / n]
    sgn = -1.0 if stable else 1.0

    def rhs(t, s):
        v = eval_field(p, State(*s))
        return [sgn * v.x, sgn * v.y]

    def hit(t, s):
        return s[1] if t > 1e-3 and s[0] > xs + 1e-3 else (1.0 if s0[1] >= 0 else -1.0)

    hit.terminal = True
    sol = solve_ivp(rhs, (0.0, T), s0, method="DOP853", rtol=1e-12, atol=1e-15, events=hit)
    return float(sol.y_events[0][0][0])


def connection_gap(a1, a2, xs):
    p = SystemParams.scaled(a1, a2, 1.0)
    return scipy_landing(p, xs, stable=True) - scipy_landing(p, xs, stable=False)


def test_figure_eight_closes_under_independent_integrator():
    a2 = curve_value(CurveKind.PHI1, 0.5, 1.0)
    assert a2 == pytest.approx(-0.72813, abs=1e-4)
    assert abs(connection_gap(0.5, a2, 0.0)) < 1e-6
    assert abs(connection_gap(0.5, a2 + 0.02, 0.0)) > 1e-3


def test_small_homoclinic_closes_under_independent_integrator():
    a2 = curve_value(CurveKind.PHI2, -0.5, 1.0)
    assert a2 == pytest.approx(-0.91188, abs=1e-4)
    xs = math.sqrt(0.5)
    assert abs(connection_gap(-0.5, a2, xs)) < 1e-6
    assert abs(connection_gap(-0.5, a2 - 0.02, xs)) > 1e-3


def test_mismatch_changes_sign_across_curve():
    a2 = curve_value(CurveKind.PHI3, -0.5, 1.0)
    below = mismatch(SystemParams.scaled(-0.5, a2 - 0.01, 1.0), MismatchKind.TWO_SADDLE_OUTER)
    above = mismatch(SystemParams.scaled(-0.5, a2 + 0.01, 1.0), MismatchKind.TWO_SADDLE_OUTER)
    assert below > 0.0 > above


def test_trace_agrees_with_other_root_finder():
    from scipy.optimize import brentq
    a2 = trace_curve(CurveKind.PHI4, -0.5, 1.0).a2_star
    ref = brentq(lambda v: mismatch(SystemParams.scaled(-0.5, v, 1.0), MismatchKind.SMALL_ORIGIN_LOOP),
                 -0.3, -0.01, xtol=1e-10)
    assert a2 == pytest.approx(ref, abs=1e-7)


def test_shot_does_not_depend_on_seed_offset():
    p = SystemParams.scaled(-0.5, -0.5, 1.0)
    assert shot_spread(p, math.sqrt(0.5), Branch.UNSTABLE_RIGHT, positive_x_axis()) < 1e-5


def test_bad_bracket():
    with pytest.raises(BadBracket):
        trace_curve(CurveKind.PHI1, 0.5, 1.0, bracket=(-0.5, -0.4))


@pytest.mark.parametrize("a1", [-0.8, -0.5, -0.2])
def test_curve_order(a1):
    p2, p3, p4 = (curve_value(k, a1, 1.0) for k in (CurveKind.PHI2, CurveKind.PHI3, CurveKind.PHI4))
    assert -1.0 < p2 < p3 < p4 < 0.0
    assert p2 < -1.0 / 3.0 < p4


def test_saddle_node_loops_on_boundary_line():
    p1 = curve_value(CurveKind.P1SN, -1.0, 1.0)
    p2 = curve_value(CurveKind.P2SN, -1.0, 1.0)
    assert -1.0 / 3.0 < p2 < p1 < 0.0
    # the interior curves run into them continuously
    assert curve_value(CurveKind.PHI3, -0.999, 1.0) == pytest.approx(p2, abs=2e-3)
    assert curve_value(CurveKind.PHI4, -0.999, 1.0) == pytest.approx(p1, abs=2e-3)


def test_double_cycle_curve_sits_between():
    a1 = 0.5
    assert curve_value(CurveKind.PHI1, a1, 1.0) < curve_value(CurveKind.PHI5, a1, 1.0) < -1.0 / 3.0


def test_a_star():
    star, gap = a_star(1.0)
    assert star == pytest.approx(-0.461156, abs=1e-4)
    assert curve_value(CurveKind.PHI3, star, 1.0) == pytest.approx(star, abs=1e-5)
    assert gap < 1e-6


REGIONS = [((0.5, -0.1), "I"), ((0.5, -0.7), "II"), ((0.5, -0.9), "III"), ((0.5, -1.1), "IV"),
           ((-0.5, -1.1), "V"), ((-0.5, -0.95), "VI"), ((-0.5, -0.85), "VII"), ((-0.02, -0.63), "VIII"),
           ((-0.5, -0.1), "IX"), ((-0.5, -0.05), "X"), ((-0.5, 0.5), "XI")]


@pytest.mark.parametrize("a,label", REGIONS, ids=[r for _, r in REGIONS])
def test_example_regions(a, label):
    assert region_classify(a[0], a[1], 1.0) == label


def test_coarse_labels_above_threshold():
    assert region_classify(-0.5, 0.5, 4.0) == "R11"


def test_boundary_line_strata():
    assert region_classify(-1.0, -1.5, 1.0) == "T1"
    assert region_classify(-1.0, 0.5, 1.0) == "T5"
