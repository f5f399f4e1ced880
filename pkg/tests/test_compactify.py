import math

import numpy as np
import pytest

from lienard_atlas.compactify import (Chart, EquatorStability, ThresholdAmbiguity, chart_field,
                                      equator_stability_probe, infinity_equilibria, pushforward_residual,
                                      weighted_radius)
from lienard_atlas.equilibria import DEGENERATE_DAMPING
from lienard_atlas.model import State, SystemParams

POINTS = [SystemParams.raw(1.0, -3.0, -0.5, 1.0), SystemParams.scaled(-0.5, -0.1, 4.0),
          SystemParams.raw(-0.4, 1.5, 0.2, 2.5)]


@pytest.mark.parametrize("p", POINTS)
@pytest.mark.parametrize("chart", list(Chart))
def test_chart_field_is_the_pushforward(p, chart):
    rng = np.random.default_rng(7)
    for u, v in zip(rng.uniform(0.2, 2.0, 10), rng.uniform(0.05, 1.0, 10)):
        assert pushforward_residual(p, chart, float(u), float(v)) < 1e-10


@pytest.mark.parametrize("chart", list(Chart))
def test_equator_is_invariant(chart):
    cf = chart_field(POINTS[0], chart)
    assert cf.equator_invariant()
    _, dv = cf(0.7, 0.0)
    assert dv == 0.0


def test_chart_round_trip():
    cf = chart_field(POINTS[0], Chart.UX)
    s = cf.to_affine(0.3, 0.2)
    assert cf.from_affine(s) == pytest.approx((0.3, 0.2))
    assert weighted_radius(State(2.0, 27.0)) == pytest.approx(3.0)


def top_order_directions(b):
    """Directions y ~ u x^3 invariant under the leading terms: 3u^2 + b u + 1 = 0."""
    d = b * b - 12.0
    if d < 0:
        return []
    return sorted([(-b - math.sqrt(d)) / 6.0, (-b + math.sqrt(d)) / 6.0])


@pytest.mark.parametrize("b", [0.5, 1.0, 2.0, 3.0, 3.4, 3.5, 4.0, 6.0])
def test_equator_equilibria_dichotomy(b):
    p = SystemParams.raw(1.0, -3.0, -0.5, b)
    eqs = infinity_equilibria(p)
    if b < DEGENERATE_DAMPING:
        assert eqs == []
    else:
        ux = sorted(q.u for q in eqs if q.chart is Chart.UX)
        assert ux == pytest.approx(top_order_directions(b), rel=1e-12)
        assert len(eqs) == 4


def test_equator_equilibria_types_for_large_damping():
    labels = sorted(q.label for q in infinity_equilibria(SystemParams.scaled(-0.5, -0.1, 6.0)))
    assert labels.count("Saddle") == 2
    assert all(lab in ("Saddle", "StableNode", "UnstableNode") for lab in labels)


def test_threshold_ambiguity_and_degenerate_case():
    with pytest.raises(ThresholdAmbiguity):
        infinity_equilibria(SystemParams.raw(1.0, 0.0, 0.0, DEGENERATE_DAMPING + 1e-11))
    eqs = infinity_equilibria(SystemParams.raw(1.0, 0.0, 0.0, DEGENERATE_DAMPING))
    assert eqs and all(q.degenerate and q.label == "SaddleNode" for q in eqs)


@pytest.mark.parametrize("b", [1.0, 3.0])
def test_probe_repelling_below_threshold(b):
    assert equator_stability_probe(SystemParams.scaled(-0.5, -0.1, b)) is EquatorStability.REPELLING


def test_probe_refuses_above_threshold():
    with pytest.raises(ValueError):
        equator_stability_probe(SystemParams.scaled(-0.5, -0.1, 4.0))
