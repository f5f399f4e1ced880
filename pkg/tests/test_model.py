import math
import warnings

import numpy as np
import pytest

from lienard_atlas.model import (DomainError, Form, State, SystemParams, divergence, energy, energy_rate,
                                 eval_field, from_scaled, in_G2, jacobian, lienard_forms, symmetry_image,
                                 to_scaled)


def test_scaled_coefficients():
    p = SystemParams.scaled(-0.5, -0.1, 1.0)
    assert p.coeffs == (0.5, -1.5, -0.1, 1.0)
    assert p.form is Form.SCALED


@pytest.mark.parametrize("bad", [(-1.5, 0.0, 1.0), (0.0, 0.0, -1.0), (math.nan, 0.0, 1.0)])
def test_scaled_rejects_out_of_domain(bad):
    with pytest.raises(ValueError):
        SystemParams.scaled(*bad)


def test_raw_negative_b_is_folded_with_warning():
    with pytest.warns(UserWarning, match="normalized"):
        p = SystemParams.raw(1.0, 0.0, 0.3, -2.0)
    assert (p.mu3, p.b, p.time_reversed) == (-0.3, 2.0, True)


def test_raw_zero_b_rejected():
    with pytest.raises(ValueError):
        SystemParams.raw(1.0, 0.0, 0.0, 0.0)


def test_field_is_odd():
    p = SystemParams.raw(0.7, -2.0, -0.4, 1.3)
    rng = np.random.default_rng(1)
    for x, y in rng.normal(size=(20, 2)):
        a = eval_field(p, State(x, y))
        b = eval_field(p, symmetry_image(State(x, y)))
        assert b.x == pytest.approx(-a.x, abs=1e-14) and b.y == pytest.approx(-a.y, abs=1e-12)


def test_energy_rate_matches_chain_rule():
    p = SystemParams.scaled(-0.3, -0.6, 1.2)
    for x, y in [(0.3, -1.1), (1.4, 0.2), (-2.0, 0.9)]:
        s = State(x, y)
        v = eval_field(p, s)
        h = 1e-6
        num = (energy(p, State(x + h * v.x, y + h * v.y)) - energy(p, State(x - h * v.x, y - h * v.y))) / (2 * h)
        assert energy_rate(p, s) == pytest.approx(num, rel=1e-7)


def test_jacobian_against_differences():
    p = SystemParams.raw(-0.4, 1.5, -0.2, 0.8)
    s = State(0.7, -0.4)
    J = jacobian(p, s)
    h = 1e-6
    for k, (dx, dy) in enumerate([(h, 0.0), (0.0, h)]):
        fp = eval_field(p, State(s.x + dx, s.y + dy))
        fm = eval_field(p, State(s.x - dx, s.y - dy))
        assert J[0][k] == pytest.approx((fp.x - fm.x) / (2 * h), abs=1e-8)
        assert J[1][k] == pytest.approx((fp.y - fm.y) / (2 * h), abs=1e-8)
    assert divergence(p, s) == pytest.approx(J[0][0] + J[1][1])


def test_lienard_forms_consistent():
    p = SystemParams.raw(1.0, -2.5, -0.3, 2.0)
    lf = lienard_forms(p)
    # F' = f and G' = g, term by term
    for k in range(1, len(lf.F_coeffs)):
        assert k * lf.F_coeffs[k] == pytest.approx(lf.f_coeffs[k - 1] if k - 1 < len(lf.f_coeffs) else 0.0)
    for k in range(1, len(lf.energy_coeffs)):
        assert k * lf.energy_coeffs[k] == pytest.approx(lf.g_coeffs[k - 1])


def test_scaling_round_trip():
    raw = SystemParams.raw(0.5, -3.0, -0.7, 1.5)
    q, s = to_scaled(raw)
    back = from_scaled(q, s)
    for a, b in zip(raw.coeffs, back.coeffs):
        assert a == pytest.approx(b, rel=1e-13)
    # outer equilibria of the scaled system sit at x = +-1
    g1, g3, _, _ = q.coeffs
    assert g1 + g3 + 1.0 == pytest.approx(0.0, abs=1e-14)


def test_scaling_conjugates_fields():
    raw = SystemParams.raw(0.5, -3.0, -0.7, 1.5)
    q, s = to_scaled(raw)
    for x, y in [(0.4, 0.3), (-1.2, 0.8), (0.9, -2.0)]:
        fs = eval_field(q, State(x, y))
        fr = eval_field(raw, State(s * x, s ** 3 * y))
        # (x, y, t) -> (s x, s^3 y, t / s^2)
        assert fr.x == pytest.approx(s ** 3 * fs.x, rel=1e-12)
        assert fr.y == pytest.approx(s ** 5 * fs.y, rel=1e-12)


def test_to_scaled_needs_outer_pair():
    assert not in_G2(1.0, 0.0)
    with pytest.raises(DomainError):
        to_scaled(SystemParams.raw(1.0, 0.0, 0.0, 1.0))
