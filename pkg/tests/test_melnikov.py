import math

import numpy as np
import pytest
from scipy.integrate import quad

from lienard_atlas.flow import IntegratorOptions
from lienard_atlas.melnikov import (SEED_OFFSET, abelian_integrals, asymptotic_seed, energy_bounds, eta,
                                    melnikov_M, melnikov_zero_count, picard_fuchs_residuals, riccati_w)


def G(a1, x):
    return x ** 6 / 6 + (a1 - 1) * x ** 4 / 4 - a1 * x ** 2 / 2


def quad_integrals(a1, e, i):
    """oint x^i y dx and oint x^i / y dx by direct quadrature in x = eta sin(theta)."""
    h = eta(a1, e)

    def y(th):
        return math.sqrt(max(2.0 * (e - G(a1, h * math.sin(th))), 0.0))

    def with_y(th):
        x = h * math.sin(th)
        return x ** i * y(th) * h * math.cos(th)

    def over_y(th):
        x = h * math.sin(th)
        c = math.cos(th)
        if c < 1e-12:
            # limit of cos / y at the turning point
            gp = h * (-a1 + (a1 - 1) * h * h + h ** 4)
            return x ** i * h / math.sqrt(h * gp)
        return x ** i * h * c / y(th)

    kw = dict(epsabs=0.0, epsrel=1e-12, limit=400)
    I = 2.0 * quad(with_y, -math.pi / 2, math.pi / 2, **kw)[0]
    dI = 2.0 * quad(over_y, -math.pi / 2, math.pi / 2, **kw)[0]
    return I, dI


def test_energy_bounds_examples():
    e1, e2 = energy_bounds(-0.5)
    assert e1 == 0.0 and e2 == pytest.approx(0.0520833333333333, abs=1e-15)
    assert energy_bounds(-1.0 / 3.0)[1] == pytest.approx(2.0 / 81.0, abs=1e-15)
    assert energy_bounds(-0.1)[0] == pytest.approx(0.025 - 1.0 / 12.0)
    for a1 in (-0.9, -0.5, -0.1):
        assert energy_bounds(a1)[1] == pytest.approx(G(a1, math.sqrt(-a1)), abs=1e-14)
    assert energy_bounds(-1e-8)[1] < 1e-15
    with pytest.raises(ValueError):
        energy_bounds(0.2)


@pytest.mark.parametrize("a1,e", [(-0.5, 0.1), (-0.9, 0.15), (-0.1, 50.0)])
def test_eta_is_turning_point(a1, e):
    h = eta(a1, e)
    assert h > 1.0 and G(a1, h) == pytest.approx(e, rel=1e-13)


@pytest.mark.parametrize("a1,e", [(-0.5, 0.1), (-1.0 / 3.0, 0.05), (-0.9, 0.5), (-0.1, 3.0)])
def test_time_quadrature_matches_direct_quadrature(a1, e):
    row = abelian_integrals(a1, e)
    for i, I, dI in [(0, row.I0, row.dI0), (2, row.I2, row.dI2), (4, row.I4, row.dI4), (10, None, row.dI10)]:
        qI, qdI = quad_integrals(a1, e, i)
        if I is not None:
            assert I == pytest.approx(qI, rel=1e-8)
        assert dI == pytest.approx(qdI, rel=1e-8)


def test_row_invariants():
    row = abelian_integrals(-0.5, 0.1)
    assert abs(row.odd_moment) < 1e-9
    assert row.closure < 1e-8
    assert row.I0 > 0
    assert row.Z == pytest.approx(0.75 * (-1.5) * row.I2 + row.I4)
    assert row.P == pytest.approx(row.I2 / row.I0)
    assert row.with_a2(-0.4).M == pytest.approx(-0.4 * row.I0 + row.I2)


def test_derivatives_match_differences_of_integrals():
    a1, e, h = -0.5, 0.2, 1e-4
    rows = [abelian_integrals(a1, e + k * h) for k in (-1, 0, 1)]
    assert rows[1].dI0 == pytest.approx((rows[2].I0 - rows[0].I0) / (2 * h), rel=1e-7)
    assert rows[1].dI2 == pytest.approx((rows[2].I2 - rows[0].I2) / (2 * h), rel=1e-7)
    # w = Z' / I0' read off as a ratio of differences
    w_fd = (rows[2].Z - rows[0].Z) / (rows[2].I0 - rows[0].I0)
    assert rows[1].w == pytest.approx(w_fd, rel=1e-6)


def test_I0_increases_with_energy():
    _, e2 = energy_bounds(-0.5)
    i0 = [abelian_integrals(-0.5, e).I0 for e in e2 + np.geomspace(1e-4, 5.0, 15)]
    assert np.all(np.diff(i0) > 0)


def test_first_order_identities():
    res = picard_fuchs_residuals(abelian_integrals(-0.5, 0.1))
    assert max(res.values()) < 1e-6
    assert picard_fuchs_residuals(abelian_integrals(-1.0 / 3.0, 0.05))["IdI[i=0]"] < 1e-6


def test_identity_residuals_shrink_with_tolerance():
    def worst(rt):
        o = IntegratorOptions(rel_tol=rt, abs_tol=rt * 1e-2, max_time=1e4)
        res = picard_fuchs_residuals(abelian_integrals(-0.5, 0.1, o), opts=o)
        return max(v for k, v in res.items() if not k.startswith("D2"))
    r = [worst(rt) for rt in (1e-8, 1e-9, 1e-10, 1e-11)]
    for a, b in zip(r, r[1:]):
        assert a / b > 5.0


def test_anchored_riccati_tracks_quadrature():
    for a1 in (-0.9, -0.5, -0.1):
        _, e2 = energy_bounds(a1)
        grid = e2 + (9 * e2 + 1) * np.geomspace(1e-3, 1.0, 8)
        for (e, w), e_q in zip(riccati_w(a1, grid, anchored=True), grid):
            assert w == pytest.approx(abelian_integrals(a1, e_q).w, abs=1e-7)


def test_riccati_grid_validation():
    _, e2 = energy_bounds(-0.5)
    with pytest.raises(ValueError):
        riccati_w(-0.5, [e2 - 0.01, 1.0])
    with pytest.raises(ValueError):
        riccati_w(-0.5, [1.0, 0.5])


def test_log_corrected_limit_converges():
    # |w - seed| must keep shrinking as the level approaches the separatrix
    for a1 in (-1.0 / 3.0, -0.5):
        _, e2 = energy_bounds(a1)
        gaps = [abs(abelian_integrals(a1, e2 + o).w - asymptotic_seed(a1, o)) for o in (1e-3, 1e-5, 1e-7, 1e-9)]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert asymptotic_seed(-1.0 / 3.0, 1e-300) == pytest.approx(-2.0 / 9.0, abs=2e-3)
    assert asymptotic_seed(-0.5, 1e-300) == pytest.approx(-0.3125, abs=2e-3)


def test_w_stays_above_line_at_critical_a1():
    a1 = -1.0 / 3.0
    _, e2 = energy_bounds(a1)
    for e in e2 + np.geomspace(1e-6, 5.0, 25):
        assert abelian_integrals(a1, e).w + 9 * e > 0


def test_large_energy_growth_exponent():
    ws = [abelian_integrals(-0.5, e).w for e in (1e3, 1e4, 1e5)]
    slopes = [math.log10(b / a) for a, b in zip(ws, ws[1:])]
    assert all(abs(s - 2.0 / 3.0) < 0.01 for s in slopes)


def test_zero_at_chosen_level():
    a1, e_star = -0.5, 0.3
    row = abelian_integrals(a1, e_star)
    a2 = -row.P
    assert melnikov_M(a1, a2, e_star) == pytest.approx(0.0, abs=1e-12)
    n, zeros, ps = melnikov_zero_count(a1, a2, (0.06, 2.0), 40)
    assert n == 1 and zeros[0] == pytest.approx(e_star, abs=1e-9) and ps[0] == pytest.approx(-a2)


def test_zero_count_at_critical_a1():
    rng = np.random.default_rng(3)
    for a2 in -1.0 / 3.0 - rng.uniform(0.0, 2.0, 5):
        assert melnikov_zero_count(-1.0 / 3.0, float(a2), n=48)[0] <= 2


def test_no_zero_when_sign_fixed():
    # P > 0 everywhere, so a2 >= 0 keeps M positive
    assert melnikov_zero_count(-0.5, 0.1, n=32)[0] == 0
