import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from lienard_atlas.flow import (Direction, IntegratorOptions, NoReturn, Stop, energy_audit, horizontal_line,
                                integrate, positive_y_axis, return_map, shoot, vertical_line)
from lienard_atlas.model import State, SystemParams, eval_field


def scipy_flow(p, s0, T, events=None):
    def rhs(t, s):
        v = eval_field(p, State(*s))
        return [v.x, v.y]
    return solve_ivp(rhs, (0.0, T), list(s0), method="DOP853", rtol=1e-12, atol=1e-14,
                     events=events, dense_output=True)


def test_endpoint_matches_independent_integrator():
    p = SystemParams.scaled(-0.5, -0.95, 1.0)
    s0 = State(0.2, 0.5)
    traj = integrate(p, s0, IntegratorOptions(max_time=7.5), capture=False)
    assert traj.termination.reason is Stop.MAX_TIME
    ref = scipy_flow(p, s0, 7.5)
    assert traj.t[-1] == pytest.approx(7.5)
    assert np.allclose(traj.states[-1, :2], ref.y[:, -1], atol=1e-8)


def test_dense_output_between_steps():
    p = SystemParams.scaled(0.5, -0.7, 1.0)
    s0 = State(0.0, 0.8)
    traj = integrate(p, s0, IntegratorOptions(max_time=4.0), capture=False)
    ref = scipy_flow(p, s0, 4.0)
    tq = np.linspace(0.1, 3.9, 37)
    assert np.allclose(traj.dense(tq), ref.sol(tq).T, atol=1e-7)


def test_section_hit_located():
    p = SystemParams.scaled(0.5, -0.7, 1.0)
    s0 = State(0.0, 0.8)
    sec = horizontal_line(0.0, Direction.DECREASING, lo=0.0)
    term = shoot(p, s0, [sec])
    assert term.reason is Stop.SECTION_HIT
    assert abs(term.state.y) < 1e-12 and term.state.x > 0

    def ev(t, s):
        return s[1]
    ev.direction = -1
    ref = scipy_flow(p, s0, 50.0, events=ev)
    t_ref = [t for t, s in zip(ref.t_events[0], ref.y_events[0]) if s[0] > 0][0]
    assert term.time == pytest.approx(t_ref, abs=1e-8)


def test_return_map_derivative_against_differences():
    p = SystemParams.scaled(-0.5, -0.85, 1.0)
    sec = positive_y_axis()
    y0, h = 0.6, 1e-5
    r = return_map(p, sec, y0, half=True)
    fd = (return_map(p, sec, y0 + h, half=True, derivative=False).value
          - return_map(p, sec, y0 - h, half=True, derivative=False).value) / (2 * h)
    assert r.derivative == pytest.approx(fd, rel=1e-6)


def test_half_map_of_symmetric_orbit_is_full_map_squared():
    p = SystemParams.scaled(-0.5, -0.85, 1.0)
    sec = positive_y_axis()
    h1 = return_map(p, sec, 0.6, half=True, derivative=False).value
    h2 = return_map(p, sec, h1, half=True, derivative=False).value
    full = return_map(p, sec, 0.6, derivative=False).value
    assert full == pytest.approx(h2, rel=1e-9)


def test_energy_conserved_without_damping():
    p = SystemParams.scaled(-0.5, 0.0, 0.0)
    traj = integrate(p, State(1.3, 0.0), IntegratorOptions(max_time=20.0), capture=False)
    from lienard_atlas.model import energy
    es = [energy(p, State(x, y)) for x, y in traj.states[:, :2]]
    assert max(es) - min(es) < 1e-9


def test_energy_audit_with_damping():
    p = SystemParams.scaled(-0.3, -0.6, 1.2)
    traj = integrate(p, State(0.5, 1.0), IntegratorOptions(max_time=10.0), capture=False)
    assert energy_audit(p, traj) < 1e-8


def test_capture_at_sink():
    p = SystemParams.scaled(-0.5, -0.1, 1.0)
    traj = integrate(p, State(1.05, 0.0), IntegratorOptions(max_time=1e4))
    assert traj.termination.reason is Stop.CONVERGED
    assert traj.termination.equilibrium == "E_r2"


def test_backward_blow_up_reports_escape():
    # the equator repels for delta < 2 sqrt(3), so backward orbits run off to infinity
    p = SystemParams.scaled(-0.5, -0.1, 1.0)
    traj = integrate(p, State(3.0, 0.0), IntegratorOptions(max_time=1e3, max_radius=1e5), reverse=True)
    assert traj.termination.reason is Stop.ESCAPED


def test_guard_crossing_raises_no_return():
    p = SystemParams.scaled(-0.5, -0.85, 1.0)
    with pytest.raises(NoReturn) as exc:
        return_map(p, positive_y_axis(), 0.6, guards=[vertical_line(0.3)])
    assert exc.value.termination.reason is Stop.SECTION_HIT


def test_invalid_options_rejected():
    with pytest.raises(ValueError):
        IntegratorOptions(rel_tol=0.0)
    with pytest.raises(ValueError):
        integrate(SystemParams.scaled(0.5, 0.0, 1.0), State(math.nan, 0.0))
