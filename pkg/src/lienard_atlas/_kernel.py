"""Compiled Dormand-Prince 5(4) integrator for the polynomial Lienard field.

The field is fixed (x' = y, y' = -g(x) - f(x) y) and parameterized by
c = (g1, g3, f0, f2). ``mode`` selects extra components carried along:

    0  state only                                   n = 2
    1  state + tangent vector (variational eq.)     n = 4
    2  state + moment quadratures for delta = 0     n = 12
    3  state + integral of f(x) dt                  n = 3

Status codes returned by ``run``: 0 max time, 1 section hit, 2 escaped,
3 converged to a listed point, 4 step failure.
"""

import numpy as np
from numba import njit

MODE_DIM = (2, 4, 12, 3)

ST_MAXTIME = 0
ST_SECTION = 1
ST_ESCAPED = 2
ST_CONVERGED = 3
ST_STEPFAIL = 4

# Dormand-Prince tableau
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
B1, B3, B4, B5, B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1, E3, E4, E5, E6, E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                          -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)


@njit(cache=True)
def rhs(c, mode, sgn, s, out):
    x = s[0]
    y = s[1]
    x2 = x * x
    g = x * (c[0] + x2 * (c[1] + x2))
    f = c[2] + c[3] * x2
    out[0] = sgn * y
    out[1] = sgn * (-g - f * y)
    if mode == 1:
        u = s[2]
        v = s[3]
        dg = c[0] + x2 * (3.0 * c[1] + 5.0 * x2)
        out[2] = sgn * v
        out[3] = sgn * (-dg * u - 2.0 * c[3] * x * y * u - f * v)
    elif mode == 2:
        y2 = y * y
        out[2] = sgn * y2
        out[3] = sgn * x2 * y2
        out[4] = sgn * x2 * x2 * y2
        p = 1.0
        for k in range(6):
            out[5 + k] = sgn * p
            p *= x2
        out[11] = sgn * x * y2
    elif mode == 3:
        out[2] = sgn * f


@njit(cache=True)
def _stages(c, mode, sgn, s, h, k1, k2, k3, k4, k5, k6, k7, tmp, snew):
    """One DP step of size h from s (k1 = f(s) on entry). Fills snew and k7."""
    n = s.shape[0]
    for i in range(n):
        tmp[i] = s[i] + h * A21 * k1[i]
    rhs(c, mode, sgn, tmp, k2)
    for i in range(n):
        tmp[i] = s[i] + h * (A31 * k1[i] + A32 * k2[i])
    rhs(c, mode, sgn, tmp, k3)
    for i in range(n):
        tmp[i] = s[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
    rhs(c, mode, sgn, tmp, k4)
    for i in range(n):
        tmp[i] = s[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
    rhs(c, mode, sgn, tmp, k5)
    for i in range(n):
        tmp[i] = s[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
    rhs(c, mode, sgn, tmp, k6)
    for i in range(n):
        snew[i] = s[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
    rhs(c, mode, sgn, snew, k7)


@njit(cache=True)
def _secval(sec, j, s):
    if sec[j, 0] == 0.0:
        return s[0] - sec[j, 1]
    return s[1] - sec[j, 1]


@njit(cache=True)
def _other(sec, j, s):
    if sec[j, 0] == 0.0:
        return s[1]
    return s[0]


@njit(cache=True)
def _crossed(d, hp, hn):
    if d > 0.0:
        return hp < 0.0 and hn >= 0.0
    if d < 0.0:
        return hp > 0.0 and hn <= 0.0
    return (hp < 0.0 and hn >= 0.0) or (hp > 0.0 and hn <= 0.0)


@njit(cache=True)
def run(c, mode, sgn, s0, t_max, rtol, atol, h0, hmax, rmax, sec, conv, conv_r,
        store, max_steps, ev_tol):
    n = s0.shape[0]
    s = s0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    k6 = np.empty(n)
    k7 = np.empty(n)
    tmp = np.empty(n)
    snew = np.empty(n)
    sland = np.empty(n)
    kl = np.empty(n)

    cap = 256 if store else 1
    ts = np.empty(cap)
    ss = np.empty((cap, n))
    fs = np.empty((cap, n))

    rhs(c, mode, sgn, s, k1)
    t = 0.0
    nsamp = 0
    if store:
        ts[0] = 0.0
        ss[0, :] = s
        fs[0, :] = k1
        nsamp = 1

    nsec = sec.shape[0]
    hprev = np.empty(max(nsec, 1))
    for j in range(nsec):
        hprev[j] = _secval(sec, j, s)

    # already sitting on an equilibrium
    fnorm = abs(k1[0]) + abs(k1[1])
    if fnorm <= 1e-15 * (1.0 + abs(s[0]) + abs(s[1])):
        return ST_CONVERGED, -1, t, s, ts[:nsamp], ss[:nsamp], fs[:nsamp], 0

    h = min(h0, hmax, t_max)
    facold = 1e-4
    beta = 0.04
    expo1 = 0.2 - beta * 0.75
    nsteps = 0
    reject = False
    while True:
        if nsteps >= max_steps:
            return ST_STEPFAIL, -1, t, s, ts[:nsamp], ss[:nsamp], fs[:nsamp], nsteps
        if h <= 1e-14 * max(1.0, abs(t)):
            # step underflow far out is a finite-time blow-up, not a solver fault
            if max(abs(s[0]), abs(s[1]) ** (1.0 / 3.0)) > rmax ** 0.5:
                return ST_ESCAPED, -1, t, s, ts[:nsamp], ss[:nsamp], fs[:nsamp], nsteps
            return ST_STEPFAIL, -1, t, s, ts[:nsamp], ss[:nsamp], fs[:nsamp], nsteps
        last = False
        if t + h >= t_max:
            h = t_max - t
            last = True
        _stages(c, mode, sgn, s, h, k1, k2, k3, k4, k5, k6, k7, tmp, snew)
        nsteps += 1
        err = 0.0
        for i in range(n):
            ei = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            sc = atol + rtol * max(abs(s[i]), abs(snew[i]))
            r = abs(ei) / sc
            if r > err:
                err = r
        if not np.isfinite(err):
            h *= 0.1
            reject = True
            continue
        fac11 = err ** expo1
        if err <= 1.0:
            # PI controller (Gustafsson), as in Hairer-Wanner DOPRI5
            fac = fac11 / facold ** beta
            fac = max(0.1, min(5.0, fac / 0.9))
            hnew = h / fac
            if reject:
                hnew = min(hnew, h)
            facold = max(err, 1e-4)
            reject = False

            # section events on this step
            hit = -1
            tau_hit = 0.0
            for j in range(nsec):
                hn = _secval(sec, j, snew)
                if _crossed(sec[j, 2], hprev[j], hn):
                    # land exactly on the section with partial RK steps
                    lo = 0.0
                    hi = h
                    vlo = hprev[j]
                    vhi = hn
                    side = 0
                    tau = h * vlo / (vlo - vhi)
                    for _it in range(80):
                        _stages(c, mode, sgn, s, tau, k1, k2, k3, k4, k5, k6, kl, tmp, sland)
                        v = _secval(sec, j, sland)
                        if abs(v) <= ev_tol or hi - lo <= 1e-15 * max(1.0, abs(t)):
                            break
                        if (v < 0.0) == (vlo < 0.0):
                            lo = tau
                            vlo = v
                            if side == -1:
                                vhi *= 0.5
                            side = -1
                        else:
                            hi = tau
                            vhi = v
                            if side == 1:
                                vlo *= 0.5
                            side = 1
                        tau = lo + (hi - lo) * vlo / (vlo - vhi)
                        if not (lo < tau < hi):
                            tau = 0.5 * (lo + hi)
                    o = _other(sec, j, sland)
                    if o > sec[j, 3] and o < sec[j, 4]:
                        if hit < 0 or tau < tau_hit:
                            hit = j
                            tau_hit = tau
                hprev[j] = hn
            if hit >= 0:
                _stages(c, mode, sgn, s, tau_hit, k1, k2, k3, k4, k5, k6, kl, tmp, sland)
                if sec[hit, 0] == 0.0:
                    sland[0] = sec[hit, 1]
                else:
                    sland[1] = sec[hit, 1]
                rhs(c, mode, sgn, sland, kl)
                t = t + tau_hit
                if store:
                    if nsamp >= cap:
                        cap *= 2
                        ts2 = np.empty(cap)
                        ss2 = np.empty((cap, n))
                        fs2 = np.empty((cap, n))
                        ts2[:nsamp] = ts[:nsamp]
                        ss2[:nsamp] = ss[:nsamp]
                        fs2[:nsamp] = fs[:nsamp]
                        ts, ss, fs = ts2, ss2, fs2
                    ts[nsamp] = t
                    ss[nsamp, :] = sland
                    fs[nsamp, :] = kl
                    nsamp += 1
                return ST_SECTION, hit, t, sland, ts[:nsamp], ss[:nsamp], fs[:nsamp], nsteps

            t = t + h
            for i in range(n):
                s[i] = snew[i]
                k1[i] = k7[i]
            if store:
                if nsamp >= cap:
                    cap *= 2
                    ts2 = np.empty(cap)
                    ss2 = np.empty((cap, n))
                    fs2 = np.empty((cap, n))
                    ts2[:nsamp] = ts[:nsamp]
                    ss2[:nsamp] = ss[:nsamp]
                    fs2[:nsamp] = fs[:nsamp]
                    ts, ss, fs = ts2, ss2, fs2
                ts[nsamp] = t
                ss[nsamp, :] = s
                fs[nsamp, :] = k1
                nsamp += 1

            wr = max(abs(s[0]), abs(s[1]) ** (1.0 / 3.0))
            if wr > rmax:
                return ST_ESCAPED, -1, t, s, ts[:nsamp], ss[:nsamp], fs[:nsamp], nsteps
            for m in range(conv.shape[0]):
                dx = s[0] - conv[m, 0]
                dy = s[1] - conv[m, 1]
                if dx * dx + dy * dy < conv_r[m] * conv_r[m]:
                    return ST_CONVERGED, m, t, s, ts[:nsamp], ss[:nsamp], fs[:nsamp], nsteps
            if last or t >= t_max:
                return ST_MAXTIME, -1, t, s, ts[:nsamp], ss[:nsamp], fs[:nsamp], nsteps
            h = min(hnew, hmax)
        else:
            h = h / min(5.0, fac11 / 0.9)
            reject = True


@njit(cache=True)
def rk_step(c, mode, sgn, s, h):
    """A single DP step (used by tests and by dense re-evaluation)."""
    n = s.shape[0]
    k1 = np.empty(n)
    rhs(c, mode, sgn, s, k1)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    k6 = np.empty(n)
    k7 = np.empty(n)
    tmp = np.empty(n)
    snew = np.empty(n)
    _stages(c, mode, sgn, s, h, k1, k2, k3, k4, k5, k6, k7, tmp, snew)
    return snew
