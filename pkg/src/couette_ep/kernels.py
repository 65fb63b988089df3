"""Hot loops: coefficient evaluation and the adaptive RK4 mode integrator.

The integrated vector has eight real components::

    y[0:4]  fundamental matrix, row-major (Phi00, Phi01, Phi10, Phi11)
    y[4:8]  state (Re c1, Im c1, Re c2, Im c2)

Both share the generator ``L = [[-h, -m], [p, h]]``; only the state feels
the forcing ``(0, mf) * F``.  Every function here compiles under numba when
:data:`couette_ep._accel.USE_NUMBA` is set and runs as plain Python
otherwise.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import jit

N_COMPONENTS = 8

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_MAX_STEPS = 2

TWO_PI = 2.0 * math.pi
ROUNDOFF_FLOOR = 1e-15


@jit
def mode_coefficients(t, k, xi, weight, coupling, screening):
    """Return ``(h, m, p, mf)`` at time t for mode (k, xi).

    ``h = dt_alpha / (4 alpha)``, ``m``/``p`` are the off-diagonal magnitudes
    of the generator and ``mf = -2 k^2 alpha^(-7/4)`` is the forcing weight.
    """
    u = xi - k * t
    a = k * k + u * u
    sa = math.sqrt(a)
    h = -0.5 * k * u / a
    m = weight * sa
    p = weight * sa + 2.0 * k * k / (weight * a * sa) + weight * coupling * sa / (a + screening)
    mf = -2.0 * k * k * math.sqrt(sa) / (a * a)
    return h, m, p, mf


@jit
def _deriv(h, m, p, mf, fr, fi, y, d):
    d[0] = -h * y[0] - m * y[2]
    d[1] = -h * y[1] - m * y[3]
    d[2] = p * y[0] + h * y[2]
    d[3] = p * y[1] + h * y[3]
    d[4] = -h * y[4] - m * y[6]
    d[5] = -h * y[5] - m * y[7]
    d[6] = p * y[4] + h * y[6] + mf * fr
    d[7] = p * y[5] + h * y[7] + mf * fi


@jit
def _rk4(dt, y, ca, cb, cc, fr, fi, out, s1, s2, s3, s4, tmp):
    # ca, cb, cc: coefficient tuples at start, midpoint and end of the step
    half = 0.5 * dt
    _deriv(ca[0], ca[1], ca[2], ca[3], fr, fi, y, s1)
    for i in range(8):
        tmp[i] = y[i] + half * s1[i]
    _deriv(cb[0], cb[1], cb[2], cb[3], fr, fi, tmp, s2)
    for i in range(8):
        tmp[i] = y[i] + half * s2[i]
    _deriv(cb[0], cb[1], cb[2], cb[3], fr, fi, tmp, s3)
    for i in range(8):
        tmp[i] = y[i] + dt * s3[i]
    _deriv(cc[0], cc[1], cc[2], cc[3], fr, fi, tmp, s4)
    sixth = dt / 6.0
    for i in range(8):
        out[i] = y[i] + sixth * (s1[i] + 2.0 * s2[i] + 2.0 * s3[i] + s4[i])


@jit
def _energy(h, m, p, y):
    lam = math.sqrt(p / m)
    gam = math.sqrt(m * p)
    a1 = y[4] * y[4] + y[5] * y[5]
    a2 = y[6] * y[6] + y[7] * y[7]
    cross = y[4] * y[6] + y[5] * y[7]
    return lam * a1 + 2.0 * (h / gam) * cross + a2 / lam


@jit
def integrate_kernel(
    k,
    xi,
    weight,
    coupling,
    screening,
    y0,
    fr,
    fi,
    t_out,
    tol,
    step_cap,
    dt_min,
    gronwall_prefactor,
    max_steps,
    out_y,
    out_tvh,
    out_tvl,
):
    """Adaptive classical RK4 with step doubling and local extrapolation.

    A step of size dt is accepted when the doubling estimate of the local
    error (scaled by ``max(1, |y|)``) is at most ``tol * theta / (2 pi)``,
    where ``theta = dt (1 + ||L||_inf)`` is the phase swept by the step.  The
    step is also capped at ``step_cap / (1 + ||L||_inf)``.  The integrator
    stops exactly on every requested output time and on the critical time
    ``xi / k`` so that the total-variation sums see the peak of lambda.

    Returns ``(status, n_steps, t_reached, max_h_over_gamma, gronwall_excess)``.
    ``gronwall_excess`` is the largest value over accepted steps of
    ``|log(E(t)/E(0))| - prefactor * (TV_h/gamma + TV_log lambda)``; it is
    only meaningful for unforced runs with a nonzero initial state.
    """
    n_out = t_out.shape[0]
    y = np.empty(8)
    y1 = np.empty(8)
    yh = np.empty(8)
    y2 = np.empty(8)
    s1 = np.empty(8)
    s2 = np.empty(8)
    s3 = np.empty(8)
    s4 = np.empty(8)
    tmp = np.empty(8)
    for i in range(8):
        y[i] = y0[i]
        out_y[0, i] = y0[i]

    t = t_out[0]
    c0 = mode_coefficients(t, k, xi, weight, coupling, screening)
    gam0 = math.sqrt(c0[1] * c0[2])
    v_prev = c0[0] / gam0
    l_prev = 0.5 * math.log(c0[2] / c0[1])
    max_hg = abs(v_prev)
    tvh = 0.0
    tvl = 0.0
    out_tvh[0] = 0.0
    out_tvl[0] = 0.0
    e0 = _energy(c0[0], c0[1], c0[2], y)
    track = e0 > 0.0 and fr == 0.0 and fi == 0.0
    excess = -np.inf

    t_crit = xi / k
    crit_pending = t_crit > t and t_crit < t_out[n_out - 1]

    nrm0 = abs(c0[0]) + max(c0[1], c0[2])
    dt_prop = step_cap / (1.0 + nrm0)
    n_steps = 0
    i_out = 1
    while i_out < n_out:
        target = t_out[i_out]
        hit_crit = False
        if crit_pending and t_crit <= target:
            target = t_crit
            hit_crit = True
        gap = target - t
        if gap <= 0.0:
            # duplicate stop
            if hit_crit:
                crit_pending = False
            else:
                for i in range(8):
                    out_y[i_out, i] = y[i]
                out_tvh[i_out] = tvh
                out_tvl[i_out] = tvl
                i_out += 1
            continue

        c0 = mode_coefficients(t, k, xi, weight, coupling, screening)
        nrm = abs(c0[0]) + max(c0[1], c0[2])
        cap = step_cap / (1.0 + nrm)
        if cap < dt_min and gap > dt_min:
            # the stability cap alone forces steps below dt_min
            return STATUS_UNDERFLOW, n_steps, t, max_hg, excess
        dt = min(dt_prop, cap)
        last = False
        if dt >= gap:
            dt = gap
            last = True

        c1 = mode_coefficients(t + 0.25 * dt, k, xi, weight, coupling, screening)
        c2 = mode_coefficients(t + 0.5 * dt, k, xi, weight, coupling, screening)
        c3 = mode_coefficients(t + 0.75 * dt, k, xi, weight, coupling, screening)
        c4 = mode_coefficients(t + dt, k, xi, weight, coupling, screening)
        _rk4(dt, y, c0, c2, c4, fr, fi, y1, s1, s2, s3, s4, tmp)
        _rk4(0.5 * dt, y, c0, c1, c2, fr, fi, yh, s1, s2, s3, s4, tmp)
        _rk4(0.5 * dt, yh, c2, c3, c4, fr, fi, y2, s1, s2, s3, s4, tmp)

        err = 0.0
        scale = 1.0
        for i in range(8):
            d = abs(y2[i] - y1[i])
            if d > err:
                err = d
            a = abs(y2[i])
            if a > scale:
                scale = a
        err = err / (15.0 * scale)
        # roundoff floor so very short forced stops are not rejected forever
        limit = max(tol * dt * (1.0 + nrm) / TWO_PI, ROUNDOFF_FLOOR)
        if err > 0.0:
            fac = 0.9 * (limit / err) ** 0.25
        else:
            fac = 4.0
        fac = min(4.0, max(0.1, fac))

        if err <= limit or (last and dt <= dt_min):
            for i in range(8):
                y[i] = y2[i] + (y2[i] - y1[i]) / 15.0
            t = target if last else t + dt
            n_steps += 1

            gam = math.sqrt(c4[1] * c4[2])
            v = c4[0] / gam
            lv = 0.5 * math.log(c4[2] / c4[1])
            tvh += abs(v - v_prev)
            tvl += abs(lv - l_prev)
            v_prev = v
            l_prev = lv
            if abs(v) > max_hg:
                max_hg = abs(v)
            if track:
                e = _energy(c4[0], c4[1], c4[2], y)
                ex = abs(math.log(e / e0)) - gronwall_prefactor * (tvh + tvl)
                if ex > excess:
                    excess = ex

            if last:
                if fac < 1.0:
                    dt_prop = min(dt_prop, dt * fac)
                if hit_crit:
                    crit_pending = False
                else:
                    for i in range(8):
                        out_y[i_out, i] = y[i]
                    out_tvh[i_out] = tvh
                    out_tvl[i_out] = tvl
                    i_out += 1
            else:
                dt_prop = dt * min(fac, 4.0)
            if n_steps >= max_steps:
                return STATUS_MAX_STEPS, n_steps, t, max_hg, excess
        else:
            dt_prop = dt * fac
            if dt_prop < dt_min:
                return STATUS_UNDERFLOW, n_steps, t, max_hg, excess
    return STATUS_OK, n_steps, t, max_hg, excess


@jit
def fixed_step_rk4(k, xi, weight, coupling, screening, y0, fr, fi, t_end, n_steps):
    """Plain fixed-step RK4 on the same eight-component system."""
    y = np.empty(8)
    out = np.empty(8)
    s1 = np.empty(8)
    s2 = np.empty(8)
    s3 = np.empty(8)
    s4 = np.empty(8)
    tmp = np.empty(8)
    for i in range(8):
        y[i] = y0[i]
    dt = t_end / n_steps
    for j in range(n_steps):
        t = j * dt
        ca = mode_coefficients(t, k, xi, weight, coupling, screening)
        cb = mode_coefficients(t + 0.5 * dt, k, xi, weight, coupling, screening)
        cc = mode_coefficients(t + dt, k, xi, weight, coupling, screening)
        _rk4(dt, y, ca, cb, cc, fr, fi, out, s1, s2, s3, s4, tmp)
        for i in range(8):
            y[i] = out[i]
    return y


def run_integrator(k, xi, constants, y0, forcing, t_out, tol, step_cap, dt_min,
                   gronwall_prefactor=0.0, max_steps=200_000_000):
    """Allocate outputs and call :func:`integrate_kernel`."""
    t_out = np.ascontiguousarray(t_out, dtype=np.float64)
    n = t_out.shape[0]
    out_y = np.zeros((n, N_COMPONENTS))
    out_tvh = np.zeros(n)
    out_tvl = np.zeros(n)
    weight, coupling, screening = constants
    result = integrate_kernel(
        float(k), float(xi), float(weight), float(coupling), float(screening),
        np.ascontiguousarray(y0, dtype=np.float64),
        float(forcing.real), float(forcing.imag),
        t_out, float(tol), float(step_cap), float(dt_min),
        float(gronwall_prefactor), int(max_steps),
        out_y, out_tvh, out_tvl,
    )
    return result, out_y, out_tvh, out_tvl


# series quantities, in the order of ``out`` in :func:`series_sums`
SERIES_FIELDS = ("pux2", "puy2", "qu2", "eta2", "phi2", "sym", "emin", "emax", "r2")


@jit
def series_sums(t, kvals, xi, wq, phi, forced, a_in, f_hat, e0,
                weight, coupling, screening, phi_coef, r_order, out):
    """Fused per-time quadratures over a (n_k, n_xi) grid.

    States are ``Phi a_in + w F``; see :data:`SERIES_FIELDS` for what lands
    in ``out``.  ``emin``/``emax`` are extremes of E(t)/E(0) for the
    homogeneous part over modes with E(0) > 0 (both 0 if there are none);
    ``r2`` uses the weight ``<xi>^(-2 r_order)``.
    """
    for i in range(out.shape[0]):
        out[i] = 0.0
    emin = np.inf
    emax = -np.inf
    for i in range(kvals.shape[0]):
        k = kvals[i]
        for j in range(xi.shape[0]):
            w = wq[j]
            u = xi[j] - k * t
            a = k * k + u * u
            p00 = phi[i, j, 0, 0]
            p01 = phi[i, j, 0, 1]
            p10 = phi[i, j, 1, 0]
            p11 = phi[i, j, 1, 1]
            x0 = a_in[i, j, 0]
            x1 = a_in[i, j, 1]
            f = f_hat[i, j]
            w0 = forced[i, j, 0]
            w1 = forced[i, j, 1]
            h0 = p00 * x0 + p01 * x1
            h1 = p10 * x0 + p11 * x1
            s0 = h0 + w0 * f
            s1 = h1 + w1 * f
            abs_s0 = s0.real * s0.real + s0.imag * s0.imag
            abs_s1 = s1.real * s1.real + s1.imag * s1.imag
            q = a**0.25
            pi = s0 * q / weight
            psi = s1 * q * q * q
            g = f - pi
            g2 = g.real * g.real + g.imag * g.imag
            pi2 = pi.real * pi.real + pi.imag * pi.imag
            a2 = a * a
            out[0] += w * u * u / a2 * g2
            out[1] += w * k * k / a2 * g2
            out[2] += w * (psi.real * psi.real + psi.imag * psi.imag) / a
            out[3] += w * pi2
            out[4] += w * phi_coef * pi2 / ((a + screening) * (a + screening))
            out[5] += w * math.sqrt(a) * (abs_s0 + abs_s1)
            if e0[i, j] > 1e-300:
                hh, mm, pp, _ = mode_coefficients(t, k, xi[j], weight, coupling, screening)
                lam = math.sqrt(pp / mm)
                gam = math.sqrt(mm * pp)
                cross = h0.real * h1.real + h0.imag * h1.imag
                e = (lam * (h0.real * h0.real + h0.imag * h0.imag) + 2.0 * (hh / gam) * cross
                     + (h1.real * h1.real + h1.imag * h1.imag) / lam)
                ratio = e / e0[i, j]
                if ratio < emin:
                    emin = ratio
                if ratio > emax:
                    emax = ratio
            r0 = x0 + (p11 * w0 - p01 * w1) * f
            r1 = x1 + (-p10 * w0 + p00 * w1) * f
            out[8] += w * (1.0 + xi[j] * xi[j]) ** (-r_order) * (
                r0.real * r0.real + r0.imag * r0.imag + r1.real * r1.real + r1.imag * r1.imag)
    if emin == np.inf:
        emin = 0.0
        emax = 0.0
    out[6] = emin
    out[7] = emax


@jit
def gather_row(virtual, fundamental, particular, targets, start_inv, p_start, phi_out, forced_out):
    """Time-shifted propagators for one k row.

    For each xi, pick the anchor sample nearest ``targets[j]`` and form
    ``Phi = Psi(target) start_inv[j]`` and ``w = p(target) - Phi p_start[j]``.
    """
    n_v = virtual.shape[0]
    for j in range(targets.shape[0]):
        x = targets[j]
        if n_v == 1:
            s = 0
        else:
            idx = np.searchsorted(virtual, x)
            if idx < 1:
                idx = 1
            elif idx > n_v - 1:
                idx = n_v - 1
            s = idx - 1 if abs(x - virtual[idx - 1]) <= abs(virtual[idx] - x) else idx
        f00 = fundamental[s, 0, 0]
        f01 = fundamental[s, 0, 1]
        f10 = fundamental[s, 1, 0]
        f11 = fundamental[s, 1, 1]
        b00 = start_inv[j, 0, 0]
        b01 = start_inv[j, 0, 1]
        b10 = start_inv[j, 1, 0]
        b11 = start_inv[j, 1, 1]
        q00 = f00 * b00 + f01 * b10
        q01 = f00 * b01 + f01 * b11
        q10 = f10 * b00 + f11 * b10
        q11 = f10 * b01 + f11 * b11
        phi_out[j, 0, 0] = q00
        phi_out[j, 0, 1] = q01
        phi_out[j, 1, 0] = q10
        phi_out[j, 1, 1] = q11
        forced_out[j, 0] = particular[s, 0] - (q00 * p_start[j, 0] + q01 * p_start[j, 1])
        forced_out[j, 1] = particular[s, 1] - (q10 * p_start[j, 0] + q11 * p_start[j, 1])
