# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled closed loop.

A fused, allocation-free copy of ``runner.run_python``. Every arithmetic
expression keeps the operand order of the Python modules so both backends
produce bit-identical traces (the build disables FMA contraction).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, atan2, exp, sqrt, floor, acos, pow, isfinite, NAN, INFINITY

cnp.import_array()

cdef double TWO_PI = 6.283185307179586
cdef double H_EPS = 1e-9
cdef double G_EPS = 1e-12
cdef double C_OFF = 1.05
cdef int NCOL = 27


cdef struct Lti:
    double a11, a12, a21, a22, b1, b2, c1, c2
    double x1, x2


cdef inline double lti_output(Lti* s) nogil:
    return s.c1 * s.x1 + s.c2 * s.x2


cdef inline double lti_advance(Lti* s, double u) nogil:
    cdef double x1 = s.a11 * s.x1 + s.a12 * s.x2 + s.b1 * u
    cdef double x2 = s.a21 * s.x1 + s.a22 * s.x2 + s.b2 * u
    s.x1 = x1
    s.x2 = x2
    return s.c1 * x1 + s.c2 * x2


cdef struct Ring:
    double* buf
    int n
    int head


cdef inline double ring_shift(Ring* r, double y) nogil:
    cdef double old
    if r.n == 0:
        return y
    old = r.buf[r.head]
    r.buf[r.head] = y
    r.head = (r.head + 1) % r.n
    return old


cdef inline double pi_step(double kp, double ki, double* integ, double e, double dt, bint freeze) nogil:
    if not freeze:
        integ[0] += e * dt
    return kp * e + ki * integ[0]


cdef inline double atan2c(double y, double x, double prev) nogil:
    cdef double raw = atan2(y, x)
    return raw + TWO_PI * floor((prev - raw) / TWO_PI + 0.5)


cdef inline double nearest_branch(double angle, double ref) nogil:
    return angle + TWO_PI * floor((ref - angle) / TWO_PI + 0.5)


cdef struct Field:
    double b0
    int n_obs
    double* obs      # rows of (kind, x, y, s1, s2, n)


cdef void field_eval(Field* fld, double px, double py, double* out) nogil:
    """out = (B, gx, gy, hxx, hxy, hyy)."""
    cdef double b = -fld.b0
    cdef double gx = 0.0, gy = 0.0, hxx = 0.0, hxy = 0.0, hyy = 0.0
    cdef double dx, dy, s, f, kk, ux, uy, ux_m2, uy_m2, ux_m1, uy_m1, p, px_, py_, pxx, pyy, sx, sy
    cdef double a1, a2, a11, a12, a22
    cdef int j, m
    cdef double* o
    for j in range(fld.n_obs):
        o = fld.obs + 6 * j
        if o[0] == 0.0:
            dx = px - o[1]
            dy = py - o[2]
            s = o[3]
            f = exp(-(dx * dx + dy * dy) / s)
            a1 = -2.0 * dx / s * f
            a2 = -2.0 * dy / s * f
            kk = 4.0 / (s * s)
            a11 = (kk * dx * dx - 2.0 / s) * f
            a22 = (kk * dy * dy - 2.0 / s) * f
            a12 = kk * dx * dy * f
        else:
            m = 2 * <int>o[5]
            sx = o[3]
            sy = o[4]
            ux = (px - o[1]) / sx
            uy = (py - o[2]) / sy
            ux_m2 = pow(ux, <double>(m - 2))
            uy_m2 = pow(uy, <double>(m - 2))
            ux_m1 = ux_m2 * ux
            uy_m1 = uy_m2 * uy
            p = ux_m1 * ux + uy_m1 * uy
            f = exp(-p)
            px_ = <double>m * ux_m1 / sx
            py_ = <double>m * uy_m1 / sy
            pxx = <double>(m * (m - 1)) * ux_m2 / (sx * sx)
            pyy = <double>(m * (m - 1)) * uy_m2 / (sy * sy)
            a1 = -px_ * f
            a2 = -py_ * f
            a11 = (px_ * px_ - pxx) * f
            a12 = px_ * py_ * f
            a22 = (py_ * py_ - pyy) * f
        b += f
        gx += a1
        gy += a2
        hxx += a11
        hxy += a12
        hyy += a22
    out[0] = b
    out[1] = gx
    out[2] = gy
    out[3] = hxx
    out[4] = hxy
    out[5] = hyy


cdef inline bint beta_rate_at(Field* fld, double x, double y, double v, double theta, double* rate) nogil:
    cdef double e[6]
    cdef double gx, gy, g2, c, s, phi
    field_eval(fld, x, y, e)
    gx = e[1]
    gy = e[2]
    if gx * gx + gy * gy <= G_EPS * G_EPS:
        return False
    g2 = gx * gx + gy * gy
    c = cos(theta)
    s = sin(theta)
    phi = gx * (e[4] * c + e[5] * s) - gy * (e[3] * c + e[4] * s)
    rate[0] = v * phi / g2
    return True


cdef bint integrate_beta(Field* fld, double* beta, double x, double y, double v,
                         double theta, double dt, double omega) nogil:
    cdef double h2 = 0.5 * dt
    cdef double c0 = cos(theta), s0 = sin(theta)
    cdef double k1, k2, k3, k4
    cdef bint ok1, ok2, ok3, ok4
    cdef double thm, cm, sm
    ok1 = beta_rate_at(fld, x, y, v, theta, &k1)
    thm = theta + h2 * omega
    cm = cos(thm)
    sm = sin(thm)
    ok2 = beta_rate_at(fld, x + h2 * v * c0, y + h2 * v * s0, v, thm, &k2)
    ok3 = beta_rate_at(fld, x + h2 * v * cm, y + h2 * v * sm, v, thm, &k3)
    ok4 = beta_rate_at(fld, x + dt * v * cm, y + dt * v * sm, v, theta + dt * omega, &k4)
    if not (ok1 and ok2 and ok3 and ok4):
        return False
    beta[0] = beta[0] + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return True


cdef inline void set_lti(Lti* s, double[::1] a, double[::1] b, double[::1] c):
    s.a11 = a[0]
    s.a12 = a[1]
    s.a21 = a[2]
    s.a22 = a[3]
    s.b1 = b[0]
    s.b2 = b[1]
    s.c1 = c[0]
    s.c2 = c[1]
    s.x1 = 0.0
    s.x2 = 0.0


cdef inline Ring make_ring(double[::1] storage):
    cdef Ring r
    r.n = storage.shape[0]
    r.head = 0
    r.buf = &storage[0] if r.n > 0 else NULL
    return r


def run_loop(dict p):
    """Run the loop described by ``loop_params.build_loop_params``.

    Returns ``(data, bad_signal, bad_step)``; ``bad_signal`` is -1 when every
    checked signal stayed finite, otherwise its index in ``runner._CHECKED``
    and ``data`` holds the rows before the failing step.
    """
    cdef double dt = p["dt"]
    cdef int n_steps = p["n_steps"]
    cdef double d = p["d"]
    cdef double u_max = p["u_max"]
    cdef double k = p["k"]
    cdef double skp = p["servo_kp"], ski = p["servo_ki"]
    cdef double akp = p["angle_kp"], aki = p["angle_ki"]
    cdef bint servo_sp = p["servo_sp"], angle_sp = p["angle_sp"], angle_freeze = p["angle_freeze"]
    cdef int traj_kind = p["traj_kind"]
    cdef double[::1] tp = np.ascontiguousarray(p["traj_p"], dtype=float)
    cdef double tp0 = tp[0], tp1 = tp[1], w = tp[2]
    cdef bint safety = p["safety"]
    cdef bint turn_left = p["turn_left"]
    cdef double alpha = p["alpha"]
    cdef double T = p["hpf_T"]
    cdef double[:, ::1] obs = np.ascontiguousarray(p["obstacles"], dtype=float).reshape(-1, 6)
    cdef int n_rows = n_steps + 1 if n_steps > 0 else 0
    out_arr = np.zeros((n_rows, NCOL))
    cdef double[:, ::1] out = out_arr

    cdef Field fld
    fld.b0 = p["b0"]
    fld.n_obs = obs.shape[0]
    fld.obs = &obs[0, 0] if fld.n_obs > 0 else NULL

    # Plants and their input delay lines.
    cdef Lti wr, wl, sr_hat, sl_hat, ang_servo
    set_lti(&wr, p["plant_a"], p["plant_b"], p["plant_c"])
    set_lti(&wl, p["plant_a"], p["plant_b"], p["plant_c"])
    set_lti(&sr_hat, p["nom_a"], p["nom_b"], p["nom_c"])
    set_lti(&sl_hat, p["nom_a"], p["nom_b"], p["nom_c"])
    set_lti(&ang_servo, p["nom_a"], p["nom_b"], p["nom_c"])
    cdef int nd = p["plant_delay"], nh = p["nom_delay"]
    cdef double[::1] m_dr = np.zeros(nd), m_dl = np.zeros(nd)
    cdef double[::1] m_sr = np.zeros(nh), m_sl = np.zeros(nh), m_ang = np.zeros(nh)
    cdef Ring ring_wr = make_ring(m_dr), ring_wl = make_ring(m_dl)
    cdef Ring ring_sr = make_ring(m_sr), ring_sl = make_ring(m_sl), ring_ang = make_ring(m_ang)

    # Controller state.
    cdef double integ_r = 0.0, integ_l = 0.0, integ_a = 0.0, integ_an = 0.0
    cdef double corr_r = 0.0, corr_l = 0.0, corr_a = 0.0, theta_hat = 0.0

    # Safety filter state.
    cdef bint active = False, just, overridden
    cdef double beta = NAN, hpf_out = 0.0, hpf_prev_in = NAN, theta_s_prev = NAN
    cdef double ha = (2.0 * T - dt) / (2.0 * T + dt)
    cdef double hb = 2.0 / (2.0 * T + dt)

    cdef double x = p["x0"], y = p["y0"], th = p["theta0"]
    cdef double y_r = 0.0, y_l = 0.0, u_r_prev = 0.0, u_l_prev = 0.0
    cdef double theta_a_prev = th, theta_r_prev = 0.0
    cdef bint have_theta_r = False

    cdef int n, bad = -1
    cdef double t, v, om, s1, c1, s2, c2, xr, yr, dxr, dyr, ddxr, ddyr, vr2, theta_r, vr
    cdef double ex, ey, hx, hy, cth, sth, v_a, hn2, theta_a, dhx, dhy, dtheta_a
    cdef double fe[6]
    cdef double b, gnorm, c, delta, lo, hi, center, tcand, edge, prev, theta_s, z, v_s
    cdef bint have_delta
    cdef double mu, e, omega_a, omega_hat, u_n, half, v_ra, v_la, u_r, u_l, yy
    cdef double h2, thm, th_end, kk
    cdef double* row
    cdef double chk[14]
    cdef int i

    with nogil:
        for n in range(n_rows):
            t = n * dt
            v = 0.5 * (y_r + y_l)
            om = (y_r - y_l) / d

            # Reference.
            if traj_kind == 0:
                s1 = sin(w * t)
                c1 = cos(w * t)
                xr = tp0 * s1
                yr = -tp0 * c1
                dxr = tp0 * w * c1
                dyr = tp0 * w * s1
                ddxr = -tp0 * (w * w) * s1
                ddyr = tp0 * (w * w) * c1
            else:
                s2 = sin(2.0 * w * t)
                c2 = cos(2.0 * w * t)
                s1 = sin(w * t)
                c1 = cos(w * t)
                xr = tp0 * s2
                yr = -tp1 * c1
                dxr = 2.0 * w * tp0 * c2
                dyr = w * tp1 * s1
                ddxr = -4.0 * w * w * tp0 * s2
                ddyr = w * w * tp1 * c1
            vr2 = dxr * dxr + dyr * dyr
            if have_theta_r:
                theta_r = atan2c(dyr, dxr, theta_r_prev)
            else:
                theta_r = atan2(dyr, dxr)
                have_theta_r = True
            theta_r_prev = theta_r
            vr = sqrt(vr2)

            # VFO.
            ex = xr - x
            ey = yr - y
            hx = k * ex + dxr
            hy = k * ey + dyr
            cth = cos(th)
            sth = sin(th)
            v_a = hx * cth + hy * sth
            hn2 = hx * hx + hy * hy
            if hn2 < H_EPS * H_EPS:
                theta_a = theta_a_prev
                dtheta_a = 0.0
            else:
                theta_a = atan2c(hy, hx, theta_a_prev)
                dhx = k * (dxr - v_a * cth) + ddxr
                dhy = k * (dyr - v_a * sth) + ddyr
                dtheta_a = (dhy * hx - hy * dhx) / hn2
            theta_a_prev = theta_a

            # Safety filter.
            if safety:
                field_eval(&fld, x, y, fe)
                b = fe[0]
                gnorm = sqrt(fe[1] * fe[1] + fe[2] * fe[2])
                if v > 0:
                    if gnorm < G_EPS:
                        c = INFINITY
                    else:
                        c = -alpha * b / (v * gnorm)
                else:
                    c = INFINITY
                just = False
                if c < 1.0 and not active:
                    active = True
                    just = True
                elif active and c >= C_OFF:
                    active = False
                if just:
                    beta = th
                have_delta = False
                delta = NAN
                if active and c < 1.0:
                    have_delta = True
                    delta = acos(min(max(c, 0.0), 1.0))
                overridden = False
                if have_delta:
                    lo = beta - delta
                    hi = beta + delta
                    center = 0.5 * (lo + hi)
                    tcand = nearest_branch(theta_a, center)
                    overridden = lo <= tcand and tcand <= hi
                if overridden:
                    edge = hi if turn_left else lo
                    prev = theta_a if theta_s_prev != theta_s_prev else theta_s_prev
                    theta_s = nearest_branch(edge, prev)
                    v_s = vr
                else:
                    theta_s = theta_a
                    v_s = v_a
                if hpf_prev_in != hpf_prev_in:
                    hpf_prev_in = theta_s
                hpf_out = ha * hpf_out + hb * (theta_s - hpf_prev_in)
                hpf_prev_in = theta_s
                theta_s_prev = theta_s
                z = hpf_out if overridden else dtheta_a
            else:
                theta_s = theta_a
                z = dtheta_a
                v_s = v_a
                overridden = False
                b = NAN
                c = NAN
                delta = NAN

            # Angle loop with the angle-layer predictor.
            mu = max(abs(u_r_prev), abs(u_l_prev)) / u_max
            e = theta_s - (th + corr_a)
            omega_a = pi_step(akp, aki, &integ_a, e, dt, angle_freeze and mu > 1.0) + z
            if angle_sp:
                omega_hat = lti_output(&ang_servo)
                u_n = pi_step(skp, ski, &integ_an, omega_a - lti_output(&ang_servo), dt, False)
                lti_advance(&ang_servo, u_n)
                theta_hat = theta_hat + dt * omega_hat
                corr_a = theta_hat - ring_shift(&ring_ang, theta_hat)

            # Mixing, scaling and servo loops.
            half = 0.5 * d * omega_a
            v_ra = v_s + half
            v_la = v_s - half
            if mu > 1.0:
                v_ra = v_ra / mu
                v_la = v_la / mu
            u_r = pi_step(skp, ski, &integ_r, v_ra - (y_r + corr_r), dt, mu > 1.0)
            if u_r > u_max:
                u_r = u_max
            elif u_r < -u_max:
                u_r = -u_max
            if servo_sp:
                yy = lti_advance(&sr_hat, u_r)
                corr_r = yy - ring_shift(&ring_sr, yy)
            u_l = pi_step(skp, ski, &integ_l, v_la - (y_l + corr_l), dt, mu > 1.0)
            if u_l > u_max:
                u_l = u_max
            elif u_l < -u_max:
                u_l = -u_max
            if servo_sp:
                yy = lti_advance(&sl_hat, u_l)
                corr_l = yy - ring_shift(&ring_sl, yy)

            row = &out[n, 0]
            row[0] = t
            row[1] = x
            row[2] = y
            row[3] = th
            row[4] = v
            row[5] = om
            row[6] = y_r
            row[7] = y_l
            row[8] = u_r
            row[9] = u_l
            row[10] = xr
            row[11] = yr
            row[12] = theta_r
            row[13] = vr
            row[14] = v_a
            row[15] = theta_a
            row[16] = dtheta_a
            row[17] = theta_s
            row[18] = z
            row[19] = v_s
            row[20] = omega_a
            row[21] = b
            row[22] = c
            row[23] = delta
            row[24] = beta if (safety and active) else NAN
            row[25] = 1.0 if (safety and active) else 0.0
            row[26] = 1.0 if overridden else 0.0

            if not isfinite(x + y + th + v + om + u_r + u_l + omega_a + theta_s + z + v_s
                            + v_a + theta_a + dtheta_a):
                chk[0] = x
                chk[1] = y
                chk[2] = th
                chk[3] = v
                chk[4] = om
                chk[5] = u_r
                chk[6] = u_l
                chk[7] = v_a
                chk[8] = theta_a
                chk[9] = dtheta_a
                chk[10] = theta_s
                chk[11] = z
                chk[12] = v_s
                chk[13] = omega_a
                for i in range(14):
                    if not isfinite(chk[i]):
                        bad = i
                        break
                if bad >= 0:
                    break
            if n == n_steps:
                break

            # Actuate, then integrate beta and the kinematics over the sample.
            y_r = lti_advance(&wr, ring_shift(&ring_wr, u_r))
            y_l = lti_advance(&wl, ring_shift(&ring_wl, u_l))
            if safety and active:
                # A degenerate gradient leaves beta where it was, as in Python.
                integrate_beta(&fld, &beta, x, y, v, th, dt, om)
            h2 = 0.5 * dt
            c1 = cos(th)
            s1 = sin(th)
            thm = th + h2 * om
            c2 = cos(thm)
            s2 = sin(thm)
            th_end = th + dt * om
            kk = dt / 6.0 * v
            x = x + kk * (c1 + 4.0 * c2 + cos(th_end))
            y = y + kk * (s1 + 4.0 * s2 + sin(th_end))
            th = th_end
            u_r_prev = u_r
            u_l_prev = u_l

    if bad >= 0:
        return out_arr[:n], bad, n
    return out_arr, -1, -1
