"""Compiled inner loops: overlap quadrature, table lookup, RHS and DOPRI5.

Everything here works on plain arrays so it can be jitted; the public
modules wrap these with validation and dataclasses.

Parameter vector layout used by the RHS kernels::

    p = [Omega, Gamma, alpha, Z_T, R_n, V_n, x0, l]

State layout: ``y = [X, Y, Z, V]``.
"""

import math

import numpy as np
from numba import njit

SQRT2 = math.sqrt(2.0)

STATUS_OK = 0
STATUS_STIFF = 1
STATUS_NAN = 2
STATUS_MAX_STEPS = 3


@njit(cache=True, inline="always")
def _sech_tanh(a):
    e = math.exp(-2.0 * abs(a))
    s = 2.0 * math.sqrt(e) / (1.0 + e)
    t = (1.0 - e) / (1.0 + e)
    if a < 0.0:
        t = -t
    return s, t


@njit(cache=True)
def overlap_block(xs, u, w, l, lam, out):
    """Fill ``out[d, pair, m]`` with d-th x_V derivatives at ``xs[m]``.

    ``out.shape[0]`` selects how many derivative orders (up to 4) are formed.
    """
    inv = 1.0 / lam
    n_orders = out.shape[0]
    kern = np.empty(4)
    acc = np.empty((4, 3))
    for m in range(xs.size):
        xv = xs[m]
        acc[:, :] = 0.0
        for k in range(u.size):
            uk = u[k]
            s, t = _sech_tanh((l * uk + xv) * inv)
            kern[0] = s
            kern[1] = -s * t * inv
            kern[2] = s * (t * t - s * s) * inv * inv
            kern[3] = s * t * (5.0 * s * s - t * t) * inv * inv * inv
            a00 = w[k]
            a01 = a00 * uk
            a11 = a01 * uk
            for d in range(n_orders):
                acc[d, 0] += a00 * kern[d]
                acc[d, 1] += a01 * kern[d]
                acc[d, 2] += a11 * kern[d]
        # H0 = 1, H1 = 2u; normalisations 1, 1/sqrt(2), 1/2.
        for d in range(n_orders):
            out[d, 0, m] = acc[d, 0]
            out[d, 1, m] = SQRT2 * acc[d, 1]
            out[d, 2, m] = 2.0 * acc[d, 2]


@njit(cache=True, inline="always")
def _direct3(xv, u, w, l, lam):
    inv = 1.0 / lam
    f00 = 0.0
    f01 = 0.0
    f11 = 0.0
    for k in range(u.size):
        s, _ = _sech_tanh((l * u[k] + xv) * inv)
        ws = w[k] * s
        f00 += ws
        f01 += ws * u[k]
        f11 += ws * u[k] * u[k]
    return f00, SQRT2 * f01, 2.0 * f11


@njit(cache=True, inline="always")
def _locate(x, grid):
    n = grid.size
    h = (grid[n - 1] - grid[0]) / (n - 1)
    k = int((x - grid[0]) / h)
    if k > n - 2:
        k = n - 2
    if k < 0:
        k = 0
    # Snap so that a query exactly on a node gives t == 0.
    if x >= grid[k + 1] and k < n - 2:
        k += 1
    elif x < grid[k] and k > 0:
        k -= 1
    return k, h, (x - grid[k]) / h


@njit(cache=True, inline="always")
def _quintic_basis(t, deriv):
    t2 = t * t
    t3 = t2 * t
    t4 = t3 * t
    t5 = t4 * t
    if deriv == 0:
        b0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5
        b1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5
        b2 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5)
        b3 = 0.5 * (t3 - 2.0 * t4 + t5)
        b4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5
        b5 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5
    elif deriv == 1:
        b0 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4
        b1 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4
        b2 = 0.5 * (2.0 * t - 9.0 * t2 + 12.0 * t3 - 5.0 * t4)
        b3 = 0.5 * (3.0 * t2 - 8.0 * t3 + 5.0 * t4)
        b4 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4
        b5 = 30.0 * t2 - 60.0 * t3 + 30.0 * t4
    else:
        b0 = -60.0 * t + 180.0 * t2 - 120.0 * t3
        b1 = -36.0 * t + 96.0 * t2 - 60.0 * t3
        b2 = 0.5 * (2.0 - 18.0 * t + 36.0 * t2 - 20.0 * t3)
        b3 = 0.5 * (6.0 * t - 24.0 * t2 + 20.0 * t3)
        b4 = -24.0 * t + 84.0 * t2 - 60.0 * t3
        b5 = 60.0 * t - 180.0 * t2 + 120.0 * t3
    return b0, b1, b2, b3, b4, b5


@njit(cache=True, inline="always")
def _table_pair(k, h, t, data, pair, deriv):
    b0, b1, b2, b3, b4, b5 = _quintic_basis(t, deriv)
    val = (data[0, pair, k] * b0 + h * data[1, pair, k] * b1
           + h * h * data[2, pair, k] * b2 + h * h * data[2, pair, k + 1] * b3
           + h * data[1, pair, k + 1] * b4 + data[0, pair, k + 1] * b5)
    if deriv == 1:
        val /= h
    elif deriv == 2:
        val /= h * h
    return val


@njit(cache=True)
def table_eval_many(xs, grid, data, deriv, out):
    for m in range(xs.size):
        k, h, t = _locate(xs[m], grid)
        for pair in range(3):
            out[pair, m] = _table_pair(k, h, t, data, pair, deriv)


@njit(cache=True, inline="always")
def _overlap3(xv, grid, data, u, w, l, lam):
    if grid.size >= 4 and xv >= grid[0] and xv <= grid[grid.size - 1]:
        k, h, t = _locate(xv, grid)
        return (_table_pair(k, h, t, data, 0, 0),
                _table_pair(k, h, t, data, 1, 0),
                _table_pair(k, h, t, data, 2, 0))
    return _direct3(xv, u, w, l, lam)


@njit(cache=True)
def rhs_kernel(y, p, lam, grid, data, u, w, dy):
    omega = p[0]
    gamma = p[1]
    alpha = p[2]
    z_t = p[3]
    r_n = p[4]
    v_n = p[5]
    x0 = p[6]
    l = p[7]
    x = y[0]
    yy = y[1]
    z = y[2]
    v = y[3]
    f00, f01, f11 = _overlap3(x0 - l * SQRT2 * v, grid, data, u, w, l, lam)
    vdot = v_n - (1.0 + 0.5 * r_n * ((1.0 + z) * f00 + 2.0 * x * f01
                                     + (1.0 - z) * f11)) * v
    dy[0] = omega * yy + 2.0 * vdot * z - gamma * x
    dy[1] = -omega * x - gamma * yy
    dy[2] = -2.0 * vdot * x - alpha * gamma * (z - z_t)
    dy[3] = vdot


# Dormand-Prince 5(4) tableau (Hairer, Norsett & Wanner, Table II.5.2).
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                           49.0 / 176.0, -5103.0 / 18656.0)
A71, A73, A74, A75, A76 = (35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0,
                           -2187.0 / 6784.0, 11.0 / 84.0)
E1, E3, E4, E5, E6, E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                          -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)
# Continuous extension coefficients.
D1, D3, D4, D5, D6, D7 = (-12715105075.0 / 11282082432.0, 87487479700.0 / 32700410799.0,
                          -10690763975.0 / 1880347072.0, 701980252875.0 / 199316789632.0,
                          -1453857185.0 / 822651844.0, 69997945.0 / 29380423.0)


@njit(cache=True, nogil=True)
def dopri5(y0, t_end, rtol, atol, sample_dt, p, lam, grid, data, u, w, max_steps):
    """Integrate from t=0 to ``t_end``; dense samples every ``sample_dt``.

    Returns ``(ts, ys, n_samples, status, n_steps, n_rejected,
    max_purity, t_reached)``.
    """
    n = 4
    n_out = int(math.floor(t_end / sample_dt + 1e-9)) + 1
    ts = np.empty(n_out)
    ys = np.empty((n_out, n))
    for i in range(n_out):
        ts[i] = i * sample_dt
    y = y0.copy()
    ys[0, :] = y
    n_done = 1

    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    k6 = np.empty(n)
    k7 = np.empty(n)
    tmp = np.empty(n)
    ynew = np.empty(n)
    r = np.empty((5, n))

    rhs_kernel(y, p, lam, grid, data, u, w, k1)
    purity = y[0] * y[0] + y[1] * y[1] + y[2] * y[2]
    max_purity = purity
    t = 0.0
    h = min(1e-3, t_end)
    n_steps = 0
    n_rej = 0
    last_nonfinite = False
    status = STATUS_OK
    hmin_rel = 1e-13

    while t < t_end:
        if n_steps + n_rej >= max_steps:
            status = STATUS_MAX_STEPS
            break
        if h < hmin_rel * max(1.0, abs(t)):
            status = STATUS_NAN if last_nonfinite else STATUS_STIFF
            break
        last_step = False
        if t + h >= t_end:
            h = t_end - t
            last_step = True

        for i in range(n):
            tmp[i] = y[i] + h * A21 * k1[i]
        rhs_kernel(tmp, p, lam, grid, data, u, w, k2)
        for i in range(n):
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
        rhs_kernel(tmp, p, lam, grid, data, u, w, k3)
        for i in range(n):
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        rhs_kernel(tmp, p, lam, grid, data, u, w, k4)
        for i in range(n):
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        rhs_kernel(tmp, p, lam, grid, data, u, w, k5)
        for i in range(n):
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i]
                                 + A64 * k4[i] + A65 * k5[i])
        rhs_kernel(tmp, p, lam, grid, data, u, w, k6)
        for i in range(n):
            ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i]
                                  + A75 * k5[i] + A76 * k6[i])
        rhs_kernel(ynew, p, lam, grid, data, u, w, k7)

        err = 0.0
        finite = True
        for i in range(n):
            e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i]
                     + E6 * k6[i] + E7 * k7[i])
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            err += (e / sc) ** 2
            if not (math.isfinite(ynew[i]) and math.isfinite(k7[i])):
                finite = False
        err = math.sqrt(err / n)
        if not finite or not math.isfinite(err):
            last_nonfinite = True
            n_rej += 1
            h *= 0.2
            continue
        last_nonfinite = False

        if err <= 1.0:
            t_new = t_end if last_step else t + h
            # Dense output for every sample time in (t, t_new].
            if n_done < n_out and ts[n_done] <= t_new + 1e-12 * max(1.0, t_new):
                for i in range(n):
                    dyi = ynew[i] - y[i]
                    r[0, i] = y[i]
                    r[1, i] = dyi
                    r[2, i] = h * k1[i] - dyi
                    r[3, i] = dyi - h * k7[i] - r[2, i]
                    r[4, i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i]
                                   + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
                while n_done < n_out and ts[n_done] <= t_new + 1e-12 * max(1.0, t_new):
                    th = (ts[n_done] - t) / h
                    th1 = 1.0 - th
                    for i in range(n):
                        ys[n_done, i] = r[0, i] + th * (r[1, i] + th1 * (
                            r[2, i] + th * (r[3, i] + th1 * r[4, i])))
                    n_done += 1
            t = t_new
            for i in range(n):
                y[i] = ynew[i]
                k1[i] = k7[i]
            n_steps += 1
            purity = y[0] * y[0] + y[1] * y[1] + y[2] * y[2]
            if purity > max_purity:
                max_purity = purity
            fac = 0.9 * err ** -0.2 if err > 0.0 else 10.0
            h *= min(10.0, max(0.2, fac))
        else:
            n_rej += 1
            h *= max(0.2, 0.9 * err ** -0.2)

    return ts, ys, n_done, status, n_steps, n_rej, max_purity, t
