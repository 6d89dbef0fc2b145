"""Compiled kernels: model right-hand sides and an adaptive DOP853 propagator.

Everything here is plain ``numba.njit`` code operating on flat float arrays so
that grid scans can run thousands of independent integrations without Python
overhead.  The public, typed surface lives in :mod:`nhimld.models` and
:mod:`nhimld.integrator`.

Augmented state layout (length ``ny``)::

    [ q (dof) | p (dof) | Phi row-major (n*n, optional) | LD accumulator (optional) ]

with ``n = 2 * dof``.  The LD accumulator is not an ODE component: after each
accepted step the integrand ``sum_i |x_i'|^p`` is integrated on the dense
output, split at the zeros of every velocity component, where the integrand
has an ``|s|^p`` cusp that plain stages would resolve poorly.
"""
import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dc

KIND_2DOF = 2
KIND_3DOF = 3

# termination codes
ST_TIME = 0
ST_ESCAPE = 1
ST_BOX = 2
ST_EVENT = 3
ST_UNDERFLOW = -1
ST_MAXSTEPS = -2

_NS = _dc.N_STAGES
_A = np.ascontiguousarray(_dc.A)
_B = np.ascontiguousarray(_dc.B)
_C = np.ascontiguousarray(_dc.C)
_E3 = np.ascontiguousarray(_dc.E3)
_E5 = np.ascontiguousarray(_dc.E5)
_D = np.ascontiguousarray(_dc.D)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_ERR_EXP = -1.0 / 8.0

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W
_LD_SAMPLES = 4


@njit(cache=True, nogil=True)
def potential(kind, par, q):
    if kind == KIND_2DOF:
        x, y = q[0], q[1]
        return 0.5 * par[0] * x * x + 0.5 * par[1] * y * y + par[2] * x * y * y
    x, y, z = q[0], q[1], q[2]
    return (0.5 * par[0] * x * x + 0.5 * par[1] * y * y + 0.5 * par[2] * z * z
            - par[3] * x * x * y - par[4] * x * x * z)


@njit(cache=True, nogil=True)
def gradient(kind, par, q, out):
    if kind == KIND_2DOF:
        x, y = q[0], q[1]
        out[0] = par[0] * x + par[2] * y * y
        out[1] = par[1] * y + 2.0 * par[2] * x * y
    else:
        x, y, z = q[0], q[1], q[2]
        out[0] = par[0] * x - 2.0 * par[3] * x * y - 2.0 * par[4] * x * z
        out[1] = par[1] * y - par[3] * x * x
        out[2] = par[2] * z - par[4] * x * x


@njit(cache=True, nogil=True)
def hessian(kind, par, q, out):
    if kind == KIND_2DOF:
        x, y = q[0], q[1]
        out[0, 0] = par[0]
        out[0, 1] = 2.0 * par[2] * y
        out[1, 0] = out[0, 1]
        out[1, 1] = par[1] + 2.0 * par[2] * x
    else:
        x, y, z = q[0], q[1], q[2]
        out[0, 0] = par[0] - 2.0 * par[3] * y - 2.0 * par[4] * z
        out[0, 1] = -2.0 * par[3] * x
        out[0, 2] = -2.0 * par[4] * x
        out[1, 0] = out[0, 1]
        out[1, 1] = par[1]
        out[1, 2] = 0.0
        out[2, 0] = out[0, 2]
        out[2, 1] = 0.0
        out[2, 2] = par[2]


@njit(cache=True, nogil=True)
def energy(kind, par, dof, y):
    ke = 0.0
    for i in range(dof):
        ke += 0.5 * y[dof + i] * y[dof + i]
    return ke + potential(kind, par, y[:dof])


@njit(cache=True, nogil=True)
def rhs(kind, par, dof, y, out, with_stm, ld_p, ld_on):
    n = 2 * dof
    g = np.empty(dof)
    gradient(kind, par, y[:dof], g)
    for i in range(dof):
        out[i] = y[dof + i]
        out[dof + i] = -g[i]
    if with_stm:
        hs = np.empty((dof, dof))
        hessian(kind, par, y[:dof], hs)
        base = n
        # Phi' = [[0, I], [-H, 0]] Phi
        for r in range(dof):
            for c in range(n):
                out[base + r * n + c] = y[base + (dof + r) * n + c]
        for r in range(dof):
            for c in range(n):
                acc = 0.0
                for k in range(dof):
                    acc += hs[r, k] * y[base + k * n + c]
                out[base + (dof + r) * n + c] = -acc
    if ld_on:
        # the accumulator is filled by step quadrature, see _ld_step
        out[y.shape[0] - 1] = 0.0


@njit(cache=True, nogil=True)
def _rk_step(kind, par, dof, y, f0, h, K, with_stm, ld_p, ld_on, y_new):
    ny = y.shape[0]
    tmp = np.empty(ny)
    K[0, :] = f0
    for s in range(1, _NS):
        for j in range(ny):
            acc = 0.0
            for m in range(s):
                acc += _A[s, m] * K[m, j]
            tmp[j] = y[j] + h * acc
        rhs(kind, par, dof, tmp, K[s], with_stm, ld_p, ld_on)
    for j in range(ny):
        acc = 0.0
        for m in range(_NS):
            acc += _B[m] * K[m, j]
        y_new[j] = y[j] + h * acc
    rhs(kind, par, dof, y_new, K[_NS], with_stm, ld_p, ld_on)


@njit(cache=True, nogil=True)
def _error_norm(K, h, y, y_new, rtol, atol, n_err):
    e5 = 0.0
    e3 = 0.0
    for j in range(n_err):
        sc = atol + rtol * max(abs(y[j]), abs(y_new[j]))
        a5 = 0.0
        a3 = 0.0
        for m in range(_NS + 1):
            a5 += _E5[m] * K[m, j]
            a3 += _E3[m] * K[m, j]
        a5 /= sc
        a3 /= sc
        e5 += a5 * a5
        e3 += a3 * a3
    if e5 == 0.0 and e3 == 0.0:
        return 0.0
    return abs(h) * e5 / np.sqrt((e5 + 0.01 * e3) * n_err)


@njit(cache=True, nogil=True)
def _dense_coeffs(kind, par, dof, y_old, y_new, h, K, with_stm, ld_p, ld_on, F):
    ny = y_old.shape[0]
    tmp = np.empty(ny)
    for s in range(_NS + 1, 16):
        for j in range(ny):
            acc = 0.0
            for m in range(s):
                acc += _A[s, m] * K[m, j]
            tmp[j] = y_old[j] + h * acc
        rhs(kind, par, dof, tmp, K[s], with_stm, ld_p, ld_on)
    for j in range(ny):
        dy = y_new[j] - y_old[j]
        F[0, j] = dy
        F[1, j] = h * K[0, j] - dy
        F[2, j] = 2.0 * dy - h * (K[_NS, j] + K[0, j])
        for r in range(4):
            acc = 0.0
            for m in range(16):
                acc += _D[r, m] * K[m, j]
            F[3 + r, j] = h * acc


@njit(cache=True, nogil=True)
def _dense_eval(F, y_old, x, out):
    ny = y_old.shape[0]
    for j in range(ny):
        v = 0.0
        for i in range(7):
            v += F[6 - i, j]
            if i % 2 == 0:
                v *= x
            else:
                v *= 1.0 - x
        out[j] = v + y_old[j]


@njit(cache=True, nogil=True)
def _velocity(kind, par, dof, F, y_old, x, tmp, g, v):
    _dense_eval(F, y_old, x, tmp)
    gradient(kind, par, tmp[:dof], g)
    for i in range(dof):
        v[i] = tmp[dof + i]
        v[dof + i] = -g[i]


@njit(cache=True, nogil=True)
def _ld_integrand(v, n, ld_p):
    acc = 0.0
    if ld_p == 0.5:
        for i in range(n):
            acc += np.sqrt(abs(v[i]))
    elif ld_p == 1.0:
        for i in range(n):
            acc += abs(v[i])
    else:
        for i in range(n):
            acc += abs(v[i]) ** ld_p
    return acc


@njit(cache=True, nogil=True)
def _ld_piece(kind, par, dof, F, y_old, a, b, toward, ld_p, tmp, g, v):
    """Gauss-Legendre on ``[a, b]`` with nodes graded as ``u^(1/p)`` into ``a`` (``toward=1``) or ``b``."""
    n = 2 * dof
    L = b - a
    total = 0.0
    q = 1.0 / ld_p
    for j in range(_GL_X.shape[0]):
        u = _GL_X[j]
        off = L * u ** q
        x = a + off if toward == 1 else b - off
        _velocity(kind, par, dof, F, y_old, x, tmp, g, v)
        total += _GL_W[j] * L * q * u ** (q - 1.0) * _ld_integrand(v, n, ld_p)
    return total


@njit(cache=True, nogil=True)
def _ld_step(kind, par, dof, y_old, F, frac, ld_p):
    """``int_0^frac sum_i |v_i|^p dx`` over the dense output of one step (unit step length).

    Zeros of each velocity component are bracketed on a sample lattice and
    refined by Illinois iterations.  Each piece between breakpoints is halved
    and the Gauss-Legendre nodes are graded as ``s = a + L u^(1/p)`` into its
    outer ends, which makes ``|v|^p ds`` smooth at a simple zero.  The step
    ends are graded too, since a zero may sit just beyond them.
    """
    n = 2 * dof
    ny = y_old.shape[0]
    tmp = np.empty(ny)
    g = np.empty(dof)
    xs = np.empty(_LD_SAMPLES + 1)
    vs = np.empty((_LD_SAMPLES + 1, n))
    for k in range(_LD_SAMPLES + 1):
        xs[k] = frac * k / _LD_SAMPLES
        _velocity(kind, par, dof, F, y_old, xs[k], tmp, g, vs[k])
    bp = np.empty(n * _LD_SAMPLES + 2)
    bp[0] = 0.0
    nb = 1
    v = np.empty(n)
    for i in range(n):
        for k in range(_LD_SAMPLES):
            a, b = xs[k], xs[k + 1]
            fa, fb = vs[k, i], vs[k + 1, i]
            if fb == 0.0 and k + 1 < _LD_SAMPLES:
                bp[nb] = b
                nb += 1
                continue
            if not (fa * fb < 0.0):
                continue
            side = 0
            r = 0.5 * (a + b)
            for _ in range(100):
                r = b - fb * (b - a) / (fb - fa)
                if not (a < r < b):
                    r = 0.5 * (a + b)
                _velocity(kind, par, dof, F, y_old, r, tmp, g, v)
                fr = v[i]
                if fr == 0.0 or b - a < 1e-15:
                    break
                if (fr > 0.0) == (fb > 0.0):
                    b, fb = r, fr
                    if side == 1:
                        fa *= 0.5
                    side = 1
                else:
                    a, fa = r, fr
                    if side == -1:
                        fb *= 0.5
                    side = -1
            bp[nb] = r
            nb += 1
    inner = np.sort(bp[1:nb])
    total = 0.0
    m = inner.shape[0]
    for k in range(m + 1):
        a = 0.0 if k == 0 else inner[k - 1]
        b = frac if k == m else inner[k]
        if b - a <= 0.0:
            continue
        mid = 0.5 * (a + b)
        total += _ld_piece(kind, par, dof, F, y_old, a, mid, 1, ld_p, tmp, g, v)
        total += _ld_piece(kind, par, dof, F, y_old, mid, b, -1, ld_p, tmp, g, v)
    return total


@njit(cache=True, nogil=True)
def _g_escape(dof, y, r2):
    s = 0.0
    for i in range(dof):
        s += y[i] * y[i]
    return r2 - s


@njit(cache=True, nogil=True)
def _g_box(dof, y, lo, hi):
    g = np.inf
    for i in range(dof):
        a = y[i] - lo[i]
        b = hi[i] - y[i]
        if a < g:
            g = a
        if b < g:
            g = b
    return g


@njit(cache=True, nogil=True)
def _gdot(which, dof, y, f, lo, hi, ev_idx):
    """Time derivative of event function ``which`` (0 escape, 1 box, 2 section)."""
    if which == 0:
        s = 0.0
        for i in range(dof):
            s += y[i] * f[i]
        return -2.0 * s
    if which == 1:
        g = np.inf
        d = 0.0
        for i in range(dof):
            a = y[i] - lo[i]
            b = hi[i] - y[i]
            if a < g:
                g = a
                d = f[i]
            if b < g:
                g = b
                d = -f[i]
        return d
    return f[ev_idx]


@njit(cache=True, nogil=True)
def _gval(which, dof, y, r2, lo, hi, ev_idx, ev_val):
    if which == 0:
        return _g_escape(dof, y, r2)
    if which == 1:
        return _g_box(dof, y, lo, hi)
    return y[ev_idx] - ev_val


@njit(cache=True, nogil=True)
def _locate(which, kind, par, dof, y_old, y_new, h, K, F, with_stm, ld_p, ld_on,
            r2, lo, hi, ev_idx, ev_val, s_old, y_out):
    """Root of event ``which`` inside the last step.

    Bisection on the dense interpolant brackets the root; Newton iterations on
    true Runge-Kutta sub-steps from ``y_old`` polish it.  Returns the step
    fraction of the root; ``y_out`` receives the state there.
    """
    ny = y_old.shape[0]
    tmp = np.empty(ny)
    a = 0.0
    b = 1.0
    for _ in range(60):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        _dense_eval(F, y_old, m, tmp)
        gm = _gval(which, dof, tmp, r2, lo, hi, ev_idx, ev_val)
        if gm == 0.0:
            a = m
            b = m
            break
        if (gm > 0.0) == (s_old > 0.0):
            a = m
        else:
            b = m
    x = 0.5 * (a + b)
    Ks = np.empty_like(K)
    f0 = K[0].copy()
    fy = np.empty(ny)
    best_x = x
    best_g = np.inf
    for _ in range(6):
        hs = x * h
        if hs == 0.0:
            y_out[:] = y_old
        else:
            _rk_step(kind, par, dof, y_old, f0, hs, Ks, with_stm, ld_p, ld_on, y_out)
        g = _gval(which, dof, y_out, r2, lo, hi, ev_idx, ev_val)
        if abs(g) < best_g:
            best_g = abs(g)
            best_x = x
            tmp[:] = y_out
        if g == 0.0:
            break
        rhs(kind, par, dof, y_out, fy, False, ld_p, False)
        gd = _gdot(which, dof, y_out, fy, lo, hi, ev_idx)
        if gd == 0.0:
            break
        xn = x - g / (gd * h)
        if xn < 0.0:
            xn = 0.0
        if xn > 1.0:
            xn = 1.0
        if abs(xn - x) * abs(h) < 1e-17:
            x = xn
            continue
        x = xn
    y_out[:] = tmp
    return best_x


@njit(cache=True, nogil=True)
def initial_step(kind, par, dof, y0, f0, t_span, rtol, atol, n_err, with_stm, ld_p, ld_on):
    d0 = 0.0
    d1 = 0.0
    for j in range(n_err):
        sc = atol + abs(y0[j]) * rtol
        d0 += (y0[j] / sc) ** 2
        d1 += (f0[j] / sc) ** 2
    d0 = np.sqrt(d0 / n_err)
    d1 = np.sqrt(d1 / n_err)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, abs(t_span))
    direction = 1.0 if t_span >= 0 else -1.0
    y1 = y0 + h0 * direction * f0
    f1 = np.empty_like(y0)
    rhs(kind, par, dof, y1, f1, with_stm, ld_p, ld_on)
    d2 = 0.0
    for j in range(n_err):
        sc = atol + abs(y0[j]) * rtol
        d2 += ((f1[j] - f0[j]) / sc) ** 2
    d2 = np.sqrt(d2 / n_err) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100 * h0, h1)


@njit(cache=True, nogil=True)
def propagate(kind, par, dof, y0, t0, t_end, rtol, atol, max_step, n_err,
              with_stm, ld_p, ld_on, escape_r, box_lo, box_hi, use_box,
              ev_idx, ev_val, ev_dir, ev_terminal, max_events,
              t_eval, store_steps, max_steps):
    """Integrate from ``t0`` towards ``t_end`` with event handling.

    Returns ``(status, t, y, ev_t, ev_y, n_ev, out_t, out_y, n_out)`` where the
    ``out`` arrays hold dense samples at ``t_eval`` (if given) followed by
    accepted step points when ``store_steps`` is set.
    """
    ny = y0.shape[0]
    span = t_end - t0
    direction = 1.0 if span >= 0 else -1.0
    r2 = escape_r * escape_r
    use_esc = escape_r > 0.0

    ev_t = np.empty(max(max_events, 1))
    ev_y = np.empty((max(max_events, 1), ny))
    n_ev = 0

    cap = 64
    if t_eval.shape[0] > 0:
        cap = t_eval.shape[0] + 2
    out_t = np.empty(cap)
    out_y = np.empty((cap, ny))
    n_out = 0
    i_eval = 0

    y = y0.copy()
    t = t0
    f = np.empty(ny)
    rhs(kind, par, dof, y, f, with_stm, ld_p, ld_on)

    if store_steps and t_eval.shape[0] == 0:
        out_t[0] = t
        out_y[0] = y
        n_out = 1
    while i_eval < t_eval.shape[0] and t_eval[i_eval] == t0:
        out_t[n_out] = t
        out_y[n_out] = y
        n_out += 1
        i_eval += 1

    if use_esc and _g_escape(dof, y, r2) < 0.0:
        return ST_ESCAPE, t, y, ev_t, ev_y, n_ev, out_t, out_y, n_out
    if use_box and _g_box(dof, y, box_lo, box_hi) < 0.0:
        return ST_BOX, t, y, ev_t, ev_y, n_ev, out_t, out_y, n_out
    if span == 0.0:
        return ST_TIME, t, y, ev_t, ev_y, n_ev, out_t, out_y, n_out

    g_esc = _g_escape(dof, y, r2) if use_esc else 1.0
    g_box = _g_box(dof, y, box_lo, box_hi) if use_box else 1.0
    g_sec = 0.0
    if ev_idx >= 0:
        g_sec = y[ev_idx] - ev_val
        if g_sec == 0.0:
            # start on the section: use the sign just after t0
            g_sec = f[ev_idx] * direction * 1e-300

    h_abs = initial_step(kind, par, dof, y, f, span, rtol, atol, n_err, with_stm, ld_p, ld_on)
    K = np.empty((16, ny))
    F = np.empty((7, ny))
    y_new = np.empty(ny)
    y_root = np.empty(ny)
    y_best = np.empty(ny)
    fy = np.empty(ny)
    n_steps = 0

    while True:
        if direction * (t - t_end) >= 0.0:
            return ST_TIME, t, y, ev_t, ev_y, n_ev, out_t, out_y, n_out
        if n_steps >= max_steps:
            return ST_MAXSTEPS, t, y, ev_t, ev_y, n_ev, out_t, out_y, n_out
        min_step = 10.0 * abs(np.nextafter(t, direction * np.inf) - t)
        if h_abs > max_step:
            h_abs = max_step
        rejected = False
        while True:
            if h_abs < min_step:
                return ST_UNDERFLOW, t, y, ev_t, ev_y, n_ev, out_t, out_y, n_out
            h = h_abs * direction
            t_new = t + h
            if direction * (t_new - t_end) > 0.0:
                t_new = t_end
            h = t_new - t
            h_abs = abs(h)
            _rk_step(kind, par, dof, y, f, h, K, with_stm, ld_p, ld_on, y_new)
            err = _error_norm(K, h, y, y_new, rtol, atol, n_err)
            if err < 1.0:
                if err == 0.0:
                    fac = _MAX_FACTOR
                else:
                    fac = min(_MAX_FACTOR, _SAFETY * err ** _ERR_EXP)
                if rejected:
                    fac = min(1.0, fac)
                h_next = h_abs * fac
                break
            h_abs *= max(_MIN_FACTOR, _SAFETY * err ** _ERR_EXP)
            rejected = True
        n_steps += 1

        # events inside (t, t_new]
        dense_ready = False
        best_x = 2.0
        best_kind = -1
        g_esc_new = _g_escape(dof, y_new, r2) if use_esc else 1.0
        g_box_new = _g_box(dof, y_new, box_lo, box_hi) if use_box else 1.0
        g_sec_new = (y_new[ev_idx] - ev_val) if ev_idx >= 0 else 0.0
        if use_esc and g_esc_new < 0.0 <= g_esc:
            _dense_coeffs(kind, par, dof, y, y_new, h, K, with_stm, ld_p, ld_on, F)
            dense_ready = True
            x = _locate(0, kind, par, dof, y, y_new, h, K, F, with_stm, ld_p, ld_on,
                        r2, box_lo, box_hi, ev_idx, ev_val, g_esc, y_root)
            if x < best_x:
                best_x = x
                best_kind = 0
                y_best[:] = y_root
        if use_box and g_box_new < 0.0 <= g_box:
            if not dense_ready:
                _dense_coeffs(kind, par, dof, y, y_new, h, K, with_stm, ld_p, ld_on, F)
                dense_ready = True
            x = _locate(1, kind, par, dof, y, y_new, h, K, F, with_stm, ld_p, ld_on,
                        r2, box_lo, box_hi, ev_idx, ev_val, g_box, y_root)
            if x < best_x:
                best_x = x
                best_kind = 1
                y_best[:] = y_root
        sec_hit = False
        sec_x = 2.0
        if ev_idx >= 0 and ((g_sec > 0.0 and g_sec_new <= 0.0) or (g_sec < 0.0 and g_sec_new >= 0.0)):
            if g_sec_new == 0.0:
                # root exactly at the step end
                sec_x = 1.0
                y_root[:] = y_new
            else:
                if not dense_ready:
                    _dense_coeffs(kind, par, dof, y, y_new, h, K, with_stm, ld_p, ld_on, F)
                    dense_ready = True
                sec_x = _locate(2, kind, par, dof, y, y_new, h, K, F, with_stm, ld_p, ld_on,
                                r2, box_lo, box_hi, ev_idx, ev_val, g_sec, y_root)
            rhs(kind, par, dof, y_root, fy, False, ld_p, False)
            if ev_dir == 0 or (ev_dir > 0 and fy[ev_idx] > 0.0) or (ev_dir < 0 and fy[ev_idx] < 0.0):
                if sec_x <= best_x:
                    sec_hit = True

        t_stop = t_new
        if sec_hit:
            t_root = t + sec_x * h
            if n_ev < max_events:
                ev_t[n_ev] = t_root
                ev_y[n_ev] = y_root
            n_ev += 1
            if ev_terminal > 0 and n_ev >= ev_terminal:
                best_kind = 2
                best_x = sec_x
                y_best[:] = y_root
        if best_kind >= 0:
            t_stop = t + best_x * h
        if ld_on:
            if not dense_ready:
                _dense_coeffs(kind, par, dof, y, y_new, h, K, with_stm, ld_p, ld_on, F)
                dense_ready = True
            frac = best_x if best_kind >= 0 else 1.0
            inc = abs(h) * _ld_step(kind, par, dof, y, F, frac, ld_p)
            y_new[ny - 1] += inc
            y_best[ny - 1] += inc

        if t_eval.shape[0] > 0:
            if i_eval < t_eval.shape[0] and direction * (t_eval[i_eval] - t_stop) <= 0.0:
                if not dense_ready:
                    _dense_coeffs(kind, par, dof, y, y_new, h, K, with_stm, ld_p, ld_on, F)
                    dense_ready = True
                while i_eval < t_eval.shape[0] and direction * (t_eval[i_eval] - t_stop) <= 0.0:
                    xe = (t_eval[i_eval] - t) / h
                    _dense_eval(F, y, xe, out_y[n_out])
                    out_t[n_out] = t_eval[i_eval]
                    n_out += 1
                    i_eval += 1
        elif store_steps:
            if n_out >= cap:
                cap *= 2
                nt = np.empty(cap)
                nyy = np.empty((cap, ny))
                nt[:n_out] = out_t[:n_out]
                nyy[:n_out] = out_y[:n_out]
                out_t = nt
                out_y = nyy
            out_t[n_out] = t_stop
            if best_kind >= 0:
                out_y[n_out] = y_best
            else:
                out_y[n_out] = y_new
            n_out += 1

        if best_kind == 0:
            return ST_ESCAPE, t_stop, y_best.copy(), ev_t, ev_y, n_ev, out_t, out_y, n_out
        if best_kind == 1:
            return ST_BOX, t_stop, y_best.copy(), ev_t, ev_y, n_ev, out_t, out_y, n_out
        if best_kind == 2:
            return ST_EVENT, t_stop, y_best.copy(), ev_t, ev_y, n_ev, out_t, out_y, n_out

        t = t_new
        y[:] = y_new
        f[:] = K[_NS]
        g_esc = g_esc_new
        g_box = g_box_new
        if ev_idx >= 0:
            g_sec = g_sec_new
            if g_sec == 0.0:
                g_sec = f[ev_idx] * direction * 1e-300
        h_abs = h_next


@njit(cache=True, nogil=True)
def ld_nodes(kind, par, dof, ics, active, tau, variable, box_lo, box_hi, escape_r,
             rtol, atol, max_step, ld_p, max_steps, lf, lb, tf, tb, status_f, status_b):
    """Forward and backward LD accumulation for each active initial condition."""
    n = 2 * dof
    ny = n + 1
    empty = np.empty(0)
    for i in range(ics.shape[0]):
        if not active[i]:
            continue
        y0 = np.zeros(ny)
        y0[:n] = ics[i]
        for d in range(2):
            sgn = 1.0 if d == 0 else -1.0
            st, t, y, _, _, _, _, _, _ = propagate(
                kind, par, dof, y0, 0.0, sgn * tau, rtol, atol, max_step, n,
                False, ld_p, True, escape_r, box_lo, box_hi, variable,
                -1, 0.0, 0, 0, 0, empty, False, max_steps)
            if d == 0:
                lf[i] = y[n]
                tf[i] = abs(t)
                status_f[i] = st
            else:
                lb[i] = abs(y[n])
                tb[i] = abs(t)
                status_b[i] = st
