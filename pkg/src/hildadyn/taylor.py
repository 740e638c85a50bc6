"""Adaptive Taylor-series integration of the RTBP vector fields.

The solution is advanced step by step as a truncated Taylor polynomial whose
coefficients are produced by automatic-differentiation recurrences; the
polynomial of each accepted step doubles as continuous dense output.  The
step size is chosen from the last two coefficient norms so the local error
stays below the requested tolerance, which may be as small as 1e-16.

Four jet kinds are compiled:

* ``KIND_CRTBP``      spatial CRTBP, state (x, y, z, vx, vy, vz)
* ``KIND_ERTBP``      spatial ERTBP plus the co-integrated path integral of
                      the invariant relation, state (x..vz, I)
* ``KIND_CRTBP_VAR``  planar CRTBP with the 4x4 variational flow,
                      state (x, y, vx, vy, Phi[16] column-major)
* ``KIND_ERTBP_VAR``  planar ERTBP with the variational flow

All drivers run in nopython mode and stream their products (stored steps,
uniform samples or section crossings) without ever leaving compiled code.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

KIND_CRTBP = 0
KIND_ERTBP = 1
KIND_CRTBP_VAR = 2
KIND_ERTBP_VAR = 3

DIMS = (6, 7, 20, 20)

# termination statuses shared with the python layer
OK = 0
COLLISION_SUN = 1
COLLISION_JUPITER = 2
ESCAPE = 3
STEP_UNDERFLOW = 4
NONFINITE = 5
CAP_REACHED = 6

_HMIN = 1e-13
_HMAX = 1.0


def order_for_tol(tol: float) -> int:
    """Taylor order used at tolerance `tol` (roughly -ln(tol)/2 + 2)."""
    p = int(math.ceil(-0.5 * math.log(tol))) + 2
    return min(max(p, 8), 32)


@njit(cache=True)
def _conv(a, b, k):
    acc = 0.0
    for j in range(k + 1):
        acc += a[j] * b[k - j]
    return acc


@njit(cache=True)
def _power_coeff(s, q, k, alpha):
    # q = s**alpha given q[0..k-1]; s[0] must be nonzero
    if k == 0:
        return s[0] ** alpha
    acc = 0.0
    for j in range(k):
        acc += (alpha * (k - j) - j) * s[k - j] * q[j]
    return acc / (k * s[0])


@njit(cache=True)
def _recip_coeff(den, g, k):
    if k == 0:
        return 1.0 / den[0]
    acc = 0.0
    for j in range(k):
        acc += g[j] * den[k - j]
    return -acc / den[0]


@njit(cache=True)
def _jet_crtbp(sv, mu, p, W, out):
    x = out[0]; y = out[1]; z = out[2]; u = out[3]; v = out[4]; w = out[5]
    dx1 = W[0]; dx2 = W[1]; s1 = W[2]; s2 = W[3]; q1 = W[4]; q2 = W[5]
    a1x = W[6]; a2x = W[7]; a1y = W[8]; a2y = W[9]; a1z = W[10]; a2z = W[11]
    for i in range(6):
        out[i, 0] = sv[i]
    one_mu = 1.0 - mu
    for k in range(p):
        if k == 0:
            dx1[0] = x[0] - mu
            dx2[0] = x[0] - mu + 1.0
        else:
            dx1[k] = x[k]
            dx2[k] = x[k]
        s1[k] = _conv(dx1, dx1, k) + _conv(y, y, k) + _conv(z, z, k)
        s2[k] = _conv(dx2, dx2, k) + _conv(y, y, k) + _conv(z, z, k)
        q1[k] = _power_coeff(s1, q1, k, -1.5)
        q2[k] = _power_coeff(s2, q2, k, -1.5)
        a1x[k] = _conv(dx1, q1, k)
        a2x[k] = _conv(dx2, q2, k)
        a1y[k] = _conv(y, q1, k)
        a2y[k] = _conv(y, q2, k)
        a1z[k] = _conv(z, q1, k)
        a2z[k] = _conv(z, q2, k)
        # grouping matches the elliptic jet so the e=0 limit is bitwise equal
        ax = 2.0 * v[k] + (x[k] - one_mu * a1x[k] - mu * a2x[k])
        ay = -2.0 * u[k] + (y[k] - one_mu * a1y[k] - mu * a2y[k])
        az = -one_mu * a1z[k] - mu * a2z[k]
        r = 1.0 / (k + 1.0)
        x[k + 1] = u[k] * r
        y[k + 1] = v[k] * r
        z[k + 1] = w[k] * r
        u[k + 1] = ax * r
        v[k + 1] = ay * r
        w[k + 1] = az * r


@njit(cache=True)
def _jet_ertbp(sv, f0, mu, ecc, p, W, out):
    x = out[0]; y = out[1]; z = out[2]; u = out[3]; v = out[4]; w = out[5]
    iI = out[6]
    dx1 = W[0]; dx2 = W[1]; s1 = W[2]; s2 = W[3]; q1 = W[4]; q2 = W[5]
    a1x = W[6]; a2x = W[7]; a1y = W[8]; a2y = W[9]; a1z = W[10]; a2z = W[11]
    cs = W[12]; sn = W[13]; den = W[14]; g = W[15]; g2 = W[16]
    i1 = W[17]; i2 = W[18]; om = W[19]; oms = W[20]; ig = W[21]
    cg = W[22]; cgz = W[23]; ax_s = W[24]; ay_s = W[25]; az_s = W[26]
    gax = W[27]; gay = W[28]; gaz = W[29]
    # trig series of cos(f0+ sigma), sin(f0 + sigma)
    cs[0] = math.cos(f0)
    sn[0] = math.sin(f0)
    for k in range(p):
        r = 1.0 / (k + 1.0)
        cs[k + 1] = -sn[k] * r
        sn[k + 1] = cs[k] * r
    for i in range(7):
        out[i, 0] = sv[i]
    one_mu = 1.0 - mu
    half_c = 0.5 * mu * one_mu
    for k in range(p):
        if k == 0:
            dx1[0] = x[0] - mu
            dx2[0] = x[0] - mu + 1.0
            den[0] = 1.0 + ecc * cs[0]
        else:
            dx1[k] = x[k]
            dx2[k] = x[k]
            den[k] = ecc * cs[k]
        s1[k] = _conv(dx1, dx1, k) + _conv(y, y, k) + _conv(z, z, k)
        s2[k] = _conv(dx2, dx2, k) + _conv(y, y, k) + _conv(z, z, k)
        q1[k] = _power_coeff(s1, q1, k, -1.5)
        q2[k] = _power_coeff(s2, q2, k, -1.5)
        i1[k] = _power_coeff(s1, i1, k, -0.5)
        i2[k] = _power_coeff(s2, i2, k, -0.5)
        g[k] = _recip_coeff(den, g, k)
        g2[k] = _conv(g, g, k)
        cg[k] = _conv(cs, g, k)
        a1x[k] = _conv(dx1, q1, k)
        a2x[k] = _conv(dx2, q2, k)
        a1y[k] = _conv(y, q1, k)
        a2y[k] = _conv(y, q2, k)
        a1z[k] = _conv(z, q1, k)
        a2z[k] = _conv(z, q2, k)
        ax_s[k] = x[k] - one_mu * a1x[k] - mu * a2x[k]
        ay_s[k] = y[k] - one_mu * a1y[k] - mu * a2y[k]
        az_s[k] = -one_mu * a1z[k] - mu * a2z[k]
        gax[k] = _conv(g, ax_s, k)
        gay[k] = _conv(g, ay_s, k)
        gaz[k] = _conv(g, az_s, k)
        cgz[k] = _conv(cg, z, k)
        om[k] = (0.5 * (_conv(x, x, k) + _conv(y, y, k))
                 + one_mu * i1[k] + mu * i2[k])
        if k == 0:
            om[0] += half_c
        oms[k] = _conv(om, sn, k)
        ig[k] = _conv(oms, g2, k)
        r = 1.0 / (k + 1.0)
        x[k + 1] = u[k] * r
        y[k + 1] = v[k] * r
        z[k + 1] = w[k] * r
        u[k + 1] = (2.0 * v[k] + gax[k]) * r
        v[k + 1] = (-2.0 * u[k] + gay[k]) * r
        w[k + 1] = (gaz[k] - ecc * cgz[k]) * r
        iI[k + 1] = ig[k] * r


@njit(cache=True)
def _jet_crtbp_var(sv, mu, p, W, out):
    x = out[0]; y = out[1]; u = out[2]; v = out[3]
    dx1 = W[0]; dx2 = W[1]; s1 = W[2]; s2 = W[3]; q1 = W[4]; q2 = W[5]
    q15 = W[6]; q25 = W[7]
    a1x = W[8]; a2x = W[9]; a1y = W[10]; a2y = W[11]
    x1sq = W[12]; x2sq = W[13]; ysq = W[14]; x1y = W[15]; x2y = W[16]
    oxx = W[17]; oxy = W[18]; oyy = W[19]
    for i in range(20):
        out[i, 0] = sv[i]
    one_mu = 1.0 - mu
    for k in range(p):
        if k == 0:
            dx1[0] = x[0] - mu
            dx2[0] = x[0] - mu + 1.0
        else:
            dx1[k] = x[k]
            dx2[k] = x[k]
        ysq[k] = _conv(y, y, k)
        x1sq[k] = _conv(dx1, dx1, k)
        x2sq[k] = _conv(dx2, dx2, k)
        x1y[k] = _conv(dx1, y, k)
        x2y[k] = _conv(dx2, y, k)
        s1[k] = x1sq[k] + ysq[k]
        s2[k] = x2sq[k] + ysq[k]
        q1[k] = _power_coeff(s1, q1, k, -1.5)
        q2[k] = _power_coeff(s2, q2, k, -1.5)
        q15[k] = _power_coeff(s1, q15, k, -2.5)
        q25[k] = _power_coeff(s2, q25, k, -2.5)
        a1x[k] = _conv(dx1, q1, k)
        a2x[k] = _conv(dx2, q2, k)
        a1y[k] = _conv(y, q1, k)
        a2y[k] = _conv(y, q2, k)
        oxx[k] = (-one_mu * (q1[k] - 3.0 * _conv(x1sq, q15, k))
                  - mu * (q2[k] - 3.0 * _conv(x2sq, q25, k)))
        oyy[k] = (-one_mu * (q1[k] - 3.0 * _conv(ysq, q15, k))
                  - mu * (q2[k] - 3.0 * _conv(ysq, q25, k)))
        oxy[k] = (3.0 * one_mu * _conv(x1y, q15, k)
                  + 3.0 * mu * _conv(x2y, q25, k))
        if k == 0:
            oxx[0] += 1.0
            oyy[0] += 1.0
        ax = 2.0 * v[k] + (x[k] - one_mu * a1x[k] - mu * a2x[k])
        ay = -2.0 * u[k] + (y[k] - one_mu * a1y[k] - mu * a2y[k])
        r = 1.0 / (k + 1.0)
        x[k + 1] = u[k] * r
        y[k + 1] = v[k] * r
        u[k + 1] = ax * r
        v[k + 1] = ay * r
        # STM rows are stored row-major: out[4 + 4*i + j] is Phi[i, j]
        for c in range(4):
            px = out[4 + c]
            py = out[8 + c]
            pu = out[12 + c]
            pv = out[16 + c]
            bx = _conv(oxx, px, k) + _conv(oxy, py, k)
            by = _conv(oxy, px, k) + _conv(oyy, py, k)
            px[k + 1] = pu[k] * r
            py[k + 1] = pv[k] * r
            pu[k + 1] = (2.0 * pv[k] + bx) * r
            pv[k + 1] = (-2.0 * pu[k] + by) * r


@njit(cache=True)
def _jet_ertbp_var(sv, f0, mu, ecc, p, W, out):
    x = out[0]; y = out[1]; u = out[2]; v = out[3]
    dx1 = W[0]; dx2 = W[1]; s1 = W[2]; s2 = W[3]; q1 = W[4]; q2 = W[5]
    q15 = W[6]; q25 = W[7]
    a1x = W[8]; a2x = W[9]; a1y = W[10]; a2y = W[11]
    x1sq = W[12]; x2sq = W[13]; ysq = W[14]; x1y = W[15]; x2y = W[16]
    oxx = W[17]; oxy = W[18]; oyy = W[19]
    cs = W[20]; sn = W[21]; den = W[22]; g = W[23]
    ax_s = W[24]; ay_s = W[25]; gax = W[26]; gay = W[27]
    cs[0] = math.cos(f0)
    sn[0] = math.sin(f0)
    for k in range(p):
        r = 1.0 / (k + 1.0)
        cs[k + 1] = -sn[k] * r
        sn[k + 1] = cs[k] * r
    for i in range(20):
        out[i, 0] = sv[i]
    one_mu = 1.0 - mu
    for k in range(p):
        if k == 0:
            dx1[0] = x[0] - mu
            dx2[0] = x[0] - mu + 1.0
            den[0] = 1.0 + ecc * cs[0]
        else:
            dx1[k] = x[k]
            dx2[k] = x[k]
            den[k] = ecc * cs[k]
        ysq[k] = _conv(y, y, k)
        x1sq[k] = _conv(dx1, dx1, k)
        x2sq[k] = _conv(dx2, dx2, k)
        x1y[k] = _conv(dx1, y, k)
        x2y[k] = _conv(dx2, y, k)
        s1[k] = x1sq[k] + ysq[k]
        s2[k] = x2sq[k] + ysq[k]
        q1[k] = _power_coeff(s1, q1, k, -1.5)
        q2[k] = _power_coeff(s2, q2, k, -1.5)
        q15[k] = _power_coeff(s1, q15, k, -2.5)
        q25[k] = _power_coeff(s2, q25, k, -2.5)
        g[k] = _recip_coeff(den, g, k)
        a1x[k] = _conv(dx1, q1, k)
        a2x[k] = _conv(dx2, q2, k)
        a1y[k] = _conv(y, q1, k)
        a2y[k] = _conv(y, q2, k)
        ax_s[k] = x[k] - one_mu * a1x[k] - mu * a2x[k]
        ay_s[k] = y[k] - one_mu * a1y[k] - mu * a2y[k]
        gax[k] = _conv(g, ax_s, k)
        gay[k] = _conv(g, ay_s, k)
        oxx[k] = (-one_mu * (q1[k] - 3.0 * _conv(x1sq, q15, k))
                  - mu * (q2[k] - 3.0 * _conv(x2sq, q25, k)))
        oyy[k] = (-one_mu * (q1[k] - 3.0 * _conv(ysq, q15, k))
                  - mu * (q2[k] - 3.0 * _conv(ysq, q25, k)))
        oxy[k] = (3.0 * one_mu * _conv(x1y, q15, k)
                  + 3.0 * mu * _conv(x2y, q25, k))
        if k == 0:
            oxx[0] += 1.0
            oyy[0] += 1.0
        r = 1.0 / (k + 1.0)
        x[k + 1] = u[k] * r
        y[k + 1] = v[k] * r
        u[k + 1] = (2.0 * v[k] + gax[k]) * r
        v[k + 1] = (-2.0 * u[k] + gay[k]) * r
        # STM rows are stored row-major: out[4 + 4*i + j] is Phi[i, j];
        # each column keeps its own forcing series (W rows 28..35)
        for c in range(4):
            px = out[4 + c]
            py = out[8 + c]
            pu = out[12 + c]
            pv = out[16 + c]
            bx = W[28 + c]
            by = W[32 + c]
            bx[k] = _conv(oxx, px, k) + _conv(oxy, py, k)
            by[k] = _conv(oxy, px, k) + _conv(oyy, py, k)
            px[k + 1] = pu[k] * r
            py[k + 1] = pv[k] * r
            pu[k + 1] = (2.0 * pv[k] + _conv(g, bx, k)) * r
            pv[k + 1] = (-2.0 * pu[k] + _conv(g, by, k)) * r


@njit(cache=True)
def _compute_jet(kind, sv, s, mu, ecc, p, W, out):
    if kind == 0:
        _jet_crtbp(sv, mu, p, W, out)
    elif kind == 1:
        _jet_ertbp(sv, s, mu, ecc, p, W, out)
    elif kind == 2:
        _jet_crtbp_var(sv, mu, p, W, out)
    else:
        _jet_ertbp_var(sv, s, mu, ecc, p, W, out)


@njit(cache=True)
def _nstate(kind):
    if kind <= 1:
        return 6
    return 4


@njit(cache=True)
def _propose_step(out, p, tol, nstate):
    nm1 = 0.0
    nm = 0.0
    n0 = 1.0
    for i in range(nstate):
        a = abs(out[i, p - 1])
        if a > nm1:
            nm1 = a
        a = abs(out[i, p])
        if a > nm:
            nm = a
        a = abs(out[i, 0])
        if a > n0:
            n0 = a
    tol_a = tol * n0
    h1 = (tol_a / nm1) ** (1.0 / (p - 1)) if nm1 > 0.0 else _HMAX
    h2 = (tol_a / nm) ** (1.0 / p) if nm > 0.0 else _HMAX
    h = 0.9 * min(h1, h2)
    if h > _HMAX:
        h = _HMAX
    return h


@njit(cache=True)
def _eval_var(coeffs, row, p, sigma):
    acc = coeffs[row, p]
    for k in range(p - 1, -1, -1):
        acc = acc * sigma + coeffs[row, k]
    return acc


@njit(cache=True)
def _eval_state(coeffs, p, sigma, res):
    for i in range(res.shape[0]):
        res[i] = _eval_var(coeffs, i, p, sigma)


@njit(cache=True)
def _radii_sq(coeffs, p, sigma, mu, spatial):
    x = _eval_var(coeffs, 0, p, sigma)
    y = _eval_var(coeffs, 1, p, sigma)
    zz = 0.0
    if spatial:
        z = _eval_var(coeffs, 2, p, sigma)
        zz = z * z
    d1 = x - mu
    d2 = x - mu + 1.0
    return d1 * d1 + y * y + zz, d2 * d2 + y * y + zz, x * x + y * y + zz


@njit(cache=True)
def _collision_scan(coeffs, p, h, mu, spatial, rs2, rj2, resc2):
    """Scan one accepted step for collision/escape.

    Returns (status, sigma).  status OK means the full step is clean.
    Collisions are refined by bisection on the dense output so the stored
    endpoint sits on the collision sphere.
    """
    nsub = 8
    prev = 0.0
    for i in range(1, nsub + 1):
        sig = h * i / nsub
        r1s, r2s, rr = _radii_sq(coeffs, p, sig, mu, spatial)
        hit = 0
        if r1s < rs2:
            hit = COLLISION_SUN
        elif r2s < rj2:
            hit = COLLISION_JUPITER
        if hit != 0:
            lo = prev
            hi = sig
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                r1m, r2m, _ = _radii_sq(coeffs, p, mid, mu, spatial)
                if (hit == COLLISION_SUN and r1m < rs2) or \
                   (hit == COLLISION_JUPITER and r2m < rj2):
                    hi = mid
                else:
                    lo = mid
            return hit, hi
        if rr > resc2:
            return ESCAPE, sig
        prev = sig
    return OK, h


@njit(cache=True)
def _drive_store(kind, sv0, s0, s1, tol, mu, ecc, rs2, rj2, resc2, p,
                 ts, states, coeffs, W):
    """Integrate from s0 toward s1 storing every accepted step.

    Fills ts[0..n], states[0..n], coeffs[0..n-1] and returns
    (n_steps, status, s_end).  status CAP_REACHED means the arrays were
    exhausted before reaching s1; the caller may resume from the last
    stored state.
    """
    dim = states.shape[1]
    cap = coeffs.shape[0]
    spatial = kind <= 1
    nst = _nstate(kind)
    sv = np.empty(dim)
    for i in range(dim):
        sv[i] = sv0[i]
    t = s0
    ts[0] = t
    for i in range(dim):
        states[0, i] = sv[i]
    if s1 == s0:
        return 0, OK, t
    direction = 1.0 if s1 > s0 else -1.0
    # immediate collision at the initial point
    d1 = (sv[0] - mu) ** 2 + sv[1] ** 2
    d2 = (sv[0] - mu + 1.0) ** 2 + sv[1] ** 2
    if spatial:
        d1 += sv[2] ** 2
        d2 += sv[2] ** 2
    if d1 < rs2:
        return 0, COLLISION_SUN, t
    if d2 < rj2:
        return 0, COLLISION_JUPITER, t
    n = 0
    while n < cap:
        _compute_jet(kind, sv, t, mu, ecc, p, W, coeffs[n])
        h = _propose_step(coeffs[n], p, tol, nst)
        if h < _HMIN:
            return n, STEP_UNDERFLOW, t
        last = False
        if (t + direction * h - s1) * direction >= 0.0:
            h = abs(s1 - t)
            last = True
        hs = direction * h
        status, sig = _collision_scan(coeffs[n], p, hs, mu, spatial, rs2, rj2, resc2)
        if status == COLLISION_SUN or status == COLLISION_JUPITER or status == ESCAPE:
            _eval_state(coeffs[n], p, sig, sv)
            t = t + sig
            ts[n + 1] = t
            for i in range(dim):
                states[n + 1, i] = sv[i]
            return n + 1, status, t
        _eval_state(coeffs[n], p, hs, sv)
        ok = True
        for i in range(nst):
            if not math.isfinite(sv[i]):
                ok = False
        if not ok:
            return n, NONFINITE, t
        t = s1 if last else t + hs
        ts[n + 1] = t
        for i in range(dim):
            states[n + 1, i] = sv[i]
        n += 1
        if last:
            return n, OK, t
    return n, CAP_REACHED, t


@njit(cache=True)
def _drive_sample(kind, sv0, s0, tol, mu, ecc, rs2, rj2, resc2, p,
                  n_samples, step, out, coeffs, W):
    """Integrate forward sampling the state at s0 + k*step, k=0..n-1.

    out has shape (n_samples, dim).  Returns (n_filled, status, s_end).
    """
    dim = out.shape[1]
    spatial = kind <= 1
    nst = _nstate(kind)
    sv = np.empty(dim)
    for i in range(dim):
        sv[i] = sv0[i]
    for i in range(dim):
        out[0, i] = sv[i]
    filled = 1
    t = s0
    d1 = (sv[0] - mu) ** 2 + sv[1] ** 2
    d2 = (sv[0] - mu + 1.0) ** 2 + sv[1] ** 2
    if spatial:
        d1 += sv[2] ** 2
        d2 += sv[2] ** 2
    if d1 < rs2:
        return filled, COLLISION_SUN, t
    if d2 < rj2:
        return filled, COLLISION_JUPITER, t
    while filled < n_samples:
        _compute_jet(kind, sv, t, mu, ecc, p, W, coeffs)
        h = _propose_step(coeffs, p, tol, nst)
        if h < _HMIN:
            return filled, STEP_UNDERFLOW, t
        status, sig = _collision_scan(coeffs, p, h, mu, spatial, rs2, rj2, resc2)
        # samples inside the (possibly truncated) step
        while filled < n_samples:
            target = s0 + filled * step
            if target > t + sig:
                break
            for i in range(dim):
                out[filled, i] = _eval_var(coeffs, i, p, target - t)
            filled += 1
        if status != OK:
            return filled, status, t + sig
        _eval_state(coeffs, p, h, sv)
        ok = True
        for i in range(nst):
            if not math.isfinite(sv[i]):
                ok = False
        if not ok:
            return filled, NONFINITE, t
        t += h
    return filled, OK, t


@njit(cache=True)
def _drive_events_y(kind, sv0, s0, s_max, tol, mu, ecc, rs2, rj2, resc2, p,
                    dir_filter, xlo, xhi, t_min, max_events,
                    out_s, out_states, coeffs, W):
    """Collect crossings of y = 0 while integrating from s0 to s_max.

    dir_filter: -1/0/+1 requires that sign of vy at the crossing.  Crossings
    with x outside [xlo, xhi] are skipped.  Returns
    (n_events, status, s_end).
    """
    dim = out_states.shape[1]
    spatial = kind <= 1
    nst = _nstate(kind)
    ivy = 4 if kind <= 1 else 3
    sv = np.empty(dim)
    tmp = np.empty(dim)
    for i in range(dim):
        sv[i] = sv0[i]
    t = s0
    d1 = (sv[0] - mu) ** 2 + sv[1] ** 2
    d2 = (sv[0] - mu + 1.0) ** 2 + sv[1] ** 2
    if spatial:
        d1 += sv[2] ** 2
        d2 += sv[2] ** 2
    if d1 < rs2:
        return 0, COLLISION_SUN, t
    if d2 < rj2:
        return 0, COLLISION_JUPITER, t
    nev = 0
    nsub = 12
    while t < s_max and nev < max_events:
        _compute_jet(kind, sv, t, mu, ecc, p, W, coeffs)
        h = _propose_step(coeffs, p, tol, nst)
        if h < _HMIN:
            return nev, STEP_UNDERFLOW, t
        if t + h > s_max:
            h = s_max - t
        status, hcut = _collision_scan(coeffs, p, h, mu, spatial, rs2, rj2, resc2)
        heff = hcut if status != OK else h
        yprev = _eval_var(coeffs, 1, p, 0.0)
        sprev = 0.0
        for i in range(1, nsub + 1):
            sig = heff * i / nsub
            ycur = _eval_var(coeffs, 1, p, sig)
            if (yprev < 0.0 and ycur > 0.0) or (yprev > 0.0 and ycur < 0.0):
                lo = sprev
                hi = sig
                ylo = yprev
                for _ in range(90):
                    mid = 0.5 * (lo + hi)
                    ym = _eval_var(coeffs, 1, p, mid)
                    if (ylo < 0.0 and ym < 0.0) or (ylo > 0.0 and ym > 0.0):
                        lo = mid
                        ylo = ym
                    else:
                        hi = mid
                sig_star = 0.5 * (lo + hi)
                s_star = t + sig_star
                if s_star > t_min:
                    _eval_state(coeffs, p, sig_star, tmp)
                    keep = True
                    if dir_filter > 0 and tmp[ivy] <= 0.0:
                        keep = False
                    if dir_filter < 0 and tmp[ivy] >= 0.0:
                        keep = False
                    if tmp[0] < xlo or tmp[0] > xhi:
                        keep = False
                    if keep:
                        out_s[nev] = s_star
                        for q in range(dim):
                            out_states[nev, q] = tmp[q]
                        nev += 1
                        if nev >= max_events:
                            break
            yprev = ycur
            sprev = sig
        if status != OK:
            return nev, status, t + hcut
        _eval_state(coeffs, p, heff, sv)
        ok = True
        for i in range(nst):
            if not math.isfinite(sv[i]):
                ok = False
        if not ok:
            return nev, NONFINITE, t
        t += heff
    return nev, OK, t
