"""Compiled inner loops for the meridian geometry and the explicit stepper.

Everything here works on bare float arrays ``x`` (axial coordinate) and ``r``
(distance to the axis) ordered along the generating curve. Topology codes:

* ``FREE`` -- first node on the plane x = 0, last node is a pole on the axis;
* ``CLOSED`` -- both end nodes are poles;
* ``OPEN`` -- both ends are mirror planes (reference cylinder segments only).

Ghost nodes realise the boundary conditions: a mirror plane reflects the
neighbour across x = x_end, a pole reflects it across the axis (r -> -r).
"""

import math

import numpy as np
from numba import njit

FREE = 0
CLOSED = 1
OPEN = 2

# status codes returned by advance()
OK = 0
PINCH = 1
PROJECTION_FAILED = 2
NONFINITE = 3

PROJECTION_RTOL = 1e-12
PROJECTION_MAXITER = 5


@njit(cache=True)
def left_is_pole(topo):
    return topo == CLOSED


@njit(cache=True)
def right_is_pole(topo):
    return topo != OPEN


@njit(cache=True)
def ghost_left(x, r, topo):
    if topo == CLOSED:
        return x[1], -r[1]
    return 2.0 * x[0] - x[1], r[1]


@njit(cache=True)
def ghost_right(x, r, topo):
    m = x.shape[0]
    if topo == OPEN:
        return 2.0 * x[m - 1] - x[m - 2], r[m - 2]
    return x[m - 2], -r[m - 2]


@njit(cache=True)
def geometry(x, r, topo, n, T, nu, k, p, ds):
    """Fill tangent, outward normal, meridian curvature k, rotational
    curvature p and trapezoid weights ds (half the adjacent chords).

    k is the curvature of the circle through the node and its two
    neighbours; the tangent is that circle's tangent. Both are exact for
    any sampling of a circular arc. At a pole p is set to k.
    """
    m = x.shape[0]
    for i in range(m):
        if i == 0:
            xm, rm = ghost_left(x, r, topo)
        else:
            xm, rm = x[i - 1], r[i - 1]
        if i == m - 1:
            xp, rp = ghost_right(x, r, topo)
        else:
            xp, rp = x[i + 1], r[i + 1]
        ax = x[i] - xm
        ar = r[i] - rm
        bx = xp - x[i]
        br = rp - r[i]
        hm = math.sqrt(ax * ax + ar * ar)
        hp = math.sqrt(bx * bx + br * br)
        cx = xp - xm
        cr = rp - rm
        c = math.sqrt(cx * cx + cr * cr)
        dx = hm * hm * bx + hp * hp * ax
        dr = hm * hm * br + hp * hp * ar
        dn = math.sqrt(dx * dx + dr * dr)
        tx = dx / dn
        tr = dr / dn
        T[i, 0] = tx
        T[i, 1] = tr
        nu[i, 0] = -tr
        nu[i, 1] = tx
        k[i] = -2.0 * (ax * br - ar * bx) / (hm * hp * c)
        if i == 0:
            ds[i] = 0.5 * hp
        elif i == m - 1:
            ds[i] = 0.5 * hm
        else:
            ds[i] = 0.5 * (hm + hp)
    for i in range(m):
        if (i == 0 and left_is_pole(topo)) or (i == m - 1 and right_is_pole(topo)):
            p[i] = k[i]
        else:
            p[i] = nu[i, 1] / r[i]


@njit(cache=True)
def area_weights_sum(r, ds, n):
    s = 0.0
    for i in range(r.shape[0]):
        s += r[i] ** (n - 1) * ds[i]
    return s


@njit(cache=True)
def volume_integral(x, r, n):
    """Trapezoid rule for the oriented line integral of r**n dx."""
    s = 0.0
    for j in range(x.shape[0] - 1):
        s += (x[j + 1] - x[j]) * 0.5 * (r[j] ** n + r[j + 1] ** n)
    return s


@njit(cache=True)
def volume_normal_gradient(x, r, nu, n, g):
    """g[i] = (d/dX_i of the line integral of r**n dx) . nu_i."""
    m = x.shape[0]
    for i in range(m):
        dvx = 0.0
        dvr = 0.0
        if i >= 1:
            dvx += 0.5 * (r[i - 1] ** n + r[i] ** n)
            dvr += 0.5 * n * r[i] ** (n - 1) * (x[i] - x[i - 1])
        if i <= m - 2:
            dvx -= 0.5 * (r[i] ** n + r[i + 1] ** n)
            dvr += 0.5 * n * r[i] ** (n - 1) * (x[i + 1] - x[i])
        g[i] = dvx * nu[i, 0] + dvr * nu[i, 1]


@njit(cache=True)
def resample(x, r, m_out):
    """Equal polyline arc-length spacing by piecewise-linear interpolation."""
    m = x.shape[0]
    s = np.zeros(m)
    for i in range(1, m):
        s[i] = s[i - 1] + math.hypot(x[i] - x[i - 1], r[i] - r[i - 1])
    total = s[m - 1]
    xo = np.empty(m_out)
    ro = np.empty(m_out)
    j = 0
    for q in range(m_out):
        target = total * q / (m_out - 1)
        while j < m - 2 and s[j + 1] < target:
            j += 1
        seg = s[j + 1] - s[j]
        w = (target - s[j]) / seg if seg > 0.0 else 0.0
        xo[q] = x[j] + w * (x[j + 1] - x[j])
        ro[q] = r[j] + w * (r[j + 1] - r[j])
    xo[0] = x[0]
    ro[0] = r[0]
    xo[m_out - 1] = x[m - 1]
    ro[m_out - 1] = r[m - 1]
    return xo, ro


@njit(cache=True)
def _constrain(x, r, topo):
    m = x.shape[0]
    if topo == FREE:
        x[0] = 0.0
    if left_is_pole(topo):
        r[0] = 0.0
    if right_is_pole(topo):
        r[m - 1] = 0.0


@njit(cache=True)
def _velocity(x, r, topo, n, mode, T, nu, k, p, ds, g, vel):
    """Normal speed -(H - h) with the volume multiplier h; returns
    (h, min chord, max |A|^2)."""
    m = x.shape[0]
    geometry(x, r, topo, n, T, nu, k, p, ds)
    volume_normal_gradient(x, r, nu, n, g)
    num = 0.0
    den = 0.0
    a2max = 0.0
    for i in range(m):
        H = k[i] + (n - 1) * p[i]
        vel[i] = H
        num += g[i] * H
        den += g[i]
        a2 = k[i] * k[i] + (n - 1) * p[i] * p[i]
        if a2 > a2max:
            a2max = a2
    h = num / den if mode == 0 else 0.0
    for i in range(m):
        vel[i] = -(vel[i] - h)
    dsmin = np.inf
    for j in range(m - 1):
        c = math.hypot(x[j + 1] - x[j], r[j + 1] - r[j])
        if c < dsmin:
            dsmin = c
    return h, dsmin, a2max


@njit(cache=True)
def parabolic_dt(dsmin, a2max, cfl, dt_max):
    return min(dt_max, cfl * dsmin * dsmin / (2.0 + a2max * dsmin * dsmin))


@njit(cache=True)
def find_neck(r, topo, eps):
    """Thinnest neck below ``eps``: a non-pole node that is a local minimum
    of r (with the mirror-plane ghost as neighbour), or any non-pole node on
    or across the axis. Returns (index, r) or (-1, inf).

    Nodes next to a pole are never local minima, because r vanishes at the
    pole itself, so a sharp but smooth tip does not trip the guard.
    """
    m = r.shape[0]
    lo = 1 if left_is_pole(topo) else 0
    hi = m - 1 if right_is_pole(topo) else m
    best = -1
    rbest = np.inf
    for i in range(lo, hi):
        ri = r[i]
        if ri <= 0.0:
            hit = True
        elif ri > eps:
            hit = False
        else:
            rl = r[i - 1] if i > 0 else r[1]
            rr = r[i + 1] if i < m - 1 else r[m - 2]
            hit = ri <= rl and ri <= rr
        if hit and ri < rbest:
            rbest = ri
            best = i
    return best, rbest


@njit(cache=True)
def advance(x, r, topo, n, omega, sigma, target_volume, cfl, dt_max,
            t, horizon, nsteps, step_index, redist_period, project, mode,
            pinch_eps, info):
    """Take up to ``nsteps`` explicit midpoint steps in place.

    ``info`` (float array, length 8) receives
    [t, step_index, dt, h_step, offset, redistributed, pinch_node, r_min].
    Returns (status, steps_taken).
    """
    m = x.shape[0]
    T = np.empty((m, 2))
    nu = np.empty((m, 2))
    k = np.empty(m)
    p = np.empty(m)
    ds = np.empty(m)
    g = np.empty(m)
    vel = np.empty(m)
    xm = np.empty(m)
    rm = np.empty(m)
    xn = np.empty(m)
    rn = np.empty(m)
    taken = 0
    info[6] = -1.0
    info[7] = np.inf
    while taken < nsteps:
        if horizon > 0.0 and t >= horizon * (1.0 - 1e-14):
            break
        # pinch guard on the current state
        imin, rmin = find_neck(r, topo, pinch_eps)
        if imin >= 0:
            info[0] = t
            info[1] = step_index
            info[6] = imin
            info[7] = rmin
            return PINCH, taken
        h0, dsmin, a2max = _velocity(x, r, topo, n, mode, T, nu, k, p, ds, g, vel)
        dt = parabolic_dt(dsmin, a2max, cfl, dt_max)
        if horizon > 0.0 and t + dt > horizon:
            dt = horizon - t
        for i in range(m):
            xm[i] = x[i] + 0.5 * dt * vel[i] * nu[i, 0]
            rm[i] = r[i] + 0.5 * dt * vel[i] * nu[i, 1]
        _constrain(xm, rm, topo)
        hmid, _, _ = _velocity(xm, rm, topo, n, mode, T, nu, k, p, ds, g, vel)
        for i in range(m):
            xn[i] = x[i] + dt * vel[i] * nu[i, 0]
            rn[i] = r[i] + dt * vel[i] * nu[i, 1]
        _constrain(xn, rn, topo)
        bad = False
        for i in range(m):
            if not (math.isfinite(xn[i]) and math.isfinite(rn[i])):
                bad = True
        if bad:
            info[0] = t
            info[1] = step_index
            return NONFINITE, taken
        # refuse a step that would put a non-pole node on or across the axis
        imin, rmin = find_neck(rn, topo, 0.0)
        if imin >= 0:
            info[0] = t
            info[1] = step_index
            info[6] = imin
            info[7] = rmin
            return PINCH, taken
        step_index += 1
        redistributed = 0.0
        if redist_period > 0 and step_index % redist_period == 0:
            xr, rr = resample(xn, rn, m)
            for i in range(m):
                xn[i] = xr[i]
                rn[i] = rr[i]
            redistributed = 1.0
        offset = 0.0
        if project and mode == 0:
            converged = False
            for it in range(PROJECTION_MAXITER + 1):
                geometry(xn, rn, topo, n, T, nu, k, p, ds)
                vol = omega * volume_integral(xn, rn, n)
                if abs(vol - target_volume) <= PROJECTION_RTOL * target_volume:
                    converged = True
                    break
                if it == PROJECTION_MAXITER:
                    break
                if it == 0:
                    slope = sigma * area_weights_sum(rn, ds, n)
                else:
                    volume_normal_gradient(xn, rn, nu, n, g)
                    slope = 0.0
                    for i in range(m):
                        slope += omega * g[i]
                eps = (target_volume - vol) / slope
                offset += eps
                for i in range(m):
                    xn[i] += eps * nu[i, 0]
                    rn[i] += eps * nu[i, 1]
                _constrain(xn, rn, topo)
            if not converged:
                info[0] = t
                info[1] = step_index - 1
                return PROJECTION_FAILED, taken
        for i in range(m):
            x[i] = xn[i]
            r[i] = rn[i]
        t += dt
        taken += 1
        info[0] = t
        info[1] = step_index
        info[2] = dt
        info[3] = hmid + offset / dt
        info[4] = offset
        info[5] = redistributed
    info[0] = t
    info[1] = step_index
    return OK, taken
