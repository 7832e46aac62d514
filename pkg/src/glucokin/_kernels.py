"""Hot numeric kernels: model right-hand sides, analytic Jacobians, RK4 drivers.

Everything here operates on flat float64 arrays and an integer family code
so the same source compiles under numba or runs as plain Python.

Family codes::

    0 complete         (G, I, i1, i2, H, h1, xi)
    1 reduced          (G, i1, i2, H, h1, xi)
    2 insulin sub      (G, I, i1, i2)
    3 glucagon sub     (G, H, h1, h2, xi)
    4 rescaled complete (G, I, i1, i2, H, h1, xi) with unit couplings
"""
import math

import numpy as np

from glucokin._jit import njit

COMPLETE = 0
REDUCED = 1
INSULIN_SUB = 2
GLUCAGON_SUB = 3
RESCALED = 4


@njit
def pw(base, expo):
    # exponent 1 stays exactly linear; otherwise negative round-off is clamped
    if expo == 1.0:
        return base
    if base <= 0.0:
        return 0.0
    return base ** expo


@njit
def dpw(base, expo):
    """d(base**expo)/d(base); 0 at base <= 0 for non-unit exponents."""
    if expo == 1.0:
        return 1.0
    if base <= 0.0:
        return 0.0
    return expo * base ** (expo - 1.0)


@njit
def dpw_expo(base, expo):
    """d(base**expo)/d(expo) = base**expo * ln(base); limit value 0 at base 0."""
    if base <= 0.0:
        return 0.0
    return base ** expo * math.log(base)


@njit
def rhs(fam, x, th, c, ra, out):
    """Write dx/dt into ``out``. ``ra`` is the glucose infusion rate [mmol/h]."""
    if fam == COMPLETE or fam == RESCALED:
        G = x[0]
        I = x[1]
        i1 = x[2]
        i2 = x[3]
        H = x[4]
        h1 = x[5]
        xi = x[6]
        k1 = th[0]
        kI = th[1]
        ki1 = th[2]
        kH = th[3]
        rG = th[4]
        m1 = th[5]
        m2 = th[6]
        m3 = th[7]
        m4 = th[8]
        p = th[9]
        q = th[10]
        n = th[11]
        n1 = th[12]
        if fam == COMPLETE:
            n2 = th[13]
            x1 = th[14]
            x2 = th[15]
            c14 = m4
        else:
            n2 = 1.0
            x1 = th[13]
            x2 = 1.0
            c14 = 1.0
        Ib = c[0]
        Hb = c[1]
        out[0] = -(k1 + kI * (I + Ib) + ki1 * i1) * G + kH * (H + Hb) * xi + rG * ra
        out[1] = -m1 * I + m2 * pw(i1, p)
        out[2] = -m3 * pw(i1, q) + c14 * i2
        out[3] = -m4 * i2
        out[4] = -n * H + n2 * h1
        out[5] = -n1 * h1
        out[6] = -x1 * H * xi + x2 * G * I
    elif fam == REDUCED:
        G = x[0]
        i1 = x[1]
        i2 = x[2]
        H = x[3]
        h1 = x[4]
        xi = x[5]
        k1 = th[0]
        ki1 = th[1]
        kH = th[2]
        rG = th[3]
        m3 = th[4]
        m4 = th[5]
        q = th[6]
        n = th[7]
        n1 = th[8]
        x1 = th[9]
        Hb = c[0]
        out[0] = -(k1 + ki1 * i1) * G + kH * (H + Hb) * xi + rG * ra
        out[1] = -m3 * pw(i1, q) + i2
        out[2] = -m4 * i2
        out[3] = -n * H + h1
        out[4] = -n1 * h1
        out[5] = -x1 * H * xi + G * i1
    elif fam == INSULIN_SUB:
        G = x[0]
        I = x[1]
        i1 = x[2]
        i2 = x[3]
        k1 = th[0]
        kI = th[1]
        ki1 = th[2]
        rG = th[3]
        m1 = th[4]
        m2 = th[5]
        m3 = th[6]
        m4 = th[7]
        p = th[8]
        q = th[9]
        Ib = c[0]
        out[0] = -(k1 + kI * (I + Ib) + ki1 * i1) * G + rG * ra
        out[1] = -m1 * I + m2 * pw(i1, p)
        out[2] = -m3 * pw(i1, q) + m4 * i2
        out[3] = -m4 * i2
    else:
        G = x[0]
        H = x[1]
        h1 = x[2]
        h2 = x[3]
        xi = x[4]
        k1 = th[0]
        kH = th[1]
        n = th[2]
        n1 = th[3]
        n2 = th[4]
        n3 = th[5]
        n4 = th[6]
        x1 = th[7]
        Hb = c[0]
        out[0] = -k1 * G + kH * (H + Hb) * xi
        out[1] = -n * H + n4 * h2 + n2 * h1
        out[2] = -n1 * h1
        out[3] = -n3 * h2
        out[4] = -x1 * H * xi


@njit
def jac(fam, x, th, c, ra, jx, jt):
    """Write df/dx into ``jx`` (d x d) and df/dtheta into ``jt`` (d x m)."""
    jx[:, :] = 0.0
    jt[:, :] = 0.0
    if fam == COMPLETE or fam == RESCALED:
        G = x[0]
        I = x[1]
        i1 = x[2]
        i2 = x[3]
        H = x[4]
        h1 = x[5]
        xi = x[6]
        k1 = th[0]
        kI = th[1]
        ki1 = th[2]
        kH = th[3]
        m2 = th[6]
        m3 = th[7]
        m4 = th[8]
        p = th[9]
        q = th[10]
        n = th[11]
        n1 = th[12]
        m1 = th[5]
        if fam == COMPLETE:
            n2 = th[13]
            x1 = th[14]
            x2 = th[15]
            c14 = m4
        else:
            n2 = 1.0
            x1 = th[13]
            x2 = 1.0
            c14 = 1.0
        Ib = c[0]
        Hb = c[1]
        jx[0, 0] = -(k1 + kI * (I + Ib) + ki1 * i1)
        jx[0, 1] = -kI * G
        jx[0, 2] = -ki1 * G
        jx[0, 4] = kH * xi
        jx[0, 6] = kH * (H + Hb)
        jx[1, 1] = -m1
        jx[1, 2] = m2 * dpw(i1, p)
        jx[2, 2] = -m3 * dpw(i1, q)
        jx[2, 3] = c14
        jx[3, 3] = -m4
        jx[4, 4] = -n
        jx[4, 5] = n2
        jx[5, 5] = -n1
        jx[6, 0] = x2 * I
        jx[6, 1] = x2 * G
        jx[6, 4] = -x1 * xi
        jx[6, 6] = -x1 * H

        jt[0, 0] = -G
        jt[0, 1] = -(I + Ib) * G
        jt[0, 2] = -i1 * G
        jt[0, 3] = (H + Hb) * xi
        jt[0, 4] = ra
        jt[1, 5] = -I
        jt[1, 6] = pw(i1, p)
        jt[1, 9] = m2 * dpw_expo(i1, p)
        jt[2, 7] = -pw(i1, q)
        jt[2, 10] = -m3 * dpw_expo(i1, q)
        jt[3, 8] = -i2
        jt[4, 11] = -H
        jt[5, 12] = -h1
        if fam == COMPLETE:
            jt[2, 8] = i2
            jt[4, 13] = h1
            jt[6, 14] = -H * xi
            jt[6, 15] = G * I
        else:
            jt[6, 13] = -H * xi
    elif fam == REDUCED:
        G = x[0]
        i1 = x[1]
        i2 = x[2]
        H = x[3]
        h1 = x[4]
        xi = x[5]
        k1 = th[0]
        ki1 = th[1]
        kH = th[2]
        m3 = th[4]
        m4 = th[5]
        q = th[6]
        n = th[7]
        n1 = th[8]
        x1 = th[9]
        Hb = c[0]
        jx[0, 0] = -(k1 + ki1 * i1)
        jx[0, 1] = -ki1 * G
        jx[0, 3] = kH * xi
        jx[0, 5] = kH * (H + Hb)
        jx[1, 1] = -m3 * dpw(i1, q)
        jx[1, 2] = 1.0
        jx[2, 2] = -m4
        jx[3, 3] = -n
        jx[3, 4] = 1.0
        jx[4, 4] = -n1
        jx[5, 0] = i1
        jx[5, 1] = G
        jx[5, 3] = -x1 * xi
        jx[5, 5] = -x1 * H

        jt[0, 0] = -G
        jt[0, 1] = -i1 * G
        jt[0, 2] = (H + Hb) * xi
        jt[0, 3] = ra
        jt[1, 4] = -pw(i1, q)
        jt[1, 6] = -m3 * dpw_expo(i1, q)
        jt[2, 5] = -i2
        jt[3, 7] = -H
        jt[4, 8] = -h1
        jt[5, 9] = -H * xi
    elif fam == INSULIN_SUB:
        G = x[0]
        I = x[1]
        i1 = x[2]
        i2 = x[3]
        k1 = th[0]
        kI = th[1]
        ki1 = th[2]
        m1 = th[4]
        m2 = th[5]
        m3 = th[6]
        m4 = th[7]
        p = th[8]
        q = th[9]
        Ib = c[0]
        jx[0, 0] = -(k1 + kI * (I + Ib) + ki1 * i1)
        jx[0, 1] = -kI * G
        jx[0, 2] = -ki1 * G
        jx[1, 1] = -m1
        jx[1, 2] = m2 * dpw(i1, p)
        jx[2, 2] = -m3 * dpw(i1, q)
        jx[2, 3] = m4
        jx[3, 3] = -m4

        jt[0, 0] = -G
        jt[0, 1] = -(I + Ib) * G
        jt[0, 2] = -i1 * G
        jt[0, 3] = ra
        jt[1, 4] = -I
        jt[1, 5] = pw(i1, p)
        jt[1, 8] = m2 * dpw_expo(i1, p)
        jt[2, 6] = -pw(i1, q)
        jt[2, 7] = i2
        jt[2, 9] = -m3 * dpw_expo(i1, q)
        jt[3, 7] = -i2
    else:
        G = x[0]
        H = x[1]
        h1 = x[2]
        h2 = x[3]
        xi = x[4]
        k1 = th[0]
        kH = th[1]
        n = th[2]
        n1 = th[3]
        n2 = th[4]
        n3 = th[5]
        n4 = th[6]
        x1 = th[7]
        Hb = c[0]
        jx[0, 0] = -k1
        jx[0, 1] = kH * xi
        jx[0, 4] = kH * (H + Hb)
        jx[1, 1] = -n
        jx[1, 2] = n2
        jx[1, 3] = n4
        jx[2, 2] = -n1
        jx[3, 3] = -n3
        jx[4, 1] = -x1 * xi
        jx[4, 4] = -x1 * H

        jt[0, 0] = -G
        jt[0, 1] = (H + Hb) * xi
        jt[1, 2] = -H
        jt[1, 4] = h1
        jt[1, 6] = h2
        jt[2, 3] = -h1
        jt[3, 5] = -h2
        jt[4, 7] = -H * xi


@njit
def _finite(x):
    for k in range(x.size):
        if not math.isfinite(x[k]):
            return False
    return True


@njit
def rk4_path(fam, x0, th, c, knots, nsteps, ra, force, kicks):
    """Fixed-step RK4 over consecutive knot segments.

    Segment ``s`` spans ``knots[s]..knots[s+1]`` in ``nsteps[s]`` equal steps
    with infusion ``ra[s]`` and additive forcing ``force[s]``. ``kicks[s]``
    is added to the state at ``knots[s]`` (bolus impulses); stored states at
    knots are post-kick.

    Returns ``(times, states, bad)`` where ``bad`` is the grid index of the
    first non-finite state or -1.
    """
    d = x0.size
    total = 1
    for s in range(nsteps.size):
        total += nsteps[s]
    times = np.empty(total)
    states = np.empty((total, d))
    x = x0.copy()
    for k in range(d):
        x[k] += kicks[0, k]
    times[0] = knots[0]
    states[0, :] = x
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    idx = 0
    for s in range(nsteps.size):
        a = knots[s]
        b = knots[s + 1]
        ns = nsteps[s]
        h = (b - a) / ns
        r = ra[s]
        f = force[s]
        for step in range(ns):
            rhs(fam, x, th, c, r, k1)
            for k in range(d):
                k1[k] += f[k]
                tmp[k] = x[k] + 0.5 * h * k1[k]
            rhs(fam, tmp, th, c, r, k2)
            for k in range(d):
                k2[k] += f[k]
                tmp[k] = x[k] + 0.5 * h * k2[k]
            rhs(fam, tmp, th, c, r, k3)
            for k in range(d):
                k3[k] += f[k]
                tmp[k] = x[k] + h * k3[k]
            rhs(fam, tmp, th, c, r, k4)
            for k in range(d):
                k4[k] += f[k]
                x[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])
            idx += 1
            times[idx] = a + (step + 1) * h
            if not _finite(x):
                return times[: idx + 1], states[: idx + 1], idx
            states[idx, :] = x
        times[idx] = b
        for k in range(d):
            x[k] += kicks[s + 1, k]
        states[idx, :] = x
    return times, states, -1


@njit
def _sens_rhs(fam, x, S, th, c, r, f, dx, dS, jx, jt):
    rhs(fam, x, th, c, r, dx)
    d = x.size
    m = th.size
    for k in range(d):
        dx[k] += f[k]
    jac(fam, x, th, c, r, jx, jt)
    for i in range(d):
        for j in range(m):
            acc = jt[i, j]
            for k in range(d):
                a = jx[i, k]
                if a != 0.0:
                    acc += a * S[k, j]
            dS[i, j] = acc


@njit
def rk4_sens_path(fam, x0, th, c, knots, nsteps, ra, force, kicks):
    """RK4 on the state plus forward sensitivities dX/dtheta.

    Impulses enter the state only; sensitivities are continuous across them
    because doses are inputs, not parameters. Returns
    ``(times, states, sens, bad)`` with ``sens`` of shape (N+1, d, m).
    """
    d = x0.size
    m = th.size
    total = 1
    for s in range(nsteps.size):
        total += nsteps[s]
    times = np.empty(total)
    states = np.empty((total, d))
    sens = np.empty((total, d, m))
    x = x0.copy()
    for k in range(d):
        x[k] += kicks[0, k]
    S = np.zeros((d, m))
    times[0] = knots[0]
    states[0, :] = x
    sens[0] = S
    jx = np.empty((d, d))
    jt = np.empty((d, m))
    kx1 = np.empty(d)
    kx2 = np.empty(d)
    kx3 = np.empty(d)
    kx4 = np.empty(d)
    kS1 = np.empty((d, m))
    kS2 = np.empty((d, m))
    kS3 = np.empty((d, m))
    kS4 = np.empty((d, m))
    tx = np.empty(d)
    tS = np.empty((d, m))
    idx = 0
    for s in range(nsteps.size):
        a = knots[s]
        b = knots[s + 1]
        ns = nsteps[s]
        h = (b - a) / ns
        r = ra[s]
        f = force[s]
        for step in range(ns):
            _sens_rhs(fam, x, S, th, c, r, f, kx1, kS1, jx, jt)
            for i in range(d):
                tx[i] = x[i] + 0.5 * h * kx1[i]
                for j in range(m):
                    tS[i, j] = S[i, j] + 0.5 * h * kS1[i, j]
            _sens_rhs(fam, tx, tS, th, c, r, f, kx2, kS2, jx, jt)
            for i in range(d):
                tx[i] = x[i] + 0.5 * h * kx2[i]
                for j in range(m):
                    tS[i, j] = S[i, j] + 0.5 * h * kS2[i, j]
            _sens_rhs(fam, tx, tS, th, c, r, f, kx3, kS3, jx, jt)
            for i in range(d):
                tx[i] = x[i] + h * kx3[i]
                for j in range(m):
                    tS[i, j] = S[i, j] + h * kS3[i, j]
            _sens_rhs(fam, tx, tS, th, c, r, f, kx4, kS4, jx, jt)
            for i in range(d):
                x[i] += h / 6.0 * (kx1[i] + 2.0 * kx2[i] + 2.0 * kx3[i] + kx4[i])
                for j in range(m):
                    S[i, j] += h / 6.0 * (
                        kS1[i, j] + 2.0 * kS2[i, j] + 2.0 * kS3[i, j] + kS4[i, j]
                    )
            idx += 1
            times[idx] = a + (step + 1) * h
            if not (_finite(x) and _finite(S.ravel())):
                return times[: idx + 1], states[: idx + 1], sens[: idx + 1], idx
            states[idx, :] = x
            sens[idx] = S
        times[idx] = b
        for k in range(d):
            x[k] += kicks[s + 1, k]
        states[idx, :] = x
    return times, states, sens, -1
