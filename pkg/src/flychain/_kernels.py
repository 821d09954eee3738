"""Compiled inner loops for the chain dynamics.

Everything in here is plain loop arithmetic under numba so that one dynamics
evaluation costs microseconds instead of the hundred-odd that numpy dispatch
overhead would impose; the estimator benchmarks evaluate these tens of
thousands of times.  The public reference implementations in chain.py carry
the readable numpy forms of the same math, and the unit tests hold the two
routes together.

Solvers return an ok flag instead of raising; callers translate a failed
Cholesky into their own error types.
"""

import numpy as np
from numba import njit

# Central-difference step for mass-matrix partials and the CoM-Jacobian
# time derivative (shared with chain.py).
FD_STEP = 1e-6


@njit(cache=True)
def _chol_solve(M, b):
    """Solve M x = b for SPD M by Cholesky; ok=False when not PD."""
    n = M.shape[0]
    L = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            s = M[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                # not-greater-than also catches NaN pivots
                if not s > 0.0:
                    return np.full(n, np.nan), False
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x, True


@njit(cache=True)
def _jacobians(r, a, lengths, qbar, P):
    """Fill P[i, :, m] = d p_1^{c_{i+1}} / d alpha_m (P pre-zeroed)."""
    n = qbar.shape[0]
    sig = np.empty(n)
    run = 0.0
    for i in range(n):
        run += qbar[i]
        sig[i] = run
    c = np.cos(sig)
    s = np.sin(sig)
    S = np.zeros((n, 2))
    for j in range(1, n):
        S[j, 0] = S[j - 1, 0] - lengths[j - 1] * s[j]
        S[j, 1] = S[j - 1, 1] + lengths[j - 1] * c[j]
    for i in range(n):
        vx = -r[i] * s[i] - a[i] * c[i]
        vy = r[i] * c[i] - a[i] * s[i]
        for m in range(i + 1):
            mm = m - 1 if m > 0 else 0
            P[i, 0, m] = S[i, 0] - S[mm, 0] + vx
            P[i, 1, m] = S[i, 1] - S[mm, 1] + vy
    return c, s


@njit(cache=True)
def _mass_qq(masses, iw, P, M):
    """Angle-angle mass block: Gram of the link Jacobians plus inertias."""
    n = masses.shape[0]
    for mi in range(n):
        for mj in range(mi + 1):
            s = iw[mi, mj]
            for i in range(n):
                s += masses[i] * (P[i, 0, mi] * P[i, 0, mj]
                                  + P[i, 1, mi] * P[i, 1, mj])
            M[mi, mj] = s
            M[mj, mi] = s


@njit(cache=True)
def _com_jac(masses, mtot, P, Jc):
    n = masses.shape[0]
    for m in range(n):
        sx = 0.0
        sy = 0.0
        for i in range(n):
            sx += masses[i] * P[i, 0, m]
            sy += masses[i] * P[i, 1, m]
        Jc[0, m] = sx / mtot
        Jc[1, m] = sy / mtot


@njit(cache=True)
def _full_from_qq(Mqq, Jc, mtot, M):
    n = Mqq.shape[0]
    for i in range(n):
        for j in range(n):
            M[i, j] = Mqq[i, j]
        M[i, n] = mtot * Jc[0, i]
        M[i, n + 1] = mtot * Jc[1, i]
        M[n, i] = M[i, n]
        M[n + 1, i] = M[i, n + 1]
    M[n, n] = mtot
    M[n, n + 1] = 0.0
    M[n + 1, n] = 0.0
    M[n + 1, n + 1] = mtot


@njit(cache=True)
def _reduced_from_qq(Mqq, Jc, mtot, M):
    n = Mqq.shape[0]
    for i in range(n):
        for j in range(n):
            M[i, j] = Mqq[i, j] - mtot * (Jc[0, i] * Jc[0, j]
                                          + Jc[1, i] * Jc[1, j])


@njit(cache=True)
def _mass_mode(masses, iw, r, a, lengths, mtot, qbar, full_mode, M, P, Mqq, Jc):
    """Assemble the requested-mode mass matrix for one posture into M."""
    P[:] = 0.0
    _jacobians(r, a, lengths, qbar, P)
    _mass_qq(masses, iw, P, Mqq)
    _com_jac(masses, mtot, P, Jc)
    if full_mode:
        _full_from_qq(Mqq, Jc, mtot, M)
    else:
        _reduced_from_qq(Mqq, Jc, mtot, M)


@njit(cache=True)
def _coriolis_times_rates(DM, qdot, n, dim, out):
    """out = C @ qdot from the mass partials (Christoffel contraction)."""
    DMq = np.empty((n, dim))
    for k in range(n):
        for i in range(dim):
            s = 0.0
            for j in range(dim):
                s += DM[k, i, j] * qdot[j]
            DMq[k, i] = s
    for i in range(dim):
        s = 0.0
        for k in range(n):
            s += qdot[k] * DMq[k, i]
        out[i] = s
    for i in range(n):
        s = 0.0
        for k in range(dim):
            s += DMq[i, k] * qdot[k]
        out[i] -= 0.5 * s


@njit(cache=True)
def dynamics_accel(masses, inertia_gram, r, a, lengths, damping, gravity, mtot,
                   qbar, qdot, u, full_mode):
    """Accelerations M^{-1}(u - C qdot - B qdot - g) in either mode.

    ``damping`` is the diagonal damping vector sized for the mode; qdot and
    u likewise.  Returns (qddot, ok).
    """
    n = qbar.shape[0]
    dim = n + 2 if full_mode else n
    M = np.empty((dim, dim))
    P = np.zeros((n, 2, n))
    Mqq = np.empty((n, n))
    Jc = np.empty((2, n))
    _mass_mode(masses, inertia_gram, r, a, lengths, mtot, qbar, full_mode,
               M, P, Mqq, Jc)
    P0 = P.copy()
    Jc0 = Jc.copy()

    DM = np.empty((n, dim, dim))
    Mp = np.empty((dim, dim))
    qb = qbar.copy()
    for k in range(n):
        qb[k] = qbar[k] + FD_STEP
        _mass_mode(masses, inertia_gram, r, a, lengths, mtot, qb, full_mode,
                   Mp, P, Mqq, Jc)
        DM[k] = Mp
        qb[k] = qbar[k] - FD_STEP
        _mass_mode(masses, inertia_gram, r, a, lengths, mtot, qb, full_mode,
                   Mp, P, Mqq, Jc)
        for i in range(dim):
            for j in range(dim):
                DM[k, i, j] = (DM[k, i, j] - Mp[i, j]) / (2.0 * FD_STEP)
        qb[k] = qbar[k]

    rhs = np.empty(dim)
    _coriolis_times_rates(DM, qdot, n, dim, rhs)
    for i in range(dim):
        rhs[i] = u[i] - rhs[i] - damping[i] * qdot[i]
    if full_mode:
        gm = gravity * mtot
        for m in range(n):
            rhs[m] -= gm * Jc0[1, m]
        rhs[n + 1] -= gm
    else:
        for m in range(n):
            s = 0.0
            for i in range(n):
                s += masses[i] * (P0[i, 1, m] - Jc0[1, m])
            rhs[m] -= gravity * s
    return _chol_solve(M, rhs)


@njit(cache=True)
def inverse_dynamics(masses, inertia_gram, r, a, lengths, damping_red, gravity,
                     mtot, qbar, qbardot, qbarddot):
    """Reduced-coordinate inverse dynamics M qdd + C qd + B qd + g."""
    n = qbar.shape[0]
    M = np.empty((n, n))
    P = np.zeros((n, 2, n))
    Mqq = np.empty((n, n))
    Jc = np.empty((2, n))
    _mass_mode(masses, inertia_gram, r, a, lengths, mtot, qbar, False,
               M, P, Mqq, Jc)
    P0 = P.copy()
    Jc0 = Jc.copy()

    DM = np.empty((n, n, n))
    Mp = np.empty((n, n))
    qb = qbar.copy()
    for k in range(n):
        qb[k] = qbar[k] + FD_STEP
        _mass_mode(masses, inertia_gram, r, a, lengths, mtot, qb, False,
                   Mp, P, Mqq, Jc)
        DM[k] = Mp
        qb[k] = qbar[k] - FD_STEP
        _mass_mode(masses, inertia_gram, r, a, lengths, mtot, qb, False,
                   Mp, P, Mqq, Jc)
        for i in range(n):
            for j in range(n):
                DM[k, i, j] = (DM[k, i, j] - Mp[i, j]) / (2.0 * FD_STEP)
        qb[k] = qbar[k]

    u = np.empty(n)
    _coriolis_times_rates(DM, qbardot, n, n, u)
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += M[i, j] * qbarddot[j]
        u[i] += s + damping_red[i] * qbardot[i]
    for m in range(n):
        s = 0.0
        for i in range(n):
            s += masses[i] * (P0[i, 1, m] - Jc0[1, m])
        u[m] += gravity * s
    return u


@njit(cache=True)
def truth_rates(masses, inertia_gram, r, a, lengths, damping_full, damping_red,
                gravity, mtot, amp, omega, phase, ref0, kp, kd, actuated, y):
    """Time-augmented state derivative of the driven free-flying chain.

    y = (q, qdot, t).  The computed-torque law (reduced inverse dynamics of
    the commanded joint accelerations, base slot zero, joint components
    applied) is evaluated inline so one Jacobian pass serves both the torque
    synthesis and the full-dynamics solve.
    """
    n = masses.shape[0]
    dim = n + 2
    qdot = y[dim: 2 * dim]
    qbar = y[:n]
    t = y[2 * dim]

    M = np.empty((dim, dim))
    Mbar = np.empty((n, n))
    P = np.zeros((n, 2, n))
    Mqq = np.empty((n, n))
    Jc = np.empty((2, n))
    _mass_mode(masses, inertia_gram, r, a, lengths, mtot, qbar, True,
               M, P, Mqq, Jc)
    _reduced_from_qq(Mqq, Jc, mtot, Mbar)
    P0 = P.copy()
    Jc0 = Jc.copy()

    DM = np.empty((n, dim, dim))
    DMbar = np.empty((n, n, n))
    Mp = np.empty((dim, dim))
    Mbp = np.empty((n, n))
    qb = qbar.copy()
    for k in range(n):
        qb[k] = qbar[k] + FD_STEP
        _mass_mode(masses, inertia_gram, r, a, lengths, mtot, qb, True,
                   Mp, P, Mqq, Jc)
        _reduced_from_qq(Mqq, Jc, mtot, Mbp)
        DM[k] = Mp
        DMbar[k] = Mbp
        qb[k] = qbar[k] - FD_STEP
        _mass_mode(masses, inertia_gram, r, a, lengths, mtot, qb, True,
                   Mp, P, Mqq, Jc)
        _reduced_from_qq(Mqq, Jc, mtot, Mbp)
        for i in range(dim):
            for j in range(dim):
                DM[k, i, j] = (DM[k, i, j] - Mp[i, j]) / (2.0 * FD_STEP)
        for i in range(n):
            for j in range(n):
                DMbar[k, i, j] = (DMbar[k, i, j] - Mbp[i, j]) / (2.0 * FD_STEP)
        qb[k] = qbar[k]

    u = np.zeros(dim)
    if actuated:
        # computed-torque tracking of the reference joint sinusoid
        # ref0 + amp * (sin(omega t + phase) - sin(phase))
        acc_des = np.zeros(n)
        for j in range(1, n):
            th = omega[j - 1] * t + phase[j - 1]
            ref = ref0[j - 1] + amp[j - 1] * (np.sin(th) - np.sin(phase[j - 1]))
            dref = amp[j - 1] * omega[j - 1] * np.cos(th)
            ddref = -amp[j - 1] * omega[j - 1] ** 2 * np.sin(th)
            acc_des[j] = (ddref + kd * (dref - qdot[j])
                          + kp * (ref - y[j]))
        ubar = np.empty(n)
        _coriolis_times_rates(DMbar, qdot[:n], n, n, ubar)
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += Mbar[i, j] * acc_des[j]
            ubar[i] += s + damping_red[i] * qdot[i]
        for m in range(n):
            s = 0.0
            for i in range(n):
                s += masses[i] * (P0[i, 1, m] - Jc0[1, m])
            ubar[m] += gravity * s
        for i in range(1, n):
            u[i] = ubar[i]

    rhs = np.empty(dim)
    _coriolis_times_rates(DM, qdot, n, dim, rhs)
    for i in range(dim):
        rhs[i] = u[i] - rhs[i] - damping_full[i] * qdot[i]
    gm = gravity * mtot
    for m in range(n):
        rhs[m] -= gm * Jc0[1, m]
    rhs[n + 1] -= gm
    qddot, ok = _chol_solve(M, rhs)

    out = np.empty(2 * dim + 1)
    for i in range(dim):
        out[i] = qdot[i]
        out[dim + i] = qddot[i]
    out[2 * dim] = 1.0
    return out, ok


@njit(cache=True)
def local_com(masses, mtot, r, a, lengths, qbar):
    """Mass-weighted local CoM p_1^c for one posture."""
    n = qbar.shape[0]
    run = 0.0
    px = 0.0
    py = 0.0
    jx = 0.0
    jy = 0.0
    for i in range(n):
        run += qbar[i]
        c = np.cos(run)
        s = np.sin(run)
        if i > 0:
            jx += lengths[i - 1] * c
            jy += lengths[i - 1] * s
        px += masses[i] * (jx + r[i] * c - a[i] * s)
        py += masses[i] * (jy + r[i] * s + a[i] * c)
    return np.array([px / mtot, py / mtot])


@njit(cache=True)
def com_derivatives(masses, mtot, r, a, lengths, qbar, qbardot, qbarddot):
    """Velocity and acceleration of the local CoM p_1^c.

    The Jacobian time-derivative term is a central difference of J_c along
    the velocity direction with step FD_STEP.
    """
    n = qbar.shape[0]
    P = np.zeros((n, 2, n))
    Jc = np.empty((2, n))
    _jacobians(r, a, lengths, qbar, P)
    _com_jac(masses, mtot, P, Jc)
    vel = np.empty(2)
    acc = np.empty(2)
    for axis in range(2):
        sv = 0.0
        sa = 0.0
        for m in range(n):
            sv += Jc[axis, m] * qbardot[m]
            sa += Jc[axis, m] * qbarddot[m]
        vel[axis] = sv
        acc[axis] = sa

    qb = np.empty(n)
    Jp = np.empty((2, n))
    Jm = np.empty((2, n))
    for i in range(n):
        qb[i] = qbar[i] + FD_STEP * qbardot[i]
    P[:] = 0.0
    _jacobians(r, a, lengths, qb, P)
    _com_jac(masses, mtot, P, Jp)
    for i in range(n):
        qb[i] = qbar[i] - FD_STEP * qbardot[i]
    P[:] = 0.0
    _jacobians(r, a, lengths, qb, P)
    _com_jac(masses, mtot, P, Jm)
    for axis in range(2):
        s = 0.0
        for m in range(n):
            s += (Jp[axis, m] - Jm[axis, m]) * qbardot[m]
        acc[axis] += s / (2.0 * FD_STEP)
    return vel, acc


def warm_up():
    """Force-compile every kernel on a one-link chain (cached afterwards)."""
    m = np.ones(1)
    iw = np.ones((1, 1))
    z1 = np.zeros(1)
    empt = np.zeros(0)
    g = 9.81
    dynamics_accel(m, iw, z1 + 0.1, z1, empt, np.zeros(3), g, 1.0,
                   z1, np.zeros(3), np.zeros(3), True)
    dynamics_accel(m, iw, z1 + 0.1, z1, empt, z1, g, 1.0,
                   z1, z1, z1, False)
    inverse_dynamics(m, iw, z1 + 0.1, z1, empt, z1, g, 1.0, z1, z1, z1)
    truth_rates(m, iw, z1 + 0.1, z1, empt, np.zeros(3), z1, g, 1.0,
                empt, empt, empt, empt, 0.0, 0.0, False, np.zeros(7))
    local_com(m, 1.0, z1 + 0.1, z1, empt, z1)
    com_derivatives(m, 1.0, z1 + 0.1, z1, empt, z1, z1, z1)
