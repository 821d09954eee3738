"""Kinematics and dynamics of a planar n-link free-flying open chain.

Coordinates
-----------
Posture ``qbar = (alpha_0, ..., alpha_{n-1})``: orientation of link 1 plus the
n-1 joint angles, unwrapped radians (no modulo reduction anywhere -- tumbling
trajectories exceed 2*pi and error metrics must not jump).

Full coordinates ``q = (qbar, d, h)``: posture plus the position of the link-1
frame origin in the world frame.  Reduced coordinates drop (d, h); in the
frame anchored at the chain's center of mass the posture dynamics are
self-contained and gravity drops out.

Link frames follow the chain convention: sigma_i = alpha_0 + ... + alpha_{i-1}
is the absolute heading of link i, joint i sits at p_1^i (zero for link 1,
cumulative l_j steps after that), and link i's center of mass is offset by
(r_i, a_i) in its own frame.

All operations are pure functions of their arguments; ChainParameters is
immutable after construction, so everything here is safe to call from
concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .linalg import SpdError, solve_spd

# Central-difference step for the mass-matrix partials (Coriolis assembly)
# and for the CoM-Jacobian time derivative.  The closed-form derivatives are
# impractical for generic n; these differences keep everything n-generic.
FD_STEP = _kernels.FD_STEP


class DynamicsError(RuntimeError):
    """A dynamics solve could not proceed (e.g. non-physical mass matrix)."""


def _as_positive(arr, name):
    if np.any(arr <= 0.0):
        raise ValueError(f"{name} must be strictly positive, got {arr}")


@dataclass(frozen=True, eq=False)
class ChainParameters:
    """Geometry, inertia, damping, sensor-offset and gravity constants.

    masses, inertias, com_offset_x (r_i), com_offset_y (a_i): one entry per
    link.  link_lengths holds l_2..l_n (distance between consecutive joint
    origins), so it has n-1 entries; joint_damping likewise has one entry per
    joint.  imu_offset is the IMU position in the link-1 frame, gravity the
    positive field magnitude.
    """

    masses: np.ndarray
    inertias: np.ndarray
    com_offset_x: np.ndarray
    com_offset_y: np.ndarray
    link_lengths: np.ndarray
    joint_damping: np.ndarray
    imu_offset: np.ndarray
    gravity: float = 9.81

    # derived, filled in by __post_init__
    n: int = field(init=False, repr=False)
    total_mass: float = field(init=False, repr=False)

    def __post_init__(self):
        def freeze(name, value, shape=None):
            arr = np.ascontiguousarray(value, dtype=float)
            if shape is not None and arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
            return arr

        m = freeze("masses", self.masses)
        n = m.size
        if n < 1:
            raise ValueError("chain needs at least one link")
        inertia = freeze("inertias", self.inertias, (n,))
        freeze("com_offset_x", self.com_offset_x, (n,))
        freeze("com_offset_y", self.com_offset_y, (n,))
        lengths = freeze("link_lengths", self.link_lengths, (n - 1,))
        damping = freeze("joint_damping", self.joint_damping, (n - 1,))
        freeze("imu_offset", self.imu_offset, (2,))
        _as_positive(m, "masses")
        _as_positive(inertia, "inertias")
        _as_positive(lengths, "link_lengths")
        if np.any(damping < 0.0):
            raise ValueError(f"joint_damping must be non-negative, got {damping}")
        if not self.gravity > 0.0:
            raise ValueError(f"gravity must be positive, got {self.gravity}")

        object.__setattr__(self, "n", n)
        object.__setattr__(self, "total_mass", float(m.sum()))
        # Sum of I_zz over links i >= max(row, col): the angular Gram term of
        # the mass matrix is constant, so it is assembled once here.
        suffix = np.cumsum(inertia[::-1])[::-1]
        idx = np.arange(n)
        freeze("_inertia_gram", suffix[np.maximum.outer(idx, idx)])
        # mask[i, m] = 1 where angle m moves link i+1 (m <= i)
        freeze("_angle_mask", np.tril(np.ones((n, n))))
        # index of S_{max(m,1)} for the Jacobian telescoping sums
        object.__setattr__(self, "_sm_idx", np.maximum(idx - 1, 0))
        object.__setattr__(self, "_sqrt_masses", np.sqrt(m))
        dvec_full = np.zeros(n + 2)
        dvec_full[1:n] = damping
        dvec_full.flags.writeable = False
        object.__setattr__(self, "_damping_vec_full", dvec_full)
        dvec_red = dvec_full[: n].copy()
        dvec_red.flags.writeable = False
        object.__setattr__(self, "_damping_vec_reduced", dvec_red)
        # argument pack for the compiled kernels
        object.__setattr__(self, "_kargs", (
            self.masses, self._inertia_gram, self.com_offset_x,
            self.com_offset_y, self.link_lengths,
        ))


@dataclass
class FullState:
    """Generalized coordinates q = (alpha_0..alpha_{n-1}, d, h) and rates."""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qdot = np.asarray(self.qdot, dtype=float)
        if self.q.shape != self.qdot.shape:
            raise ValueError("q and qdot must have the same length")
        if not (np.isfinite(self.q).all() and np.isfinite(self.qdot).all()):
            raise ValueError("state entries must be finite")

    @property
    def qbar(self):
        return self.q[:-2]

    @property
    def qbardot(self):
        return self.qdot[:-2]


@dataclass
class PostureState:
    """Posture angles and rates (optionally accelerations)."""

    qbar: np.ndarray
    qbardot: np.ndarray
    qbarddot: np.ndarray | None = None

    def __post_init__(self):
        self.qbar = np.asarray(self.qbar, dtype=float)
        self.qbardot = np.asarray(self.qbardot, dtype=float)
        ok = np.isfinite(self.qbar).all() and np.isfinite(self.qbardot).all()
        if self.qbarddot is not None:
            self.qbarddot = np.asarray(self.qbarddot, dtype=float)
            ok = ok and np.isfinite(self.qbarddot).all()
        if not ok:
            raise ValueError("posture entries must be finite")


@dataclass
class ControlInput:
    """Joint torques tau_1..tau_{n-1} (no actuator acts on alpha_0)."""

    torques: np.ndarray

    def __post_init__(self):
        self.torques = np.asarray(self.torques, dtype=float)
        if not np.isfinite(self.torques).all():
            raise ValueError("torques must be finite")


def rotation(theta):
    """2x2 rotation matrix for a planar angle."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


# ---------------------------------------------------------------------------
# batched link kinematics
#
# For a batch of postures, _link_jacobians returns P with
# P[b, i, :, m] = d p_1^{c_{i+1}} / d alpha_m, built from the telescoped sums
# S_i = sum_{j<=i} l_j (-sin sigma_j, cos sigma_j).  One batched call serves
# the mass matrix plus all its finite-difference perturbations.
# ---------------------------------------------------------------------------


def _link_jacobians(params: ChainParameters, qbars):
    """Per-link CoM Jacobians for a (B, n) batch of postures -> (B, n, 2, n)."""
    n = params.n
    sig = np.cumsum(qbars, axis=1)
    c = np.cos(sig)
    s = np.sin(sig)
    lengths = params.link_lengths
    dW = np.zeros(qbars.shape + (2,))
    dW[:, 1:, 0] = -lengths * s[:, 1:]
    dW[:, 1:, 1] = lengths * c[:, 1:]
    S = np.cumsum(dW, axis=1)
    r, a = params.com_offset_x, params.com_offset_y
    dOff = np.empty_like(dW)
    dOff[:, :, 0] = -(r * s) - a * c
    dOff[:, :, 1] = r * c - a * s
    tail = S + dOff
    Sm = S[:, params._sm_idx, :]
    P = params._angle_mask[None, :, None, :] * (
        tail[:, :, :, None] - Sm.transpose(0, 2, 1)[:, None, :, :]
    )
    return P


def _link_positions(params: ChainParameters, qbar):
    """Per-link CoM positions p_1^{c_i} for one posture -> (n, 2)."""
    sig = np.cumsum(qbar)
    c, s = np.cos(sig), np.sin(sig)
    pos = np.empty((params.n, 2))
    pos[:, 0] = params.com_offset_x * c - params.com_offset_y * s
    pos[:, 1] = params.com_offset_x * s + params.com_offset_y * c
    step = np.zeros_like(pos)
    step[1:, 0] = params.link_lengths * c[1:]
    step[1:, 1] = params.link_lengths * s[1:]
    pos += np.cumsum(step, axis=0)
    return pos


def _com_jacobians(params: ChainParameters, P):
    """Batched Jacobian of the local CoM p_1^c -> (B, 2, n)."""
    B, n = P.shape[0], params.n
    J_c = (params.masses @ P.reshape(B, n, 2 * n)).reshape(B, 2, n)
    J_c /= params.total_mass
    return J_c


def _mass_terms(params: ChainParameters, P):
    """Batched posture Gram block and CoM Jacobian from link Jacobians.

    Returns (M_qq, J_c) with shapes (B, n, n) and (B, 2, n): M_qq is the
    angle-angle block shared by the full mass matrix, J_c the Jacobian of the
    local CoM p_1^c.
    """
    B, n = P.shape[0], params.n
    G = (P * params._sqrt_masses[None, :, None, None]).reshape(B, 2 * n, n)
    M_qq = G.transpose(0, 2, 1) @ G + params._inertia_gram
    return M_qq, _com_jacobians(params, P)


def _full_mass(params: ChainParameters, M_qq, J_c):
    B, n = M_qq.shape[0], params.n
    mt = params.total_mass
    M = np.zeros((B, n + 2, n + 2))
    M[:, :n, :n] = M_qq
    cross = mt * J_c
    M[:, :n, n:] = cross.transpose(0, 2, 1)
    M[:, n:, :n] = cross
    M[:, n, n] = mt
    M[:, n + 1, n + 1] = mt
    return M


def _reduced_mass(params: ChainParameters, M_qq, J_c):
    return M_qq - params.total_mass * (J_c.transpose(0, 2, 1) @ J_c)


def _fd_batch(qbar, eps=FD_STEP):
    """Postures [center, +e0, -e0, +e1, -e1, ...] for mass-matrix partials."""
    n = qbar.size
    Q = np.tile(qbar, (2 * n + 1, 1))
    idx = np.arange(n)
    Q[2 * idx + 1, idx] += eps
    Q[2 * idx + 2, idx] -= eps
    return Q


def _coriolis_times_rates(DM, qdot, n_ang):
    """C @ qdot from mass-matrix partials, Christoffel contraction.

    C_ij = 1/2 sum_k (dM_ij/dq_k + dM_ik/dq_j - dM_kj/dq_i) qdot_k; the mass
    matrix depends only on the angles so DM covers k < n_ang.  Contracting
    against the rates collapses to two matmuls of DMq = DM @ qdot.
    """
    DMq = DM @ qdot
    out = qdot[:n_ang] @ DMq
    out[:n_ang] -= 0.5 * (DMq @ qdot)
    return out


def _coriolis_matrix_from_partials(DM, qdot, dim, n_ang):
    t1 = np.tensordot(qdot[:n_ang], DM, axes=1)
    t2 = np.zeros((dim, dim))
    t2[:, :n_ang] = np.einsum("jik,k->ij", DM, qdot)
    t3 = np.zeros((dim, dim))
    t3[:n_ang, :] = DM @ qdot
    return 0.5 * (t1 + t2 - t3)


def _mode_dims(params, mode):
    if mode == "full":
        return params.n + 2
    if mode == "reduced":
        return params.n
    raise ValueError(f"mode must be 'full' or 'reduced', got {mode!r}")


def _mass_batch(params, qbars, mode):
    P = _link_jacobians(params, qbars)
    M_qq, J_c = _mass_terms(params, P)
    if mode == "full":
        return _full_mass(params, M_qq, J_c)
    return _reduced_mass(params, M_qq, J_c)


# ---------------------------------------------------------------------------
# public kinematics
# ---------------------------------------------------------------------------


def link_com_position(params: ChainParameters, qbar, i):
    """Position of link i's center of mass in the link-1 anchored frame."""
    if not 1 <= i <= params.n:
        raise IndexError(f"link index {i} out of range 1..{params.n}")
    qbar = np.asarray(qbar, dtype=float)
    return _link_positions(params, qbar)[i - 1]


def chain_com(params: ChainParameters, qbar):
    """Mass-weighted mean of the link CoM positions, p_1^c."""
    qbar = np.ascontiguousarray(qbar, dtype=float)
    m, _, r, a, lengths = params._kargs
    return _kernels.local_com(m, params.total_mass, r, a, lengths, qbar)


def chain_com_derivatives(params: ChainParameters, qbar, qbardot, qbarddot):
    """Velocity and acceleration of the local CoM p_1^c.

    Velocity is J_c @ qbardot; the acceleration adds the Jacobian's time
    derivative contracted with the rates, evaluated by a central difference
    of J_c along the velocity direction (the step FD_STEP keeps the code
    n-generic where the closed form would not be).
    """
    qbar = np.ascontiguousarray(qbar, dtype=float)
    qbardot = np.ascontiguousarray(qbardot, dtype=float)
    qbarddot = np.ascontiguousarray(qbarddot, dtype=float)
    m, _, r, a, lengths = params._kargs
    return _kernels.com_derivatives(m, params.total_mass, r, a, lengths,
                                    qbar, qbardot, qbarddot)


def linear_jacobian(params: ChainParameters, coords, i, mode="full"):
    """Linear Jacobian of link i's CoM in full or CoM-anchored coordinates.

    Only the posture part of `coords` enters; in full mode the trailing two
    columns are the identity block of the (d, h) translation.
    """
    if not 1 <= i <= params.n:
        raise IndexError(f"link index {i} out of range 1..{params.n}")
    dim = _mode_dims(params, mode)
    qbar = np.asarray(coords, dtype=float)[: params.n]
    P = _link_jacobians(params, qbar[None])
    if mode == "full":
        out = np.zeros((2, dim))
        out[:, : params.n] = P[0, i - 1]
        out[0, params.n] = 1.0
        out[1, params.n + 1] = 1.0
        return out
    _, J_c = _mass_terms(params, P)
    return P[0, i - 1] - J_c[0]


def angular_jacobian(i, dim):
    """Row of ones in columns 1..i: every upstream angle spins link i."""
    out = np.zeros(dim)
    out[:i] = 1.0
    return out


def mass_matrix(params: ChainParameters, coords, mode="full"):
    """Generalized mass matrix sum_i m_i Jv_i^T Jv_i + I_zz_i Jw_i^T Jw_i."""
    qbar = np.asarray(coords, dtype=float)[: params.n]
    return _mass_batch(params, qbar[None], mode)[0]


def coriolis_matrix(params: ChainParameters, coords, rates, mode="full"):
    """Coriolis/centrifugal matrix via Christoffel symbols of the first kind.

    The bracketed mass-matrix partials are contracted against the generalized
    rates; partials come from central finite differences per angle (the mass
    matrix does not depend on d, h, so those columns contribute nothing).
    """
    dim = _mode_dims(params, mode)
    n = params.n
    qbar = np.asarray(coords, dtype=float)[:n]
    rates = np.asarray(rates, dtype=float)
    if rates.shape != (dim,):
        raise ValueError(f"rates must have shape ({dim},)")
    M_all = _mass_batch(params, _fd_batch(qbar), mode)
    DM = (M_all[1::2] - M_all[2::2]) / (2.0 * FD_STEP)
    return _coriolis_matrix_from_partials(DM, rates, dim, n)


def gravity_vector(params: ChainParameters, coords, mode="full"):
    """Generalized gravity sum_i (-m_i [0, -g] Jv_i)^T.

    In reduced (CoM-anchored) coordinates the mass-weighted Jacobians cancel
    and the result vanishes identically.
    """
    n = params.n
    qbar = np.asarray(coords, dtype=float)[:n]
    P = _link_jacobians(params, qbar[None])
    _, J_c = _mass_terms(params, P)
    g, mt = params.gravity, params.total_mass
    if mode == "full":
        out = np.empty(n + 2)
        out[:n] = g * mt * J_c[0, 1]
        out[n] = 0.0
        out[n + 1] = g * mt
        return out
    if mode != "reduced":
        _mode_dims(params, mode)
    rows = P[0, :, 1, :] - J_c[0, 1]
    return g * (params.masses @ rows)


def damping_matrix(params: ChainParameters, mode="full"):
    """Diagonal joint-damping matrix; the base angle and (d, h) are undamped."""
    if mode == "full":
        return np.diag(params._damping_vec_full)
    if mode != "reduced":
        _mode_dims(params, mode)
    return np.diag(params._damping_vec_reduced)


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------


def _input_vector(params, torques, mode):
    """Embed joint torques: no effort acts on alpha_0 or on (d, h)."""
    dim = _mode_dims(params, mode)
    u = np.zeros(dim)
    if torques is not None:
        torques = np.asarray(torques, dtype=float)
        if torques.shape != (params.n - 1,):
            raise ValueError(f"torques must have shape ({params.n - 1},)")
        u[1: params.n] = torques
    return u


def forward_dynamics(params: ChainParameters, q, qdot, torques=None, mode="full"):
    """Accelerations from M qddot = u - C qdot - B qdot - g.

    The solve uses a symmetric positive-definite factorization; a failure
    signals non-physical parameters and raises DynamicsError instead of
    letting NaNs propagate.
    """
    dim = _mode_dims(params, mode)
    full = mode == "full"
    q = np.ascontiguousarray(q, dtype=float)
    qdot = np.ascontiguousarray(qdot, dtype=float)
    if q.shape != (dim,) or qdot.shape != (dim,):
        raise ValueError(f"state must have shape ({dim},) in {mode} mode")
    u = _input_vector(params, torques, mode)
    m, iw, r, a, lengths = params._kargs
    damping = params._damping_vec_full if full else params._damping_vec_reduced
    qddot, ok = _kernels.dynamics_accel(m, iw, r, a, lengths, damping,
                                        params.gravity, params.total_mass,
                                        q[: params.n], qdot, u, full)
    if not ok:
        raise DynamicsError(
            f"mass matrix factorization failed in {mode} mode "
            "(non-physical parameters or state)"
        )
    return qddot


def inverse_dynamics_reduced(params: ChainParameters, qbar, qbardot, qbarddot):
    """Torques realizing a desired posture acceleration in reduced coordinates.

    Returns the full n-vector M qddot + C qdot + B qdot + g; its first slot is
    the (unactuated) base-angle component, which only vanishes when the
    desired motion is consistent with angular-momentum conservation.
    """
    qbar = np.ascontiguousarray(qbar, dtype=float)
    qbardot = np.ascontiguousarray(qbardot, dtype=float)
    qbarddot = np.ascontiguousarray(qbarddot, dtype=float)
    m, iw, r, a, lengths = params._kargs
    return _kernels.inverse_dynamics(m, iw, r, a, lengths,
                                     params._damping_vec_reduced,
                                     params.gravity, params.total_mass,
                                     qbar, qbardot, qbarddot)


def imu_point_acceleration(params: ChainParameters, qbar, qbardot, qbarddot,
                           com_acceleration):
    """World-frame acceleration of the IMU point.

    The IMU rides on link 1, so its acceleration is the CoM acceleration
    minus the local-CoM acceleration plus the rigid-rotation term
    R(alpha_0) Lambda r_imu with Lambda built from the base rate and
    acceleration.
    """
    qbar = np.asarray(qbar, dtype=float)
    qbardot = np.asarray(qbardot, dtype=float)
    qbarddot = np.asarray(qbarddot, dtype=float)
    _, p1c_acc = chain_com_derivatives(params, qbar, qbardot, qbarddot)
    w, dw = qbardot[0], qbarddot[0]
    lam = np.array([[-w * w, -dw], [dw, -w * w]])
    return (
        np.asarray(com_acceleration, dtype=float)
        - p1c_acc
        + rotation(qbar[0]) @ (lam @ params.imu_offset)
    )


# ---------------------------------------------------------------------------
# bookkeeping helpers used by the simulator and the test suites
# ---------------------------------------------------------------------------


def total_energy(params: ChainParameters, q, qdot):
    """Kinetic plus gravitational potential energy of the full state."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    M = mass_matrix(params, q, "full")
    com_y = q[params.n + 1] + chain_com(params, q[: params.n])[1]
    return 0.5 * qdot @ M @ qdot + params.total_mass * params.gravity * com_y


def angular_momentum_about_com(params: ChainParameters, qbar, qbardot):
    """Spin angular momentum about the chain's center of mass.

    Translation of the CoM contributes nothing about itself, so only the
    posture and its rates enter.
    """
    qbar = np.asarray(qbar, dtype=float)
    qbardot = np.asarray(qbardot, dtype=float)
    pos = _link_positions(params, qbar)
    P = _link_jacobians(params, qbar[None])[0]
    m = params.masses
    com = m @ pos / params.total_mass
    vel = P @ qbardot
    com_vel = m @ vel / params.total_mass
    rel_p = pos - com
    rel_v = vel - com_vel
    spin = np.cumsum(qbardot)
    orbital = m @ (rel_p[:, 0] * rel_v[:, 1] - rel_p[:, 1] * rel_v[:, 0])
    return orbital + params.inertias @ spin
