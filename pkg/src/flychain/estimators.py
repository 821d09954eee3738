"""The five estimator architectures over the common filter primitives.

full-ekf / full-ukf
    Nonlinear filters over the full state (q, qdot).  Prediction is an Euler
    step on the full forward dynamics; the measurement model stacks gyro,
    accelerometer and encoders, and must re-solve the dynamics to predict the
    specific force.  That dynamics dependence is exactly what makes these
    the expensive and parameter-sensitive baselines.

de-ekf / de-ukf ("decoupled estimator")
    A posture filter over (qbar, qbardot, qbarddot) using the reduced
    dynamics and only gyro + encoders, cascaded into a time-varying linear
    KF for the center of mass driven by the accelerometer.

bme ("ballistic multibody estimator")
    No dynamics model anywhere: one tiny constant-jerk LTI KF per posture
    axis (gyro for the base angle, encoders for the joints) feeding the same
    ballistic CoM filter.  Parameters only enter through the geometric
    CoM reconstruction.

Cascade estimators recover the reference point (d, h) from the estimated CoM
and posture.  Every estimator consumes the identical sensor stream and torque
stream, emits estimates at the sample timestamps, and reports per-step wall
time for the cost comparison.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .chain import (
    ChainParameters,
    chain_com,
    chain_com_derivatives,
    forward_dynamics,
)
from .filters import (
    FilterError,
    GaussianBelief,
    SigmaScaling,
    ekf_step,
    kf_predict,
    kf_update,
    ukf_step,
)
from .simulation import NoiseSpec, SensorSample, TruthRecord

KINDS = ("bme", "de-ekf", "de-ukf", "full-ekf", "full-ukf")


@dataclass(frozen=True)
class EstimatorConfig:
    """Filter rates, process-noise intensities and measurement noise levels.

    Measurement covariances come from the sensor NoiseSpec; the process-noise
    numbers are tuning constants (per-step diagonal for the dynamics-based
    filters, white-jerk intensities for the kinematic ones).
    """

    dt: float = 1e-3
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    init_cov: float = 1e-9
    q_position: float = 1e-8
    q_rate: float = 1e-6
    q_accel: float = 1e-2
    angular_jerk_sigma: float = 50.0
    com_jerk_sigma: float = 5.0
    ukf: SigmaScaling = field(default_factory=SigmaScaling)

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        for name in ("init_cov", "q_position", "q_rate", "q_accel",
                     "angular_jerk_sigma", "com_jerk_sigma"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class FullEstimate:
    """One estimator output: full coordinates and rates at time t."""

    t: float
    q: np.ndarray
    qdot: np.ndarray


# ---------------------------------------------------------------------------
# constant model matrices (cached; all read-only)
# ---------------------------------------------------------------------------

_H_GYRO = np.array([[0.0, 1.0, 0.0]])
_H_ENC = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
_H_GYRO.flags.writeable = False
_H_ENC.flags.writeable = False


def _freeze(*arrays):
    for a in arrays:
        a.flags.writeable = False
    return arrays


@lru_cache(maxsize=None)
def _axis_model(dt, sigma_jerk):
    """Constant-jerk transition for one posture axis: F, Q = s^2 G G^T."""
    F = np.array([[1.0, dt, 0.5 * dt * dt],
                  [0.0, 1.0, dt],
                  [0.0, 0.0, 1.0]])
    G = np.array([dt ** 3 / 6.0, 0.5 * dt * dt, dt])
    Q = sigma_jerk ** 2 * np.outer(G, G)
    return _freeze(F, Q)


@lru_cache(maxsize=None)
def com_transition(dt, gravity, sigma_jerk):
    """Ballistic CoM model: F_c, Q_c and the constant gravity input u_c.

    Kronecker structure over the (x, y) axes; the acceleration rows are not
    propagated (third diagonal entry zero) -- each step re-imposes the
    ballistic acceleration through u_c and re-estimates the rest from the
    accelerometer.
    """
    block = np.array([[1.0, dt, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
    F = np.kron(np.eye(2), block)
    G = np.kron(np.eye(2), np.array([[dt ** 3 / 6.0], [0.5 * dt * dt], [dt]]))
    Q = sigma_jerk ** 2 * (G @ G.T)
    u = np.array([0.0, 0.0, 0.0,
                  -0.5 * gravity * dt * dt, -gravity * dt, -gravity])
    return _freeze(F, Q, u)


@lru_cache(maxsize=None)
def _full_noise(cfg: EstimatorConfig, n):
    dim = n + 2
    Q = np.diag(np.concatenate([np.full(dim, cfg.q_position),
                                np.full(dim, cfg.q_rate)]))
    s = cfg.noise
    R = np.diag(np.concatenate([
        [s.sigma_gyro ** 2, s.sigma_accel ** 2, s.sigma_accel ** 2],
        np.tile([s.sigma_encoder_pos ** 2, s.sigma_encoder_vel ** 2], n - 1),
    ]))
    return _freeze(Q, R)


@lru_cache(maxsize=None)
def _posture_noise(cfg: EstimatorConfig, n):
    Q = np.diag(np.concatenate([np.full(n, cfg.q_position),
                                np.full(n, cfg.q_rate),
                                np.full(n, cfg.q_accel)]))
    s = cfg.noise
    R = np.diag(np.concatenate([
        [s.sigma_gyro ** 2],
        np.tile([s.sigma_encoder_pos ** 2, s.sigma_encoder_vel ** 2], n - 1),
    ]))
    return _freeze(Q, R)


@lru_cache(maxsize=None)
def _axis_noise(cfg: EstimatorConfig):
    s = cfg.noise
    R0 = np.array([[s.sigma_gyro ** 2]])
    Ri = np.diag([s.sigma_encoder_pos ** 2, s.sigma_encoder_vel ** 2])
    Rc = np.diag([s.sigma_accel ** 2, s.sigma_accel ** 2])
    return _freeze(R0, Ri, Rc)


# ---------------------------------------------------------------------------
# architecture steps
# ---------------------------------------------------------------------------


def _stack_measurement(sample: SensorSample, with_accel):
    parts = [[sample.gyro]]
    if with_accel:
        parts.append(sample.accel)
    parts.append(sample.encoders.ravel())
    return np.concatenate(parts)


def full_dynamics_step(belief, torques, sample, params: ChainParameters,
                       cfg: EstimatorConfig, variant="ekf"):
    """EKF/UKF step over (q, qdot) with the full dynamics in both models."""
    n = params.n
    dt = cfg.dt
    g = params.gravity
    rx, ry = params.imu_offset

    def f(x):
        q, qd = x[: n + 2], x[n + 2:]
        qdd = forward_dynamics(params, q, qd, torques, "full")
        out = x.copy()
        out[: n + 2] += dt * qd
        out[n + 2:] += dt * qdd
        return out

    def h(x):
        q, qd = x[: n + 2], x[n + 2:]
        qdd = forward_dynamics(params, q, qd, torques, "full")
        c, s = np.cos(q[0]), np.sin(q[0])
        w, dw = qd[0], qdd[0]
        # specific force at the IMU point: the world acceleration of the
        # link-1 origin is (d'', h''), the lever arm adds R Lambda r_imu
        ax = qdd[n]
        ay = qdd[n + 1] + g
        out = np.empty(1 + 2 + 2 * (n - 1))
        out[0] = qd[0]
        out[1] = c * ax + s * ay + (-w * w * rx - dw * ry)
        out[2] = -s * ax + c * ay + (dw * rx - w * w * ry)
        out[3::2] = q[1:n]
        out[4::2] = qd[1:n]
        return out

    Q, R = _full_noise(cfg, n)
    z = _stack_measurement(sample, with_accel=True)
    if variant == "ekf":
        return ekf_step(belief, f, h, Q, R, z)
    return ukf_step(belief, f, h, Q, R, z, cfg.ukf)


def de_posture_step(belief, torques, sample, params: ChainParameters,
                    cfg: EstimatorConfig, variant="ekf"):
    """Posture EKF/UKF over (qbar, qbardot, qbarddot), reduced dynamics.

    The acceleration block is replaced wholesale by the reduced-dynamics
    evaluation each prediction; only gyro and encoders are measured.
    """
    n = params.n
    dt = cfg.dt

    def f(xp):
        qb, qbd = xp[:n], xp[n: 2 * n]
        acc = forward_dynamics(params, qb, qbd, torques, "reduced")
        out = np.empty(3 * n)
        out[:n] = qb + dt * qbd
        out[n: 2 * n] = qbd + dt * acc
        out[2 * n:] = acc
        return out

    def h(xp):
        out = np.empty(1 + 2 * (n - 1))
        out[0] = xp[n]
        out[1::2] = xp[1:n]
        out[2::2] = xp[n + 1: 2 * n]
        return out

    Q, R = _posture_noise(cfg, n)
    z = _stack_measurement(sample, with_accel=False)
    if variant == "ekf":
        return ekf_step(belief, f, h, Q, R, z)
    return ukf_step(belief, f, h, Q, R, z, cfg.ukf)


def bme_posture_step(bank, sample: SensorSample, cfg: EstimatorConfig):
    """Advance the bank of per-axis constant-jerk KFs.

    Axis 0 is corrected by the gyro rate alone; axis i >= 1 by its encoder
    pair.  No dynamics model and no torque input anywhere; the filters are
    mutually independent.
    """
    F, Q = _axis_model(cfg.dt, cfg.angular_jerk_sigma)
    R_gyro, R_enc, _ = _axis_noise(cfg)
    out = []
    for i, belief in enumerate(bank):
        b = kf_predict(belief, F, Q)
        if i == 0:
            b = kf_update(b, np.array([sample.gyro]), _H_GYRO, R_gyro)
        else:
            b = kf_update(b, sample.encoders[i - 1], _H_ENC, R_enc)
        out.append(b)
    return out


def com_tvkf_step(belief, posture, z_a, params: ChainParameters,
                  cfg: EstimatorConfig):
    """Time-varying KF step for the ballistic CoM state.

    The prediction is the constant-gravity jerk model; the accelerometer
    measurement is predicted from the cascade's current posture estimate.
    Only the two acceleration columns of H are nonzero, so position and
    velocity are corrected purely through accumulated cross-covariance.
    """
    qb, qbd, qbdd = posture
    F, Q, u = com_transition(cfg.dt, params.gravity, cfg.com_jerk_sigma)
    b = kf_predict(belief, F, Q, u)
    _, p1c_acc = chain_com_derivatives(params, qb, qbd, qbdd)
    c, s = np.cos(qb[0]), np.sin(qb[0])
    w, dw = qbd[0], qbdd[0]
    rx, ry = params.imu_offset
    ax = b.mean[2] - p1c_acc[0]
    ay = b.mean[5] + params.gravity - p1c_acc[1]
    pred = np.array([c * ax + s * ay - w * w * rx - dw * ry,
                     -s * ax + c * ay + dw * rx - w * w * ry])
    H = np.zeros((2, 6))
    H[0, 2] = c
    H[1, 2] = -s
    H[0, 5] = s
    H[1, 5] = c
    _, _, R = _axis_noise(cfg)
    return kf_update(b, z_a, H, R, predicted=pred)


def recover_reference_point(com_mean, posture, params: ChainParameters):
    """Reference point (d, h) and its rate from CoM and posture estimates."""
    qb, qbd, qbdd = posture
    p1c = chain_com(params, qb)
    vel, _ = chain_com_derivatives(params, qb, qbd, qbdd)
    return np.array([com_mean[0] - p1c[0], com_mean[3] - p1c[1],
                     com_mean[1] - vel[0], com_mean[4] - vel[1]])


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------


def _initial_belief(mean, init_cov):
    return GaussianBelief(np.asarray(mean, dtype=float),
                          init_cov * np.eye(len(mean)))


class _FullRunner:
    def __init__(self, params, cfg, initial: TruthRecord, variant):
        self.params, self.cfg, self.variant = params, cfg, variant
        mean = np.concatenate([initial.state.q, initial.state.qdot])
        self.belief = _initial_belief(mean, cfg.init_cov)

    def step(self, sample, torques):
        self.belief = full_dynamics_step(self.belief, torques, sample,
                                         self.params, self.cfg, self.variant)
        n = self.params.n
        return self.belief.mean[: n + 2], self.belief.mean[n + 2:]


class _CascadeRunner:
    """Shared CoM-filter half of the DE and BME cascades."""

    def __init__(self, params, cfg, initial: TruthRecord):
        self.params, self.cfg = params, cfg
        com0 = np.array([initial.com_pos[0], initial.com_vel[0], initial.com_acc[0],
                         initial.com_pos[1], initial.com_vel[1], initial.com_acc[1]])
        self.com = _initial_belief(com0, cfg.init_cov)

    def _finish(self, posture, sample):
        self.com = com_tvkf_step(self.com, posture, sample.accel,
                                 self.params, self.cfg)
        ref = recover_reference_point(self.com.mean, posture, self.params)
        qb, qbd, _ = posture
        q = np.concatenate([qb, ref[:2]])
        qdot = np.concatenate([qbd, ref[2:]])
        return q, qdot


class _DERunner(_CascadeRunner):
    def __init__(self, params, cfg, initial, variant):
        super().__init__(params, cfg, initial)
        self.variant = variant
        n = params.n
        mean = np.concatenate([initial.state.q[:n], initial.state.qdot[:n],
                               initial.qddot[:n]])
        self.posture = _initial_belief(mean, cfg.init_cov)

    def step(self, sample, torques):
        self.posture = de_posture_step(self.posture, torques, sample,
                                       self.params, self.cfg, self.variant)
        n = self.params.n
        m = self.posture.mean
        return self._finish((m[:n], m[n: 2 * n], m[2 * n:]), sample)


class _BMERunner(_CascadeRunner):
    def __init__(self, params, cfg, initial):
        super().__init__(params, cfg, initial)
        n = params.n
        self.bank = [
            _initial_belief([initial.state.q[i], initial.state.qdot[i],
                             initial.qddot[i]], cfg.init_cov)
            for i in range(n)
        ]

    def step(self, sample, torques):
        self.bank = bme_posture_step(self.bank, sample, self.cfg)
        m = np.array([b.mean for b in self.bank])
        return self._finish((m[:, 0], m[:, 1], m[:, 2]), sample)


def _make_runner(kind, params, cfg, initial):
    if kind == "full-ekf":
        return _FullRunner(params, cfg, initial, "ekf")
    if kind == "full-ukf":
        return _FullRunner(params, cfg, initial, "ukf")
    if kind == "de-ekf":
        return _DERunner(params, cfg, initial, "ekf")
    if kind == "de-ukf":
        return _DERunner(params, cfg, initial, "ukf")
    if kind == "bme":
        return _BMERunner(params, cfg, initial)
    raise ValueError(f"unknown estimator kind {kind!r}; expected one of {KINDS}")


def estimate_run(kind, samples, torques, initial: TruthRecord,
                 params: ChainParameters, cfg: EstimatorConfig):
    """Run one architecture over a sensor stream.

    ``samples[k]`` is the measurement at t_k and ``torques[k]`` the input
    held over the step into t_k.  Returns the estimate sequence (aligned
    with the sample timestamps) and the per-step wall-clock durations in
    seconds, measured around the complete step including the cascade
    recovery.
    """
    if len(samples) != len(torques):
        raise ValueError("samples and torques must have equal length")
    runner = _make_runner(kind, params, cfg, initial)
    estimates = []
    durations = np.empty(len(samples))
    for k, (sample, tau) in enumerate(zip(samples, torques)):
        t0 = time.perf_counter()
        try:
            q, qdot = runner.step(sample, tau)
        except (FilterError, RuntimeError) as exc:
            raise FilterError(f"{kind} failed at step {k} (t={sample.t:.6f}s): {exc}") from exc
        durations[k] = time.perf_counter() - t0
        estimates.append(FullEstimate(t=sample.t, q=q.copy(), qdot=qdot.copy()))
    return estimates, durations
