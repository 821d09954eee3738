"""Ground-truth simulation, sensor synthesis and parameter perturbation.

The truth trajectory integrates the full free-flight dynamics with classical
RK4 at a fine step.  Joint torques come from a computed-torque law: at every
derivative evaluation the reduced-coordinate inverse dynamics is applied to
the prescribed joint acceleration profile (base-angle slot held at zero --
nothing can actuate it in flight) and the joint components are fed back in.
Evaluating the law inside each integrator stage keeps the system a smooth
ODE, so refining the step converges at full integrator order.

Sensors mimic a body-mounted IMU plus per-joint absolute encoders, each with
additive zero-mean Gaussian noise.  Monte-Carlo robustness studies draw
perturbed chain parameters uniformly from bounded intervals; every trial gets
its own counter-based RNG substream so serial and parallel runs agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels, chain
from .chain import (
    ChainParameters,
    ControlInput,
    FullState,
    chain_com,
    chain_com_derivatives,
    forward_dynamics,
    imu_point_acceleration,
    rotation,
)


class SimulationError(RuntimeError):
    """Integration produced a non-finite state or derivative."""


@dataclass(frozen=True)
class NoiseSpec:
    """Standard deviations of the additive sensor noise."""

    sigma_gyro: float = 5e-3
    sigma_accel: float = 5e-2
    sigma_encoder_pos: float = 1e-3
    sigma_encoder_vel: float = 1e-2

    def __post_init__(self):
        for name in ("sigma_gyro", "sigma_accel", "sigma_encoder_pos",
                     "sigma_encoder_vel"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class WorldConfig:
    """Integration and sampling rates plus the sensor noise levels."""

    truth_step: float = 1e-4
    estimator_step: float = 1e-3
    duration: float = 1.0
    seed: int = 0
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        if self.truth_step <= 0.0 or self.duration <= 0.0:
            raise ValueError("truth_step and duration must be positive")
        ratio = self.estimator_step / self.truth_step
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError(
                "estimator_step must be a positive integer multiple of truth_step"
            )

    @property
    def substeps(self):
        return int(round(self.estimator_step / self.truth_step))

    @property
    def n_records(self):
        return int(round(self.duration / self.estimator_step))


@dataclass(frozen=True)
class TrajectorySpec:
    """Initial full state plus sinusoidal joint acceleration references.

    Joint i follows amplitude * sin(2*pi*t/period + phase) as its commanded
    acceleration profile (only the curvature enters the computed-torque law).
    All-zero amplitudes mean an unactuated, freely tumbling chain: no torque
    is applied at all.
    """

    initial: FullState
    joint_amplitude: np.ndarray
    joint_period: np.ndarray
    joint_phase: np.ndarray

    def __post_init__(self):
        for name in ("joint_amplitude", "joint_period", "joint_phase"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if np.any(self.joint_period <= 0.0):
            raise ValueError("joint periods must be positive")
        n_joints = self.initial.q.size - 3
        for name in ("joint_amplitude", "joint_period", "joint_phase"):
            if getattr(self, name).shape != (n_joints,):
                raise ValueError(f"{name} must have one entry per joint")

    @property
    def actuated(self):
        return bool(np.any(self.joint_amplitude != 0.0))


@dataclass(frozen=True)
class ParameterUncertainty:
    """Half-widths of the bounded fabrication uncertainty, per parameter.

    Entries parallel the ChainParameters arrays; anything left at zero (or a
    whole field omitted) is not perturbed.
    """

    masses: np.ndarray | None = None
    inertias: np.ndarray | None = None
    com_offset_x: np.ndarray | None = None
    com_offset_y: np.ndarray | None = None
    joint_damping: np.ndarray | None = None

    def __post_init__(self):
        for name in ("masses", "inertias", "com_offset_x", "com_offset_y",
                     "joint_damping"):
            val = getattr(self, name)
            if val is None:
                continue
            arr = np.asarray(val, dtype=float)
            if np.any(arr < 0.0):
                raise ValueError(f"{name} half-widths must be non-negative")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


@dataclass
class SensorSample:
    """One time-stamped measurement frame: gyro, specific force, encoders."""

    t: float
    gyro: float
    accel: np.ndarray
    encoders: np.ndarray  # (n-1, 2): angle, rate per joint


@dataclass
class TruthRecord:
    """Ground truth at one estimator tick, with derived CoM state."""

    t: float
    state: FullState
    qddot: np.ndarray
    control: ControlInput
    com_pos: np.ndarray
    com_vel: np.ndarray
    com_acc: np.ndarray


def rk4_step(derivative_fn, state, dt):
    """One classical 4th-order Runge-Kutta step of d(state)/dt = f(state)."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    k1 = derivative_fn(state)
    k2 = derivative_fn(state + 0.5 * dt * k1)
    k3 = derivative_fn(state + 0.5 * dt * k2)
    k4 = derivative_fn(state + dt * k3)
    out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.isfinite(out).all():
        raise SimulationError("non-finite derivative in RK4 step")
    return out


# Critically-damped gains of the joint-tracking law (natural frequency
# 20 rad/s, comfortably above the default 2 Hz joint reference).
TRACK_KP = 400.0
TRACK_KD = 40.0


def _tracking_accel(traj: TrajectorySpec, qbar, qbardot, t):
    """Commanded joint accelerations: reference plus PD tracking terms."""
    w = 2.0 * np.pi / traj.joint_period
    th = w * t + traj.joint_phase
    ref = traj.initial.q[1:-2] + traj.joint_amplitude * (
        np.sin(th) - np.sin(traj.joint_phase))
    dref = traj.joint_amplitude * w * np.cos(th)
    ddref = -traj.joint_amplitude * w ** 2 * np.sin(th)
    return (ddref + TRACK_KD * (dref - qbardot[1:])
            + TRACK_KP * (ref - qbar[1:]))


def synthesize_torques(params: ChainParameters, traj: TrajectorySpec, qbar,
                       qbardot, t):
    """Computed-torque law realizing the prescribed joint sinusoids.

    The reduced inverse dynamics is evaluated at the current state with the
    tracking accelerations in the joint slots and zero in the (unactuated)
    base slot; only the joint components are applied.
    """
    if not traj.actuated:
        return np.zeros(params.n - 1)
    qddot_des = np.zeros(params.n)
    qddot_des[1:] = _tracking_accel(traj, qbar, qbardot, t)
    return chain.inverse_dynamics_reduced(params, qbar, qbardot, qddot_des)[1:]


def _make_truth_derivative(params: ChainParameters, traj: TrajectorySpec):
    """Derivative of the time-augmented state (q, qdot, t).

    One fused kernel call serves both the computed-torque law and the
    full-dynamics solve; this is the hot path of every simulation.
    """
    m, iw, r, a, lengths = params._kargs
    damp_full = params._damping_vec_full
    damp_red = params._damping_vec_reduced
    g, mt = params.gravity, params.total_mass
    omega = np.ascontiguousarray(2.0 * np.pi / traj.joint_period)
    amp, phase = traj.joint_amplitude, traj.joint_phase
    ref0 = np.ascontiguousarray(traj.initial.q[1: params.n])
    actuated = traj.actuated

    def derivative(y):
        out, ok = _kernels.truth_rates(m, iw, r, a, lengths, damp_full,
                                       damp_red, g, mt, amp, omega, phase,
                                       ref0, TRACK_KP, TRACK_KD, actuated, y)
        if not ok:
            raise SimulationError("dynamics solve failed (mass matrix not PD)")
        return out

    return derivative


def _record(params, traj, q, qdot, t):
    n = params.n
    qbar, qbardot = q[:n], qdot[:n]
    tau = synthesize_torques(params, traj, qbar, qbardot, t)
    qddot = forward_dynamics(params, q, qdot, tau, "full")
    com_vel, com_acc = chain_com_derivatives(params, qbar, qbardot, qddot[:n])
    return TruthRecord(
        t=t,
        state=FullState(q.copy(), qdot.copy()),
        qddot=qddot,
        control=ControlInput(tau),
        com_pos=q[n: n + 2] + chain_com(params, qbar),
        com_vel=qdot[n: n + 2] + com_vel,
        com_acc=qddot[n: n + 2] + com_acc,
    )


def simulate_truth(params: ChainParameters, traj: TrajectorySpec,
                   world: WorldConfig):
    """Integrate the full dynamics; emit TruthRecords at the estimator rate.

    Record k sits at t = k * estimator_step, record 0 being the initial
    state.  Derived CoM fields follow from the state and its accelerations;
    in free flight the world-frame CoM acceleration is exactly (0, -g).
    """
    n = params.n
    if traj.initial.q.size != n + 2:
        raise ValueError("trajectory initial state does not match chain size")
    deriv = _make_truth_derivative(params, traj)
    y = np.concatenate([traj.initial.q, traj.initial.qdot, [0.0]])
    records = [_record(params, traj, y[: n + 2], y[n + 2: 2 * n + 4], 0.0)]
    substeps = world.substeps
    dt = world.truth_step
    for k in range(1, world.n_records + 1):
        for j in range(substeps):
            try:
                y = rk4_step(deriv, y, dt)
            except SimulationError as exc:
                step = (k - 1) * substeps + j
                raise SimulationError(
                    f"integration blew up at truth step {step} "
                    f"(t={step * dt:.6f}s): {exc}"
                ) from exc
        t = k * world.estimator_step
        records.append(_record(params, traj, y[: n + 2], y[n + 2: 2 * n + 4], t))
    return records


def sample_sensors(params: ChainParameters, record: TruthRecord,
                   noise: NoiseSpec, rng: np.random.Generator):
    """Draw one noisy sensor frame from a truth record.

    Gyro reads the base angular rate; the accelerometer reads the specific
    force at the IMU point rotated into the body frame; each encoder reads
    its joint angle and rate.  All channels carry independent zero-mean
    Gaussian noise at the configured levels.
    """
    n = params.n
    qbar = record.state.q[:n]
    qbardot = record.state.qdot[:n]
    qbarddot = record.qddot[:n]
    imu_acc = imu_point_acceleration(params, qbar, qbardot, qbarddot,
                                     record.com_acc)
    specific = rotation(qbar[0]).T @ (imu_acc - np.array([0.0, -params.gravity]))
    gyro = qbardot[0] + noise.sigma_gyro * rng.standard_normal()
    accel = specific + noise.sigma_accel * rng.standard_normal(2)
    enc = np.empty((n - 1, 2))
    enc[:, 0] = qbar[1:] + noise.sigma_encoder_pos * rng.standard_normal(n - 1)
    enc[:, 1] = qbardot[1:] + noise.sigma_encoder_vel * rng.standard_normal(n - 1)
    return SensorSample(t=record.t, gyro=float(gyro), accel=accel, encoders=enc)


def sample_sensor_stream(params, records, noise, rng):
    """Noisy samples for a whole record sequence, in record order."""
    return [sample_sensors(params, rec, noise, rng) for rec in records]


def _perturb(rng, nominal, half):
    # zero half-widths draw nothing, so a degenerate Monte-Carlo trial
    # consumes the same RNG stream as a known-parameters run
    if half is None or not np.any(half):
        return nominal.copy()
    half = np.broadcast_to(half, nominal.shape)
    return nominal + half * rng.uniform(-1.0, 1.0, size=nominal.shape)


def perturb_parameters(nominal: ChainParameters, unc: ParameterUncertainty,
                       rng: np.random.Generator):
    """Chain parameters drawn uniformly from the bounded uncertainty box.

    Draw order is fixed (masses, inertias, CoM offsets, damping) so a given
    RNG state always yields the same sample.  A perturbation that violates
    the parameter invariants raises rather than silently clipping: that is a
    configuration mistake, not a sampling outcome.
    """
    try:
        return ChainParameters(
            masses=_perturb(rng, nominal.masses, unc.masses),
            inertias=_perturb(rng, nominal.inertias, unc.inertias),
            com_offset_x=_perturb(rng, nominal.com_offset_x, unc.com_offset_x),
            com_offset_y=_perturb(rng, nominal.com_offset_y, unc.com_offset_y),
            link_lengths=nominal.link_lengths.copy(),
            joint_damping=_perturb(rng, nominal.joint_damping, unc.joint_damping),
            imu_offset=nominal.imu_offset.copy(),
            gravity=nominal.gravity,
        )
    except ValueError as exc:
        raise ValueError(
            f"parameter perturbation left the physical domain: {exc}"
        ) from exc


def trial_rng(master_seed, trial_index):
    """Counter-based per-trial RNG substream.

    Philox keyed by (master seed, trial index) makes every trial's stream
    independent of execution order, so worker pools reproduce serial runs
    bit for bit.
    """
    seq = np.random.SeedSequence(entropy=int(master_seed),
                                 spawn_key=(int(trial_index),))
    return np.random.Generator(np.random.Philox(seq))
