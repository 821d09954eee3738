import numpy as np
import pytest

from flychain import _kernels
from flychain.chain import ChainParameters, FullState
from flychain.estimators import EstimatorConfig
from flychain.simulation import (
    ParameterUncertainty,
    TrajectorySpec,
    WorldConfig,
    sample_sensor_stream,
    simulate_truth,
    trial_rng,
)


@pytest.fixture(scope="session", autouse=True)
def _compile_kernels():
    # pay the numba compile cost once, up front
    _kernels.warm_up()


def make_params(**overrides):
    """Two-link chain with the published parameter table."""
    fields = dict(
        masses=[1.5790, 1.4370],
        inertias=[0.0375, 0.0237],
        com_offset_x=[0.1443, 0.1268],
        com_offset_y=[-0.0055, 0.0001],
        link_lengths=[0.35],
        joint_damping=[0.20],
        imu_offset=[0.15, 0.05],
        gravity=9.81,
    )
    fields.update(overrides)
    return ChainParameters(**fields)


def make_random_params(n, rng):
    return ChainParameters(
        masses=rng.uniform(0.5, 3.0, n),
        inertias=rng.uniform(0.01, 0.1, n),
        com_offset_x=rng.uniform(-0.3, 0.3, n),
        com_offset_y=rng.uniform(-0.2, 0.2, n),
        link_lengths=rng.uniform(0.2, 0.6, n - 1),
        joint_damping=rng.uniform(0.0, 0.5, n - 1),
        imu_offset=rng.uniform(-0.2, 0.2, 2),
    )


def tumble_trajectory(n=2, actuated=True, amplitude=0.8, period=0.5,
                      phase=0.75 * np.pi):
    """Somersault-style trajectory spec for an n-link chain."""
    n_joints = n - 1
    amp = np.full(n_joints, amplitude if actuated else 0.0)
    periods = np.full(n_joints, period)
    phases = np.full(n_joints, phase)
    qdot0 = np.zeros(n + 2)
    qdot0[0] = -2.0 * np.pi
    qdot0[1:n] = amp * (2.0 * np.pi / periods) * np.cos(phases)
    qdot0[n] = 0.5
    qdot0[n + 1] = 3.0
    return TrajectorySpec(
        initial=FullState(np.zeros(n + 2), qdot0),
        joint_amplitude=amp,
        joint_period=periods,
        joint_phase=phases,
    )


def table_uncertainty():
    return ParameterUncertainty(
        masses=[0.0076, 0.0400],
        inertias=[0.0013, 0.0009],
        com_offset_x=[0.0051, 0.0034],
        com_offset_y=[0.0005, 0.0002],
        joint_damping=[0.04],
    )


@pytest.fixture(scope="session")
def params():
    return make_params()


@pytest.fixture(scope="session")
def world():
    return WorldConfig()


@pytest.fixture(scope="session")
def default_streams(params, world):
    """Truth records, noisy samples and torque stream of the default run."""
    traj = tumble_trajectory()
    records = simulate_truth(params, traj, world)
    samples = sample_sensor_stream(params, records, world.noise,
                                   trial_rng(1234, 0))
    torques = [rec.control.torques for rec in records[1:]]
    return records, samples, torques


@pytest.fixture(scope="session")
def estimator_config(world):
    return EstimatorConfig(dt=world.estimator_step, noise=world.noise,
                           angular_jerk_sigma=2000.0)
