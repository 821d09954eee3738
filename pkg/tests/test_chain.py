import numpy as np
import pytest

from flychain import chain
from flychain.chain import (
    ChainParameters,
    DynamicsError,
    angular_jacobian,
    angular_momentum_about_com,
    chain_com,
    chain_com_derivatives,
    coriolis_matrix,
    damping_matrix,
    forward_dynamics,
    gravity_vector,
    imu_point_acceleration,
    inverse_dynamics_reduced,
    link_com_position,
    linear_jacobian,
    mass_matrix,
    rotation,
)

from conftest import make_params, make_random_params


def single_link(m=2.0, inertia=0.1, r=0.5, a=0.0):
    return ChainParameters([m], [inertia], [r], [a], [], [], [0.0, 0.0])


def two_link_line(l2=1.0, r=0.5):
    """Unit-style chain: equal masses, CoM midway along each link."""
    return ChainParameters([1.0, 1.0], [0.05, 0.05], [r, r], [0.0, 0.0],
                           [l2], [0.1], [0.0, 0.0])


# ---------------------------------------------------------------------------
# rotation
# ---------------------------------------------------------------------------


def test_rotation_identity():
    assert np.allclose(rotation(0.0), np.eye(2))


def test_rotation_quarter_turn():
    assert np.allclose(rotation(np.pi / 2), [[0, -1], [1, 0]], atol=1e-15)


def test_rotation_inverse_property():
    rng = np.random.default_rng(7)
    for theta in rng.uniform(-10, 10, 20):
        assert np.abs(rotation(theta) @ rotation(-theta) - np.eye(2)).max() < 1e-14


# ---------------------------------------------------------------------------
# positions and the center of mass
# ---------------------------------------------------------------------------


def test_link_com_base_link_no_rotation():
    p = single_link()
    assert np.allclose(link_com_position(p, [0.0], 1), [0.5, 0.0])


def test_link_com_second_link_straight_chain():
    p = two_link_line()
    # joint 2 sits at (1, 0), CoM offset 0.5 along the link
    assert np.allclose(link_com_position(p, [0.0, 0.0], 2), [1.5, 0.0])


def test_link_com_rotated_offset():
    p = single_link()
    assert np.allclose(link_com_position(p, [np.pi / 2], 1), [0.0, 0.5],
                       atol=1e-15)


def test_link_com_index_out_of_range():
    p = single_link()
    with pytest.raises(IndexError):
        link_com_position(p, [0.0], 2)
    with pytest.raises(IndexError):
        link_com_position(p, [0.0], 0)


def test_chain_com_single_link_equals_link_com():
    p = single_link()
    qbar = np.array([0.7])
    assert np.allclose(chain_com(p, qbar), link_com_position(p, qbar, 1))


def test_chain_com_equal_mass_mean():
    p = two_link_line()
    assert np.allclose(chain_com(p, [0.0, 0.0]), [1.0, 0.0])


def test_chain_com_weighted_residual_vanishes():
    rng = np.random.default_rng(3)
    for n in (1, 2, 3, 5):
        p = make_random_params(n, rng)
        for _ in range(20):
            qbar = rng.uniform(-np.pi, np.pi, n)
            com = chain_com(p, qbar)
            res = sum(p.masses[i] * (link_com_position(p, qbar, i + 1) - com)
                      for i in range(n))
            assert np.abs(res).max() < 1e-12


def test_com_derivatives_stationary():
    p = make_params()
    vel, acc = chain_com_derivatives(p, [0.3, -0.2], [0.0, 0.0], [0.0, 0.0])
    assert np.allclose(vel, 0.0) and np.allclose(acc, 0.0)


def test_com_derivatives_circular_motion():
    # offset point on a spinning single link: v = r*w tangential,
    # a = r*w^2 centripetal
    p = single_link(m=1.0, r=0.5)
    w = 3.0
    vel, acc = chain_com_derivatives(p, [0.0], [w], [0.0])
    assert np.allclose(vel, [0.0, 0.5 * w], atol=1e-12)
    assert np.allclose(acc, [-0.5 * w * w, 0.0], atol=1e-6)


def test_com_velocity_matches_finite_difference_of_position():
    p = make_params()
    rng = np.random.default_rng(11)
    for _ in range(10):
        qbar = rng.uniform(-2, 2, 2)
        qbardot = rng.uniform(-4, 4, 2)
        dt = 1e-7
        fd = (chain_com(p, qbar + dt * qbardot)
              - chain_com(p, qbar - dt * qbardot)) / (2 * dt)
        vel, _ = chain_com_derivatives(p, qbar, qbardot, np.zeros(2))
        assert np.abs(fd - vel).max() < 1e-6 * max(1.0, np.abs(vel).max())


# ---------------------------------------------------------------------------
# Jacobians
# ---------------------------------------------------------------------------


def test_linear_jacobian_translation_block_is_identity():
    p = make_params()
    rng = np.random.default_rng(5)
    for _ in range(5):
        q = rng.uniform(-3, 3, 4)
        for i in (1, 2):
            J = linear_jacobian(p, q, i, "full")
            assert np.allclose(J[:, 2:], np.eye(2))


def test_linear_jacobian_single_link_hand_value():
    p = single_link()
    J = linear_jacobian(p, np.array([0.0, 0.0, 0.0]), 1, "full")
    assert np.allclose(J, [[0.0, 1.0, 0.0], [0.5, 0.0, 1.0]])


def test_linear_jacobian_matches_position_derivative():
    p = make_params()
    rng = np.random.default_rng(13)
    for _ in range(5):
        qbar = rng.uniform(-2, 2, 2)
        for i in (1, 2):
            J = linear_jacobian(p, qbar, i, "reduced")
            com = chain_com(p, qbar)
            for k in range(2):
                e = np.zeros(2)
                e[k] = 1e-7
                fd = ((link_com_position(p, qbar + e, i) - chain_com(p, qbar + e))
                      - (link_com_position(p, qbar - e, i) - chain_com(p, qbar - e))
                      ) / 2e-7
                assert np.abs(J[:, k] - fd).max() < 1e-6


def test_reduced_jacobians_mass_weighted_sum_vanishes():
    rng = np.random.default_rng(17)
    for n in (1, 2, 3, 5):
        p = make_random_params(n, rng)
        for _ in range(10):
            qbar = rng.uniform(-np.pi, np.pi, n)
            total = sum(p.masses[i] * linear_jacobian(p, qbar, i + 1, "reduced")
                        for i in range(n))
            assert np.abs(total).max() < 1e-10


def test_angular_jacobian_patterns():
    assert np.allclose(angular_jacobian(1, 4), [1, 0, 0, 0])
    assert np.allclose(angular_jacobian(3, 3), [1, 1, 1])
    assert np.allclose(angular_jacobian(2, 4), [1, 1, 0, 0])


# ---------------------------------------------------------------------------
# mass matrix
# ---------------------------------------------------------------------------


def test_mass_matrix_single_link_closed_form():
    p = single_link(m=2.0, inertia=0.1, r=0.5)
    M = mass_matrix(p, np.array([0.0, 0.0, 0.0]), "full")
    assert np.allclose(M, [[0.6, 0.0, 1.0], [0.0, 2.0, 0.0], [1.0, 0.0, 2.0]])


def test_mass_matrix_translation_block():
    p = make_params()
    rng = np.random.default_rng(19)
    for _ in range(10):
        M = mass_matrix(p, rng.uniform(-3, 3, 2), "full")
        assert np.allclose(M[2:, 2:], p.total_mass * np.eye(2), atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
@pytest.mark.parametrize("mode", ["full", "reduced"])
def test_mass_matrix_symmetric_positive_definite(n, mode):
    rng = np.random.default_rng(100 + n)
    p = make_random_params(n, rng)
    for _ in range(25):
        M = mass_matrix(p, rng.uniform(-np.pi, np.pi, n), mode)
        assert np.abs(M - M.T).max() < 1e-12
        assert np.linalg.eigvalsh(M).min() > 0.0


# ---------------------------------------------------------------------------
# Coriolis matrix
# ---------------------------------------------------------------------------


def test_coriolis_zero_rates():
    p = make_params()
    C = coriolis_matrix(p, [0.4, -0.8], np.zeros(4), "full")
    assert np.allclose(C, 0.0)


def test_coriolis_single_link_reduced_is_zero():
    p = single_link()
    C = coriolis_matrix(p, [0.9], np.array([2.0]), "reduced")
    assert np.abs(C).max() < 1e-8


@pytest.mark.parametrize("mode,dim_extra", [("full", 2), ("reduced", 0)])
def test_coriolis_skew_symmetry(mode, dim_extra):
    # x^T (Mdot - 2C) x = 0 along any trajectory direction
    rng = np.random.default_rng(23)
    for n in (2, 3):
        p = make_random_params(n, rng)
        dim = n + dim_extra
        for _ in range(10):
            qbar = rng.uniform(-np.pi, np.pi, n)
            qdot = rng.uniform(-3, 3, dim)
            C = coriolis_matrix(p, qbar, qdot, mode)
            d = 1e-6
            Mp = mass_matrix(p, qbar + d * qdot[:n], mode)
            Mm = mass_matrix(p, qbar - d * qdot[:n], mode)
            Mdot = (Mp - Mm) / (2 * d)
            x = rng.standard_normal(dim)
            assert abs(x @ (Mdot - 2 * C) @ x) < 1e-6


# ---------------------------------------------------------------------------
# gravity and damping
# ---------------------------------------------------------------------------


def test_gravity_single_link_hand_value():
    p = single_link(m=2.0, inertia=0.1, r=0.5)
    g = gravity_vector(p, np.array([0.0, 0.0, 0.0]), "full")
    assert np.allclose(g, [9.81, 0.0, 19.62])


def test_gravity_height_component_is_total_weight():
    p = make_params()
    rng = np.random.default_rng(29)
    for _ in range(10):
        g = gravity_vector(p, rng.uniform(-3, 3, 2), "full")
        assert np.isclose(g[-1], p.total_mass * p.gravity)
        assert np.isclose(g[-2], 0.0)


def test_gravity_reduced_vanishes():
    rng = np.random.default_rng(31)
    for n in (1, 2, 3, 5):
        p = make_random_params(n, rng)
        for _ in range(25):
            g = gravity_vector(p, rng.uniform(-np.pi, np.pi, n), "reduced")
            assert np.abs(g).max() < 1e-10


def test_damping_matrix_patterns():
    p = ChainParameters([1.0, 1.0], [0.05, 0.05], [0.1, 0.1], [0.0, 0.0],
                        [0.3], [0.2], [0.0, 0.0])
    assert np.allclose(damping_matrix(p, "full"), np.diag([0.0, 0.2, 0.0, 0.0]))
    assert np.allclose(damping_matrix(p, "reduced"), np.diag([0.0, 0.2]))

    p1 = single_link()
    assert np.allclose(damping_matrix(p1, "full"), np.zeros((3, 3)))

    p3 = ChainParameters([1.0] * 3, [0.05] * 3, [0.1] * 3, [0.0] * 3,
                         [0.3, 0.3], [0.4, 0.7], [0.0, 0.0])
    assert np.allclose(damping_matrix(p3, "reduced"), np.diag([0.0, 0.4, 0.7]))


# ---------------------------------------------------------------------------
# forward / inverse dynamics
# ---------------------------------------------------------------------------


def test_forward_dynamics_free_fall():
    p = make_params()
    qdd = forward_dynamics(p, np.array([0.3, -0.2, 0.0, 0.0]), np.zeros(4),
                           np.zeros(1), "full")
    expect = np.array([0.0, 0.0, 0.0, -p.gravity])
    assert np.abs(qdd - expect).max() < 1e-10


def test_forward_dynamics_reduced_equilibrium():
    p = make_params(joint_damping=[0.0])
    qdd = forward_dynamics(p, np.array([0.5, 1.2]), np.zeros(2), np.zeros(1),
                           "reduced")
    assert np.abs(qdd).max() < 1e-10


def test_forward_dynamics_internal_torque_reaction():
    # an internal joint torque cannot create net rotation: the base and the
    # joint accelerate in opposite senses from rest
    p = make_params(joint_damping=[0.0])
    qdd = forward_dynamics(p, np.array([0.3, 0.4]), np.zeros(2),
                           np.array([2.0]), "reduced")
    assert qdd[0] * qdd[1] < 0.0


def test_forward_dynamics_matches_reference_assembly():
    # kernel route against the matrix-op route, both modes
    rng = np.random.default_rng(37)
    p = make_params()
    for mode, dim in (("full", 4), ("reduced", 2)):
        for _ in range(25):
            qbar = rng.uniform(-3, 3, 2)
            q = qbar if mode == "reduced" else np.concatenate(
                [qbar, rng.uniform(-1, 1, 2)])
            qdot = rng.uniform(-4, 4, dim)
            tau = rng.uniform(-3, 3, 1)
            acc = forward_dynamics(p, q, qdot, tau, mode)
            u = np.zeros(dim)
            u[1] = tau[0]
            rhs = (u - coriolis_matrix(p, qbar, qdot, mode) @ qdot
                   - damping_matrix(p, mode) @ qdot
                   - gravity_vector(p, qbar, mode))
            ref = np.linalg.solve(mass_matrix(p, qbar, mode), rhs)
            assert np.abs(acc - ref).max() < 1e-7


def test_forward_dynamics_shape_errors():
    p = make_params()
    with pytest.raises(ValueError):
        forward_dynamics(p, np.zeros(3), np.zeros(3), np.zeros(1), "full")
    with pytest.raises(ValueError):
        forward_dynamics(p, np.zeros(2), np.zeros(2), np.zeros(3), "reduced")
    with pytest.raises(ValueError):
        forward_dynamics(p, np.zeros(4), np.zeros(4), np.zeros(1), "sideways")


def test_forward_dynamics_nonfinite_state_raises():
    p = make_params()
    with pytest.raises(DynamicsError):
        forward_dynamics(p, np.array([np.nan, 0.0, 0.0, 0.0]), np.zeros(4),
                         np.zeros(1), "full")


def test_inverse_dynamics_equilibrium_zero_torque():
    p = make_params(joint_damping=[0.0])
    u = inverse_dynamics_reduced(p, [0.5, -0.3], np.zeros(2), np.zeros(2))
    assert np.abs(u).max() < 1e-10


def test_inverse_dynamics_round_trip():
    # forward then inverse: joint torques recovered, base slot at zero
    # (the forward solution conserves angular momentum by construction)
    rng = np.random.default_rng(41)
    p = make_params()
    for _ in range(100):
        qbar = rng.uniform(-3, 3, 2)
        qbardot = rng.uniform(-5, 5, 2)
        tau = rng.uniform(-5, 5, 1)
        qdd = forward_dynamics(p, qbar, qbardot, tau, "reduced")
        u = inverse_dynamics_reduced(p, qbar, qbardot, qdd)
        assert abs(u[1] - tau[0]) < 1e-9
        assert abs(u[0]) < 1e-9


def test_inverse_dynamics_realizes_desired_acceleration():
    # applying the full returned generalized force reproduces the request
    rng = np.random.default_rng(43)
    p = make_params()
    for _ in range(20):
        qbar = rng.uniform(-3, 3, 2)
        qbardot = rng.uniform(-5, 5, 2)
        qddot_des = rng.uniform(-10, 10, 2)
        u = inverse_dynamics_reduced(p, qbar, qbardot, qddot_des)
        rhs = (u - coriolis_matrix(p, qbar, qbardot, "reduced") @ qbardot
               - damping_matrix(p, "reduced") @ qbardot
               - gravity_vector(p, qbar, "reduced"))
        back = np.linalg.solve(mass_matrix(p, qbar, "reduced"), rhs)
        assert np.abs(back - qddot_des).max() < 1e-7


# ---------------------------------------------------------------------------
# IMU point acceleration
# ---------------------------------------------------------------------------


def test_imu_acceleration_rigid_free_fall():
    p = make_params(imu_offset=[0.0, 0.0])
    acc = imu_point_acceleration(p, [0.2, 0.1], np.zeros(2), np.zeros(2),
                                 np.array([0.0, -9.81]))
    assert np.allclose(acc, [0.0, -9.81], atol=1e-12)


def test_imu_acceleration_centripetal_term():
    # cancel the chain's own CoM terms to isolate the lever arm:
    # the rotating mount contributes -w^2 * r toward the hinge
    p = make_params(imu_offset=[0.1, 0.0])
    qbar, qbardot, qbarddot = [0.0, 0.0], [2.0, 0.0], [0.0, 0.0]
    _, p1c_acc = chain_com_derivatives(p, qbar, qbardot, qbarddot)
    acc = imu_point_acceleration(p, qbar, qbardot, qbarddot, p1c_acc)
    assert np.allclose(acc, [-0.4, 0.0], atol=1e-9)


def test_imu_acceleration_zero_offset_reduces_to_com_terms():
    p = make_params(imu_offset=[0.0, 0.0])
    rng = np.random.default_rng(47)
    qbar, qbardot, qbarddot = rng.uniform(-2, 2, (3, 2))
    com_acc = rng.uniform(-5, 5, 2)
    _, p1c_acc = chain_com_derivatives(p, qbar, qbardot, qbarddot)
    acc = imu_point_acceleration(p, qbar, qbardot, qbarddot, com_acc)
    assert np.allclose(acc, com_acc - p1c_acc)


# ---------------------------------------------------------------------------
# parameter validation and bookkeeping helpers
# ---------------------------------------------------------------------------


def test_parameter_validation():
    with pytest.raises(ValueError):
        make_params(masses=[1.0, -0.5])
    with pytest.raises(ValueError):
        make_params(inertias=[0.1, 0.0])
    with pytest.raises(ValueError):
        make_params(link_lengths=[-0.3])
    with pytest.raises(ValueError):
        make_params(joint_damping=[-0.1])
    with pytest.raises(ValueError):
        make_params(gravity=0.0)
    with pytest.raises(ValueError):
        ChainParameters([], [], [], [], [], [], [0.0, 0.0])
    with pytest.raises(ValueError):
        make_params(joint_damping=[0.1, 0.2])  # must be n-1 entries


def test_parameters_are_immutable():
    p = make_params()
    with pytest.raises((ValueError, AttributeError)):
        p.masses[0] = 2.0


def test_angular_momentum_of_rigid_spin():
    # straight chain spinning rigidly: L = (sum I_i + sum m_i r_rel^2) * w
    p = two_link_line()
    w = 2.0
    L = angular_momentum_about_com(p, [0.0, 0.0], [w, 0.0])
    com = chain_com(p, [0.0, 0.0])
    expect = w * (p.inertias.sum()
                  + sum(p.masses[i]
                        * np.sum((link_com_position(p, [0.0, 0.0], i + 1) - com) ** 2)
                        for i in range(2)))
    assert np.isclose(L, expect)
