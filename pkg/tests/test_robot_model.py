"""Model checks: kinematic maps, Jacobians, reduced dynamics, energetics.

Everything analytic is held to a finite-difference or energy-based
counterpart so the recursive propagation never certifies itself.
"""

import numpy as np
import pytest

from colift.spatial import quat_conj, quat_log, quat_mul


def _random_state(model, rng, arm_scale=1.0):
    q = np.zeros(model.nq)
    q[0:2] = rng.uniform(-1.0, 1.0, 2)
    q[2] = rng.uniform(-np.pi, np.pi)
    q[3:5] = rng.uniform(-3.0, 3.0, 2)
    q[5:] = rng.uniform(-arm_scale, arm_scale, model.n_arm)
    eta = rng.uniform(-0.8, 0.8, model.nv)
    return q, eta


class TestReducedCoordinates:
    def test_dimensions(self, model):
        assert model.n_arm == 7
        assert model.nq == 12
        assert model.nv == 9

    def test_motion_map_satisfies_constraints(self, model, rng):
        # every admissible velocity must sit in the Pfaffian null space
        for _ in range(10):
            q, eta = _random_state(model, rng)
            qd = model.motion_map(q) @ eta
            np.testing.assert_allclose(
                model.constraint_matrix(q) @ qd, np.zeros(3), atol=1e-12
            )

    def test_motion_map_rate_matches_finite_difference(self, model, rng):
        q, eta = _random_state(model, rng)
        qd = model.motion_map(q) @ eta
        h = 1e-6
        fd = (model.motion_map(q + qd * h) - model.motion_map(q - qd * h)) / (2 * h)
        np.testing.assert_allclose(model.motion_map_rate(q, eta), fd, atol=1e-8)

    def test_equal_wheel_speeds_drive_straight(self, model):
        q = np.zeros(model.nq)
        q[2] = 0.7
        eta = np.zeros(model.nv)
        eta[0] = eta[1] = 2.0
        dt = 1e-3
        for _ in range(1000):
            q, eta = model.integrate(q, eta, np.zeros(model.nv), dt)
        r = model.desc.base.wheel_radius
        dist = r * 2.0 * 1.0  # wheel radius * wheel speed * time
        np.testing.assert_allclose(q[0], dist * np.cos(0.7), atol=1e-9)
        np.testing.assert_allclose(q[1], dist * np.sin(0.7), atol=1e-9)
        np.testing.assert_allclose(q[2], 0.7, atol=1e-12)

    def test_unequal_wheel_speeds_trace_a_circle(self, model):
        q = np.zeros(model.nq)
        eta = np.zeros(model.nv)
        eta[0], eta[1] = 3.0, 1.0
        r, b = model.desc.base.wheel_radius, model.desc.base.half_track
        v = 0.5 * r * (eta[0] + eta[1])
        w = r * (eta[0] - eta[1]) / (2.0 * b)
        t, dt = 0.0, 1e-4
        for _ in range(20000):
            q, eta = model.integrate(q, eta, np.zeros(model.nv), dt)
            t += dt
        # unicycle closed form from the origin with zero initial heading;
        # the integrator is first order, so position carries an O(dt) error
        np.testing.assert_allclose(q[0], (v / w) * np.sin(w * t), atol=5e-5)
        np.testing.assert_allclose(q[1], (v / w) * (1 - np.cos(w * t)), atol=5e-5)
        np.testing.assert_allclose(q[2], w * t, atol=1e-9)


class TestJacobians:
    def test_ee_jacobian_matches_pose_finite_difference(self, model, rng):
        q, _ = _random_state(model, rng)
        J = model.ee_jacobian(q)
        h = 1e-7
        for i in range(model.nq):
            qp, qm = q.copy(), q.copy()
            qp[i] += h
            qm[i] -= h
            pp, pm = model.ee_pose(qp), model.ee_pose(qm)
            v_fd = (pp.position - pm.position) / (2 * h)
            w_fd = quat_log(quat_mul(pp.quaternion, quat_conj(pm.quaternion))) / (
                2 * h
            )
            np.testing.assert_allclose(J[:3, i], v_fd, atol=1e-6)
            np.testing.assert_allclose(J[3:, i], w_fd, atol=1e-6)

    def test_reduced_jacobian_composes_motion_map(self, model, rng):
        q, _ = _random_state(model, rng)
        np.testing.assert_allclose(
            model.reduced_ee_jacobian(q),
            model.ee_jacobian(q) @ model.motion_map(q),
            atol=1e-12,
        )

    def test_ee_twist_is_reduced_jacobian_times_eta(self, model, rng):
        q, eta = _random_state(model, rng)
        np.testing.assert_allclose(
            model.ee_twist(q, eta), model.reduced_ee_jacobian(q) @ eta, atol=1e-10
        )

    def test_bias_accel_is_twist_rate_at_constant_eta(self, model, rng):
        q, eta = _random_state(model, rng)
        qd = model.motion_map(q) @ eta
        h = 1e-6
        fd = (
            model.ee_twist(q + qd * h, eta) - model.ee_twist(q - qd * h, eta)
        ) / (2 * h)
        np.testing.assert_allclose(model.ee_bias_accel(q, eta), fd, atol=1e-6)

    def test_wheel_spin_does_not_move_the_arm(self, model, rng):
        q, _ = _random_state(model, rng)
        J = model.ee_jacobian(q)
        np.testing.assert_array_equal(J[:, 3:5], np.zeros((6, 2)))


class TestDynamics:
    def test_mass_matrix_symmetric_positive_definite(self, model, rng):
        for _ in range(5):
            q, eta = _random_state(model, rng)
            M, _, _ = model.reduced_dynamics(q, eta)
            np.testing.assert_allclose(M, M.T, atol=1e-10)
            assert np.linalg.eigvalsh(M)[0] > 1e-6

    def test_inverse_dynamics_linear_in_acceleration(self, model, rng):
        q, _ = _random_state(model, rng)
        qd = rng.normal(size=model.nq)
        qdd = rng.normal(size=model.nq)
        lhs = model.inverse_dynamics_full(q, qd, qdd) - model.inverse_dynamics_full(
            q, qd, np.zeros(model.nq)
        )
        np.testing.assert_allclose(lhs, model.mass_matrix_full(q) @ qdd, atol=1e-8)

    def test_gravity_is_potential_gradient(self, model, rng):
        q, _ = _random_state(model, rng)
        g_full = model.gravity_full(q)
        h = 1e-6
        for i in range(model.nq):
            qp, qm = q.copy(), q.copy()
            qp[i] += h
            qm[i] -= h
            fd = (model.potential_energy(qp) - model.potential_energy(qm)) / (2 * h)
            assert g_full[i] == pytest.approx(fd, abs=1e-5)

    def test_kinetic_energy_agrees_bodywise(self, model, rng):
        # mass-matrix route vs per-body CoM formula: independent derivations
        for _ in range(5):
            q, eta = _random_state(model, rng)
            a = model.kinetic_energy(q, eta)
            b = model.kinetic_energy_bodywise(q, eta)
            assert a == pytest.approx(b, rel=1e-10)

    def test_forward_dynamics_inverts_reduced_dynamics(self, model, rng):
        q, eta = _random_state(model, rng)
        target = rng.normal(size=model.nv)
        M, c, g = model.reduced_dynamics(q, eta)
        tau = M @ target + c + g
        np.testing.assert_allclose(
            model.forward_dynamics(q, eta, tau), target, atol=1e-9
        )

    def test_ee_wrench_maps_through_reduced_jacobian(self, model, rng):
        q, eta = _random_state(model, rng)
        tau = rng.normal(size=model.nv)
        F = rng.normal(size=6)
        via_wrench = model.forward_dynamics(q, eta, tau, F_ext=F)
        via_torque = model.forward_dynamics(
            q, eta, tau, tau_ext=model.reduced_ee_jacobian(q).T @ F
        )
        np.testing.assert_allclose(via_wrench, via_torque, atol=1e-10)

    def test_hanging_posture_has_zero_bias(self, model):
        # straight-down arm: every CoM sits on a vertical axis through its
        # joint, so gravity exerts no generalized force
        q = np.zeros(model.nq)
        q[5:] = [0.0, np.pi, 0.0, 0.0, 0.0, 0.0, 0.0]
        _, c, g = model.reduced_dynamics(q, np.zeros(model.nv))
        np.testing.assert_allclose(c, np.zeros(model.nv), atol=1e-12)
        np.testing.assert_allclose(g, np.zeros(model.nv), atol=1e-12)


class TestControlQuantities:
    def test_matches_individual_queries(self, model, rng):
        q, eta = _random_state(model, rng)
        tq = model.control_quantities(q, eta)
        M, c, g = model.reduced_dynamics(q, eta)
        np.testing.assert_allclose(tq.M, M, atol=1e-9)
        np.testing.assert_allclose(tq.bias, c + g, atol=1e-8)
        np.testing.assert_allclose(tq.J_red, model.reduced_ee_jacobian(q), atol=1e-10)
        np.testing.assert_allclose(
            tq.bias_accel, model.ee_bias_accel(q, eta), atol=1e-9
        )
        pose = model.ee_pose(q)
        np.testing.assert_allclose(tq.pose.position, pose.position, atol=1e-12)
        np.testing.assert_allclose(
            model.ee_twist(q, eta), tq.twist, atol=1e-10
        )


class TestLimitsAndHome:
    def test_limit_vectors_cover_all_actuators(self, model):
        assert model.torque_limits().shape == (model.nv,)
        assert model.accel_limits().shape == (model.nv,)
        assert np.all(model.torque_limits() > 0)
        assert np.all(model.accel_limits() > 0)

    def test_wheel_limits_lead_the_vectors(self, model):
        base = model.desc.base
        np.testing.assert_array_equal(
            model.torque_limits()[:2], [base.wheel_torque_limit] * 2
        )
        np.testing.assert_array_equal(
            model.accel_limits()[:2], [base.wheel_accel_limit] * 2
        )

    def test_home_configuration(self, model):
        q, eta = model.home_configuration()
        np.testing.assert_array_equal(q[:5], np.zeros(5))
        np.testing.assert_array_equal(q[5:], model.desc.home_arm)
        np.testing.assert_array_equal(eta, np.zeros(model.nv))
        pose = model.ee_pose(q)
        # workable transport height, EE ahead of the base, level orientation
        assert 0.8 < pose.position[2] < 1.3
        assert pose.position[0] > 0
        np.testing.assert_allclose(
            pose.quaternion, [0.0, 0.0, 0.0, 1.0], atol=1e-12
        )

    def test_forward_kinematics_names_every_body(self, model):
        q, _ = model.home_configuration()
        poses = model.forward_kinematics(q)
        assert {"base", "wheel_r", "wheel_l", "ee"} <= set(poses)
        assert len(poses) == len(model.bodies)
