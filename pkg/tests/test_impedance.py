"""Impedance shaping algebra: inertias, wrench gains, torque assemblies."""

import numpy as np
import pytest

from colift.errors import NumericalError
from colift.impedance import (
    ImpedanceGains,
    cartesian_inertia,
    default_damping,
    default_stiffness,
    default_wrench_weight,
    estimate_partner_wrench,
    grasp_in_world,
    impedance_task_accel,
    object_compensated_torque,
    pose_error,
    shape_inertia,
    wrench_weight,
)
from colift.object_dynamics import regressor
from colift.spatial import (
    PartialGraspMatrix,
    quat_from_rotvec,
    quat_mul,
    quat_to_rot,
    rot6,
)


def _spd(rng, n):
    A = rng.standard_normal((n, n))
    return A @ A.T + n * np.eye(n)


def _full_rank_jacobian(rng, n=9):
    while True:
        J = rng.standard_normal((6, n))
        if np.linalg.svd(J, compute_uv=False)[-1] > 0.3:
            return J


class TestDefaultGains:
    def test_stiffness_diagonal(self):
        np.testing.assert_array_equal(
            np.diag(default_stiffness()), [100.0, 100.0, 100.0, 400.0, 400.0, 600.0]
        )

    def test_damping_is_half_critical(self):
        np.testing.assert_allclose(
            np.diag(default_damping()),
            0.5 * 2.0 * np.sqrt(np.diag(default_stiffness())),
        )

    def test_damping_follows_custom_stiffness(self):
        K = np.diag([4.0, 9.0, 16.0, 25.0, 36.0, 49.0])
        np.testing.assert_allclose(
            np.diag(default_damping(K)), [2.0, 3.0, 4.0, 5.0, 6.0, 7.0]
        )

    def test_wrench_weight_sparsity(self):
        P = default_wrench_weight()
        assert P[0, 0] == 1.0
        assert P[1, 5] == -5.0
        assert P[2, 4] == -4.0
        P_zeroed = P.copy()
        P_zeroed[0, 0] = P_zeroed[1, 5] = P_zeroed[2, 4] = 0.0
        np.testing.assert_array_equal(P_zeroed, np.zeros((6, 6)))

    def test_follow_mode_releases_translation_only(self):
        gains = ImpedanceGains()
        follow = gains.follow_mode()
        np.testing.assert_array_equal(follow.stiffness[:3, :], np.zeros((3, 6)))
        np.testing.assert_array_equal(
            follow.stiffness[3:, :], gains.stiffness[3:, :]
        )
        np.testing.assert_array_equal(follow.damping, gains.damping)


class TestCartesianInertia:
    def test_inverse_identity(self, rng):
        M = _spd(rng, 9)
        J = _full_rank_jacobian(rng)
        M_x, _ = cartesian_inertia(M, J)
        np.testing.assert_allclose(
            J @ np.linalg.solve(M, J.T) @ M_x, np.eye(6), atol=1e-9
        )

    def test_dynamically_consistent_pseudoinverse(self, rng):
        M = _spd(rng, 9)
        J = _full_rank_jacobian(rng)
        M_x, J_bar = cartesian_inertia(M, J)
        # the identity the gathered torque assembly rests on
        np.testing.assert_allclose(M @ J_bar, J.T @ M_x, atol=1e-9)
        # and J_bar is a right inverse of J
        np.testing.assert_allclose(J @ J_bar, np.eye(6), atol=1e-10)

    def test_rank_deficient_jacobian_is_refused(self, rng):
        M = _spd(rng, 9)
        J = _full_rank_jacobian(rng)
        J[2, :] = 0.0
        with pytest.raises(NumericalError):
            cartesian_inertia(M, J)


class TestShaping:
    def test_shape_inertia_satisfies_definition(self, rng):
        M_x = _spd(rng, 6)
        grasp = PartialGraspMatrix(rng.normal(size=3))
        P_d = default_wrench_weight()
        M_e = shape_inertia(M_x, grasp.matrix, P_d)
        np.testing.assert_allclose((grasp.matrix + P_d) @ M_e, M_x, atol=1e-10)

    def test_wrench_weight_recovers_selection(self, rng):
        M_x = _spd(rng, 6)
        grasp = PartialGraspMatrix(rng.normal(size=3))
        P_d = default_wrench_weight()
        M_e = shape_inertia(M_x, grasp.matrix, P_d)
        np.testing.assert_allclose(
            wrench_weight(M_x, M_e, grasp.matrix), P_d, atol=1e-9
        )

    def test_unshaped_inertia_gives_zero_weight(self, rng):
        M_x = _spd(rng, 6)
        G = PartialGraspMatrix(rng.normal(size=3)).matrix
        M_e = np.linalg.solve(G, M_x)
        np.testing.assert_allclose(
            wrench_weight(M_x, M_e, G), np.zeros((6, 6)), atol=1e-9
        )

    def test_singular_shaping_is_refused(self, rng):
        M_x = _spd(rng, 6)
        G = PartialGraspMatrix(rng.normal(size=3)).matrix
        with pytest.raises(NumericalError):
            shape_inertia(M_x, G, -G)

    def test_grasp_in_world_rotates_the_offset(self, rng):
        offset = rng.normal(size=3)
        grasp = PartialGraspMatrix(offset)
        R = quat_to_rot(quat_from_rotvec(rng.normal(size=3)))
        G_w = grasp_in_world(grasp, R)
        np.testing.assert_allclose(
            G_w, PartialGraspMatrix(R @ offset).matrix, atol=1e-12
        )
        # world and body maps agree through the frame rotation
        R6 = rot6(R)
        np.testing.assert_allclose(R6 @ grasp.matrix @ R6.T, G_w, atol=1e-12)


class TestPartnerWrench:
    def test_exact_recovery(self, rng):
        grasp = PartialGraspMatrix(np.array([0.0, -1.5, 0.0]))
        phi = rng.uniform(0.1, 1.0, 10)
        A = regressor(
            rng.normal(size=3), rng.normal(size=3), rng.normal(size=3),
            g=rng.normal(size=3),
        )
        F_partner = rng.normal(size=6)
        F_meas = A @ phi - grasp.matrix @ F_partner
        recovered = estimate_partner_wrench(A, phi, F_meas, grasp)
        np.testing.assert_allclose(recovered, F_partner, atol=1e-10)

    def test_zero_parameters_blame_everything_on_the_partner(self, rng):
        # with phi = 0 the payload model vanishes and the estimate is just
        # the negated, grasp-unwound measurement
        grasp = PartialGraspMatrix(rng.normal(size=3))
        F_meas = rng.normal(size=6)
        recovered = estimate_partner_wrench(
            np.zeros((6, 10)), np.zeros(10), F_meas, grasp
        )
        np.testing.assert_allclose(recovered, grasp.inverse() @ -F_meas, atol=1e-12)


class TestTaskAcceleration:
    def test_tracking_law(self, rng):
        gains = ImpedanceGains()
        M_e = _spd(rng, 6)
        e = rng.normal(size=6)
        de = rng.normal(size=6)
        a_des = rng.normal(size=6)
        out = impedance_task_accel(e, de, a_des, M_e, gains)
        expected = a_des + np.linalg.solve(
            M_e, -gains.damping @ de - gains.stiffness @ e
        )
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_partner_wrench_adds_through_apparent_inertia(self, rng):
        gains = ImpedanceGains()
        M_e = _spd(rng, 6)
        e = rng.normal(size=6)
        de = rng.normal(size=6)
        F = rng.normal(size=6)
        base = impedance_task_accel(e, de, np.zeros(6), M_e, gains)
        driven = impedance_task_accel(e, de, np.zeros(6), M_e, gains, partner_wrench=F)
        np.testing.assert_allclose(driven - base, np.linalg.solve(M_e, F), atol=1e-10)

    def test_pose_error_components(self, rng):
        p = rng.normal(size=3)
        p_des = rng.normal(size=3)
        rotvec = 1e-3 * rng.normal(size=3)
        q_des = quat_from_rotvec(rng.normal(size=3))
        q = quat_mul(quat_from_rotvec(rotvec), q_des)
        err = pose_error(p, q, p_des, q_des)
        np.testing.assert_allclose(err[:3], p - p_des, atol=1e-12)
        np.testing.assert_allclose(err[3:], rotvec, atol=1e-9)
        zero = pose_error(p, q_des, p, q_des)
        np.testing.assert_allclose(zero, np.zeros(6), atol=1e-12)


def _random_assembly_inputs(rng):
    M = _spd(rng, 9)
    J_red = _full_rank_jacobian(rng)
    R_ee = quat_to_rot(quat_from_rotvec(rng.normal(size=3)))
    grasp = PartialGraspMatrix(rng.uniform(-1.5, 1.5, 3))
    A_body = regressor(
        rng.normal(size=3), rng.normal(size=3), rng.normal(size=3),
        g=rng.normal(size=3),
    )
    M_x, _ = cartesian_inertia(M, J_red)
    G_w = grasp_in_world(grasp, R_ee)
    P_d = default_wrench_weight()
    M_e = shape_inertia(M_x, G_w, P_d)
    M_F = wrench_weight(M_x, M_e, G_w)
    return dict(
        M=M,
        bias=rng.normal(size=9),
        gravity=rng.normal(size=9),
        J_red=J_red,
        ee_bias_accel=rng.normal(size=6),
        task_accel_free=rng.normal(size=6),
        R_ee=R_ee,
        A_body=A_body,
        phi_hat=rng.uniform(0.1, 1.0, 10),
        partner_wrench_body=rng.normal(size=6),
        grasp=grasp,
        M_e=M_e,
        M_F=M_F,
    )


class TestTorqueAssemblies:
    def test_direct_and_gathered_agree(self, rng):
        for _ in range(50):
            kw = _random_assembly_inputs(rng)
            direct = object_compensated_torque(assembly="direct", **kw)
            gathered = object_compensated_torque(assembly="gathered", **kw)
            scale = max(1.0, np.max(np.abs(direct)))
            np.testing.assert_allclose(direct, gathered, atol=1e-10 * scale)

    def test_unshaped_inertia_ignores_partner_wrench(self, rng):
        # with M_e = G^-1 M_x the wrench weight vanishes, so the torque
        # must not depend on the partner wrench at all
        kw = _random_assembly_inputs(rng)
        M_x, _ = cartesian_inertia(kw["M"], kw["J_red"])
        G_w = grasp_in_world(kw["grasp"], kw["R_ee"])
        kw["M_e"] = np.linalg.solve(G_w, M_x)
        kw["M_F"] = wrench_weight(M_x, kw["M_e"], G_w)
        kw["partner_wrench_body"] = np.zeros(6)
        quiet = object_compensated_torque(assembly="direct", **kw)
        kw["partner_wrench_body"] = np.array([50.0, -50.0, 50.0, 20.0, -20.0, 20.0])
        loud = object_compensated_torque(assembly="direct", **kw)
        np.testing.assert_allclose(quiet, loud, atol=1e-9)

    def test_gathered_requires_wrench_weight(self, rng):
        kw = _random_assembly_inputs(rng)
        kw["M_F"] = None
        with pytest.raises(NumericalError):
            object_compensated_torque(assembly="gathered", **kw)

    def test_unknown_assembly_name(self, rng):
        kw = _random_assembly_inputs(rng)
        with pytest.raises(ValueError):
            object_compensated_torque(assembly="sideways", **kw)


class TestStepResponse:
    def test_single_axis_matches_second_order_theory(self):
        # m xdd + c xd + k x = 0 from a unit step: zeta = c / (2 sqrt(km))
        m, c, k = 4.0, 10.0, 100.0
        zeta = c / (2.0 * np.sqrt(k * m))
        wn = np.sqrt(k / m)
        gains = ImpedanceGains(
            stiffness=k * np.eye(6), damping=c * np.eye(6),
        )
        M_e = m * np.eye(6)
        dt = 2e-4
        x = np.zeros(6)
        x[0] = 1.0  # start displaced, target at the origin
        v = np.zeros(6)

        def accel(x, v):
            return impedance_task_accel(x, v, np.zeros(6), M_e, gains)

        peak = 0.0
        for _ in range(int(6.0 / dt)):
            k1v = accel(x, v)
            k1x = v
            k2v = accel(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
            k2x = v + 0.5 * dt * k1v
            k3v = accel(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
            k3x = v + 0.5 * dt * k2v
            k4v = accel(x + dt * k3x, v + dt * k3v)
            k4x = v + dt * k3v
            x = x + dt * (k1x + 2 * k2x + 2 * k3x + k4x) / 6.0
            v = v + dt * (k1v + 2 * k2v + 2 * k3v + k4v) / 6.0
            peak = max(peak, -x[0])
        overshoot = np.exp(-np.pi * zeta / np.sqrt(1.0 - zeta**2))
        assert peak == pytest.approx(overshoot, rel=1e-3)
        # well past the settling time the response has died
        assert abs(x[0]) < 0.02
        assert wn > 0
