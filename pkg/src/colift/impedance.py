"""Partner-aware Cartesian impedance with payload-shaped apparent inertia.

The robot renders, at its end effector, the target behavior::

    M_e (xdd - xdd_d) + C_e (xd - xd_d) + K_e (x - x_d) = F_hat

driven by the *partner's* wrench at their own grasp point -- not by the
total wrench the object transmits.  Subtracting the identified payload
dynamics from the wrist measurement and unwinding the grasp geometry
isolates that partner wrench.  Choosing the apparent inertia as
``M_e = (G + P_d)^-1 M_x`` makes the explicit wrench feedback term in the
torque equal to ``P_d`` times the partner wrench, so a sparse ``P_d``
selects exactly which partner-wrench channels drive which motions.

Two algebraically equivalent torque assemblies are provided; their
equivalence holds only with the dynamically consistent pseudoinverse
(``M J_bar = J0' M_x``), which is why :func:`cartesian_inertia` returns
that particular inverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .spatial import PartialGraspMatrix, orientation_error, rot6

_DEFAULT_KE = np.array([100.0, 100.0, 100.0, 400.0, 400.0, 600.0])


def default_stiffness() -> np.ndarray:
    return np.diag(_DEFAULT_KE)


def default_damping(stiffness: np.ndarray | None = None) -> np.ndarray:
    """Half of critical for a unit-inertia interpretation: 0.5 * 2 sqrt(K)."""
    diag = (
        _DEFAULT_KE if stiffness is None
        else np.diag(np.asarray(stiffness, dtype=float).reshape(6, 6))
    )
    return np.diag(0.5 * 2.0 * np.sqrt(diag))


def default_wrench_weight() -> np.ndarray:
    """Sparse selection P_d: partner force drives x, partner torque steers y/z."""
    P = np.zeros((6, 6))
    P[0, 0] = 1.0
    P[1, 5] = -5.0
    P[2, 4] = -4.0
    return P


@dataclass
class ImpedanceGains:
    stiffness: np.ndarray = field(default_factory=default_stiffness)
    damping: np.ndarray = field(default_factory=default_damping)
    wrench_weight: np.ndarray = field(default_factory=default_wrench_weight)

    def __post_init__(self):
        self.stiffness = np.asarray(self.stiffness, dtype=float).reshape(6, 6)
        self.damping = np.asarray(self.damping, dtype=float).reshape(6, 6)
        self.wrench_weight = np.asarray(self.wrench_weight, dtype=float).reshape(6, 6)

    def follow_mode(self) -> "ImpedanceGains":
        """Gains with the translational stiffness released (position free,
        orientation still held) for partner-led motion."""
        K = self.stiffness.copy()
        K[:3, :] = 0.0
        return ImpedanceGains(K, self.damping.copy(), self.wrench_weight.copy())


def cartesian_inertia(M: np.ndarray, J0: np.ndarray) -> tuple:
    """Task-space inertia and the dynamically consistent pseudoinverse.

    Returns ``(M_x, J_bar)`` with ``M_x = (J0 M^-1 J0')^-1`` and
    ``J_bar = M^-1 J0' M_x``.  These satisfy ``M J_bar = J0' M_x`` exactly,
    the identity the gathered torque assembly relies on.
    """
    M = np.asarray(M, dtype=float)
    J0 = np.asarray(J0, dtype=float)
    sigma_min = np.linalg.svd(J0, compute_uv=False)[-1]
    if sigma_min < 1e-6:
        raise NumericalError(
            f"Jacobian is rank deficient (smallest singular value {sigma_min:.3g}); "
            "the task-space inertia does not exist here"
        )
    Minv_Jt = np.linalg.solve(M, J0.T)
    M_x = np.linalg.inv(J0 @ Minv_Jt)
    return M_x, Minv_Jt @ M_x


def shape_inertia(M_x: np.ndarray, grasp_world: np.ndarray, P_d: np.ndarray) -> np.ndarray:
    """Apparent inertia ``M_e = (G + P_d)^-1 M_x``."""
    G = np.asarray(grasp_world, dtype=float)
    P_d = np.asarray(P_d, dtype=float)
    shaping = G + P_d
    if np.linalg.cond(shaping) > 1e12:
        raise NumericalError(
            "shaping matrix G + P_d is numerically singular; the requested "
            "apparent inertia cannot be rendered"
        )
    return np.linalg.solve(shaping, np.asarray(M_x, dtype=float))


def wrench_weight(M_x: np.ndarray, M_e: np.ndarray, grasp_world: np.ndarray) -> np.ndarray:
    """Explicit wrench-feedback gain ``M_F = M_x M_e^-1 - G``.

    Evaluates the definition rather than trusting the shaping identity;
    with ``M_e`` from :func:`shape_inertia` this returns ``P_d`` up to
    rounding, and with ``M_e = G^-1 M_x`` it returns zero.
    """
    M_x = np.asarray(M_x, dtype=float)
    M_e = np.asarray(M_e, dtype=float)
    return M_x @ np.linalg.inv(M_e) - np.asarray(grasp_world, dtype=float)


def grasp_in_world(grasp: PartialGraspMatrix, R_ee: np.ndarray) -> np.ndarray:
    """World-axes grasp map: the same structure built on the rotated offset."""
    return PartialGraspMatrix(np.asarray(R_ee, dtype=float) @ grasp.offset).matrix


def estimate_partner_wrench(
    A_body: np.ndarray,
    phi_hat: np.ndarray,
    wrench_meas_body: np.ndarray,
    grasp: PartialGraspMatrix,
) -> np.ndarray:
    """Partner wrench at their grasp point, from the wrist measurement.

    The wrist sees the payload dynamics minus whatever the partner
    contributes through the object, ``F_meas = A phi - G F_partner``.
    Solving with the identified parameters gives
    ``F_partner = G^-1 (A phi_hat - F_meas)``, in the same (EE-body) axes
    as the measurement.
    """
    A_body = np.asarray(A_body, dtype=float).reshape(6, 10)
    phi_hat = np.asarray(phi_hat, dtype=float).reshape(10)
    resid = A_body @ phi_hat - np.asarray(wrench_meas_body, dtype=float).reshape(6)
    return grasp.inverse() @ resid


def impedance_task_accel(
    pose_err: np.ndarray,
    twist_err: np.ndarray,
    accel_des: np.ndarray,
    M_e: np.ndarray,
    gains: ImpedanceGains,
    partner_wrench: np.ndarray | None = None,
) -> np.ndarray:
    """Priority-0 task acceleration realizing the target impedance.

    ``pose_err`` stacks the position error and the orientation error
    rotation vector; ``twist_err`` the twist error.  When
    ``partner_wrench`` is None the impedance runs as a pure tracking law.
    """
    pose_err = np.asarray(pose_err, dtype=float).reshape(6)
    twist_err = np.asarray(twist_err, dtype=float).reshape(6)
    forcing = -gains.damping @ twist_err - gains.stiffness @ pose_err
    if partner_wrench is not None:
        forcing = forcing + np.asarray(partner_wrench, dtype=float).reshape(6)
    return np.asarray(accel_des, dtype=float).reshape(6) + np.linalg.solve(M_e, forcing)


def pose_error(position, quaternion, position_des, quaternion_des) -> np.ndarray:
    """6-vector pose error (position difference; orientation rotation vector)."""
    return np.concatenate([
        np.asarray(position, dtype=float) - np.asarray(position_des, dtype=float),
        orientation_error(quaternion, quaternion_des),
    ])


def object_compensated_torque(
    M: np.ndarray,
    bias: np.ndarray,
    gravity: np.ndarray,
    J_red: np.ndarray,
    ee_bias_accel: np.ndarray,
    task_accel_free: np.ndarray,
    R_ee: np.ndarray,
    A_body: np.ndarray,
    phi_hat: np.ndarray,
    partner_wrench_body: np.ndarray,
    grasp: PartialGraspMatrix,
    M_e: np.ndarray,
    M_F: np.ndarray | None = None,
    assembly: str = "direct",
) -> np.ndarray:
    """Joint torques of the payload-aware impedance law.

    ``task_accel_free`` is the impedance task acceleration *without* the
    partner-wrench term (pure tracking part); the partner wrench enters
    here so the two assemblies can place it differently:

    * ``direct``: the wrench joins the task acceleration through
      ``M_e^-1`` and its grasp-mapped reaction is compensated at the
      wrist alongside the payload feedforward;
    * ``gathered``: all partner-wrench terms collapse into the single
      joint-space term ``J0' M_F F_partner``.

    Both return identical torques (to rounding) when ``M_F`` comes from
    :func:`wrench_weight` and the pseudoinverse is the dynamically
    consistent one.
    """
    M = np.asarray(M, dtype=float)
    J_red = np.asarray(J_red, dtype=float)
    R6 = rot6(np.asarray(R_ee, dtype=float))
    M_x, J_bar = cartesian_inertia(M, J_red)
    A_body = np.asarray(A_body, dtype=float).reshape(6, 10)
    phi_hat = np.asarray(phi_hat, dtype=float).reshape(10)
    F_partner_body = np.asarray(partner_wrench_body, dtype=float).reshape(6)
    F_partner_world = R6 @ F_partner_body
    payload_ff = J_red.T @ (R6 @ (A_body @ phi_hat))
    rigid = np.asarray(bias, dtype=float) + np.asarray(gravity, dtype=float)

    if assembly == "direct":
        task = task_accel_free + np.linalg.solve(M_e, F_partner_world)
        reaction = J_red.T @ (R6 @ (grasp.matrix @ F_partner_body))
        return M @ (J_bar @ (task - ee_bias_accel)) + rigid + payload_ff - reaction
    if assembly == "gathered":
        if M_F is None:
            raise NumericalError("gathered assembly needs the wrench weight M_F")
        tau = M @ (J_bar @ (task_accel_free - ee_bias_accel)) + rigid + payload_ff
        return tau + J_red.T @ (np.asarray(M_F, dtype=float) @ F_partner_world)
    raise ValueError(f"unknown assembly {assembly!r}")
