"""Excitation motion that perturbs the payload about the partner's grasp.

Good parameter estimates need motion, but the partner's hand should stay
still while the pair carries the object.  Both are possible at once because
the hand's translational velocity is a linear function of the robot's twist:
any twist in the null space of that map rotates the object about the hand
without moving it.  This module builds the map, the null-space projector,
the sinusoidal angular perturbation, and a closed-form rigid rotation about
the hand point whose velocities and accelerations are exact -- the reference
motion used by the estimation benchmark.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spatial import quat_from_rotvec, quat_mul, quat_to_rot, skew

#: default angular perturbation, rad/s and Hz
PERTURB_AMPLITUDE = 0.2
PERTURB_FREQUENCY = 0.4


def pivot_map(offset_robot_to_hand: np.ndarray) -> np.ndarray:
    """3x6 map from the robot EE twist to the partner-hand velocity.

    ``offset_robot_to_hand`` points from the EE to the hand, in world axes.
    A twist ``(v; w)`` moves the hand at ``v + w x offset``, so the map is
    ``[I3 | -S(offset)]``.
    """
    r = np.asarray(offset_robot_to_hand, dtype=float).reshape(3)
    return np.hstack([np.eye(3), -skew(r)])


def null_projector(G_t: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the null space of the hand-velocity map."""
    G_t = np.asarray(G_t, dtype=float)
    return np.eye(G_t.shape[1]) - np.linalg.pinv(G_t) @ G_t


def perturbation_signal(
    t: float,
    amplitude: float = PERTURB_AMPLITUDE,
    frequency: float = PERTURB_FREQUENCY,
) -> np.ndarray:
    """Angular perturbation ``w_id(t) = -amplitude * cos(2 pi f t)`` on all axes."""
    return -amplitude * np.cos(2.0 * np.pi * frequency * t) * np.ones(3)


def desired_robot_twist(
    hand_velocity: np.ndarray,
    z_id: np.ndarray,
    G_t: np.ndarray,
) -> np.ndarray:
    """Robot twist realizing a hand velocity plus a null-space perturbation.

    Minimum-norm twist for the hand-velocity task, plus the component of
    ``z_id`` that provably does not move the hand:
    ``x_r = pinv(G_t) v_hand + (I - pinv(G_t) G_t) z_id``.
    """
    G_t = np.asarray(G_t, dtype=float)
    pinv = np.linalg.pinv(G_t)
    hand_velocity = np.asarray(hand_velocity, dtype=float).reshape(3)
    z_id = np.asarray(z_id, dtype=float).reshape(6)
    return pinv @ hand_velocity + (np.eye(6) - pinv @ G_t) @ z_id


@dataclass
class PivotSample:
    """EE motion state at one instant of the pivot excitation."""

    t: float
    position: np.ndarray
    quaternion: np.ndarray
    linear_velocity: np.ndarray
    angular_velocity: np.ndarray
    linear_accel: np.ndarray
    angular_accel: np.ndarray


class PivotExcitation:
    """Closed-form rigid rotation of the EE about a fixed hand point.

    The perturbation keeps all three angular components equal, so the
    rotation axis is fixed and the orientation integral is exact:
    ``rotvec(t) = -(amplitude / 2 pi f) * sin(2 pi f t) * ones(3)``,
    whose derivative is exactly ``perturbation_signal(t)``.
    The EE position follows the rigid rotation about the hand point, so the
    hand velocity implied by the EE twist is identically zero and every
    derivative is analytic -- no finite differencing anywhere.
    """

    def __init__(
        self,
        ee_start: np.ndarray,
        hand_point: np.ndarray,
        amplitude: float = PERTURB_AMPLITUDE,
        frequency: float = PERTURB_FREQUENCY,
        ee_quat_start: np.ndarray | None = None,
    ):
        self.ee_start = np.asarray(ee_start, dtype=float).reshape(3)
        self.hand_point = np.asarray(hand_point, dtype=float).reshape(3)
        self.amplitude = float(amplitude)
        self.frequency = float(frequency)
        if ee_quat_start is None:
            self.ee_quat_start = np.array([0.0, 0.0, 0.0, 1.0])
        else:
            self.ee_quat_start = np.asarray(ee_quat_start, dtype=float).reshape(4)

    def rotation_vector(self, t: float) -> np.ndarray:
        """Integral of the angular perturbation from 0 to ``t``."""
        two_pi_f = 2.0 * np.pi * self.frequency
        theta = -(self.amplitude / two_pi_f) * np.sin(two_pi_f * t)
        return theta * np.ones(3)

    def sample(self, t: float) -> PivotSample:
        two_pi_f = 2.0 * np.pi * self.frequency
        omega = perturbation_signal(t, self.amplitude, self.frequency)
        domega = self.amplitude * two_pi_f * np.sin(two_pi_f * t) * np.ones(3)

        q_pivot = quat_from_rotvec(self.rotation_vector(t))
        q = quat_mul(q_pivot, self.ee_quat_start)
        R = quat_to_rot(q_pivot)
        lever0 = self.ee_start - self.hand_point
        lever = R @ lever0
        position = self.hand_point + lever
        v = np.cross(omega, lever)
        a = np.cross(domega, lever) + np.cross(omega, np.cross(omega, lever))
        return PivotSample(
            t=t,
            position=position,
            quaternion=q,
            linear_velocity=v,
            angular_velocity=omega,
            linear_accel=a,
            angular_accel=domega,
        )

    def hand_speed(self, t: float) -> float:
        """Speed of the hand point implied by the sampled EE twist (zero by
        construction; exposed so the benchmark can report it)."""
        s = self.sample(t)
        v_hand = s.linear_velocity + np.cross(
            s.angular_velocity, self.hand_point - s.position
        )
        return float(np.linalg.norm(v_hand))
