"""Rigid-body payload dynamics linear in the inertial parameters.

A rigid body's Newton-Euler wrench is linear in the 10-vector

    phi = [m, h_x, h_y, h_z, J_xx, J_xy, J_xz, J_yy, J_yz, J_zz]

where ``h = m * c`` is the first mass moment about the measurement frame
origin and ``J`` is the rotational inertia about that same origin.  The
regressor built here maps phi to the wrench the supporting side must apply,
so a purely static hold of a mass ``m`` shows up as a force ``-m g``
(upward, for gravity pointing down).

Two independent routes to the same wrench are kept deliberately separate:
:func:`regressor` assembles the 6x10 matrix used by the estimator, while
:func:`newton_euler_wrench` evaluates the textbook equations directly from
``m``, ``h`` and ``J``.  Tests hold them against each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .spatial import skew

GRAVITY = np.array([0.0, 0.0, -9.81])

#: index layout of the parameter vector
PARAM_NAMES = ("m", "h_x", "h_y", "h_z", "J_xx", "J_xy", "J_xz", "J_yy", "J_yz", "J_zz")


@dataclass
class InertialParams:
    """Mass, first moment and rotational inertia of a rigid body.

    All quantities refer to the *measurement frame origin* (the robot's
    grasp), not the center of mass; ``inertia`` is the full 3x3 symmetric
    rotational inertia about that origin.
    """

    mass: float
    first_moment: np.ndarray
    inertia: np.ndarray

    def __post_init__(self):
        self.mass = float(self.mass)
        self.first_moment = np.asarray(self.first_moment, dtype=float).reshape(3)
        self.inertia = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        if not np.allclose(self.inertia, self.inertia.T, atol=1e-9):
            raise NumericalError("rotational inertia must be symmetric")

    @property
    def com(self) -> np.ndarray:
        """Center of mass; requires a mass meaningfully above zero."""
        if abs(self.mass) <= 1e-6:
            raise NumericalError(
                f"center of mass undefined for mass {self.mass:.3g} kg"
            )
        return self.first_moment / self.mass

    def as_vector(self) -> np.ndarray:
        J = self.inertia
        return np.array([
            self.mass, *self.first_moment,
            J[0, 0], J[0, 1], J[0, 2], J[1, 1], J[1, 2], J[2, 2],
        ])

    @classmethod
    def from_vector(cls, phi: np.ndarray) -> "InertialParams":
        phi = np.asarray(phi, dtype=float).reshape(10)
        J = np.array([
            [phi[4], phi[5], phi[6]],
            [phi[5], phi[7], phi[8]],
            [phi[6], phi[8], phi[9]],
        ])
        return cls(phi[0], phi[1:4], J)

    def com_inertia(self) -> np.ndarray:
        """Rotational inertia about the center of mass (parallel-axis shift)."""
        c = self.com
        return self.inertia - self.mass * (np.dot(c, c) * np.eye(3) - np.outer(c, c))

    def physically_consistent(self, tol: float = 1e-9) -> bool:
        """Check mass positivity, PSD inertia about the CoM, and the triangle
        inequality on its principal moments."""
        if self.mass <= 0.0:
            return False
        eigs = np.sort(np.linalg.eigvalsh(self.com_inertia()))
        if eigs[0] < -tol:
            return False
        return eigs[0] + eigs[1] >= eigs[2] - tol


def from_point_masses(positions: np.ndarray, masses: np.ndarray) -> InertialParams:
    """Lump point masses (positions in the measurement frame) into one body."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    masses = np.asarray(masses, dtype=float).reshape(-1)
    if positions.shape[0] != masses.shape[0]:
        raise ValueError("need one mass per position")
    m = float(np.sum(masses))
    h = masses @ positions
    J = np.zeros((3, 3))
    for p, mi in zip(positions, masses):
        J += mi * (np.dot(p, p) * np.eye(3) - np.outer(p, p))
    return InertialParams(m, h, J)


def _inertia_stack(w: np.ndarray) -> np.ndarray:
    """3x6 matrix K(w) with K(w) @ [Jxx,Jxy,Jxz,Jyy,Jyz,Jzz] == J @ w."""
    wx, wy, wz = w
    return np.array([
        [wx, wy, wz, 0.0, 0.0, 0.0],
        [0.0, wx, 0.0, wy, wz, 0.0],
        [0.0, 0.0, wx, 0.0, wy, wz],
    ])


def regressor(
    a_lin: np.ndarray,
    domega: np.ndarray,
    omega: np.ndarray,
    g: np.ndarray = GRAVITY,
) -> np.ndarray:
    """6x10 regressor A with ``A @ phi`` the wrench supporting the body.

    Parameters
    ----------
    a_lin:
        Linear acceleration of the measurement frame origin (world axes).
    domega, omega:
        Angular acceleration and velocity of the body.
    g:
        Gravity vector; the default points along -z.
    """
    a_lin = np.asarray(a_lin, dtype=float).reshape(3)
    domega = np.asarray(domega, dtype=float).reshape(3)
    omega = np.asarray(omega, dtype=float).reshape(3)
    g = np.asarray(g, dtype=float).reshape(3)

    specific = a_lin - g
    S_w = skew(omega)
    A = np.zeros((6, 10))
    A[:3, 0] = specific
    A[:3, 1:4] = skew(domega) + S_w @ S_w
    A[3:, 1:4] = -skew(specific)
    A[3:, 4:] = _inertia_stack(domega) + S_w @ _inertia_stack(omega)
    return A


def newton_euler_wrench(
    params: InertialParams,
    a_lin: np.ndarray,
    domega: np.ndarray,
    omega: np.ndarray,
    g: np.ndarray = GRAVITY,
) -> np.ndarray:
    """Wrench supporting the body, from the Newton-Euler equations directly.

    Kept free of any shared code with :func:`regressor` on purpose: this is
    the independent check that the regressor layout is right.
    """
    a_lin = np.asarray(a_lin, dtype=float).reshape(3)
    domega = np.asarray(domega, dtype=float).reshape(3)
    omega = np.asarray(omega, dtype=float).reshape(3)
    g = np.asarray(g, dtype=float).reshape(3)

    m = params.mass
    h = params.first_moment
    J = params.inertia
    f = m * a_lin + np.cross(domega, h) + np.cross(omega, np.cross(omega, h)) - m * g
    tau = J @ domega + np.cross(omega, J @ omega) + np.cross(h, a_lin - g)
    return np.concatenate([f, tau])


def spatial_inertia(params: InertialParams) -> np.ndarray:
    """6x6 spatial inertia about the measurement frame origin.

    Maps ``(a; dw)`` to the acceleration-proportional part of the wrench:
    ``[[m I, -S(h)], [S(h), J]]``.
    """
    m = params.mass
    Sh = skew(params.first_moment)
    out = np.zeros((6, 6))
    out[:3, :3] = m * np.eye(3)
    out[:3, 3:] = -Sh
    out[3:, :3] = Sh
    out[3:, 3:] = params.inertia
    return out


def velocity_bias_wrench(params: InertialParams, omega: np.ndarray) -> np.ndarray:
    """Velocity-product (gyroscopic and centripetal) part of the body wrench."""
    omega = np.asarray(omega, dtype=float).reshape(3)
    h = params.first_moment
    J = params.inertia
    return np.concatenate([
        np.cross(omega, np.cross(omega, h)),
        np.cross(omega, J @ omega),
    ])


def gravity_wrench(params: InertialParams, g: np.ndarray = GRAVITY) -> np.ndarray:
    """Wrench gravity exerts on the body, about the measurement origin."""
    g = np.asarray(g, dtype=float).reshape(3)
    return np.concatenate([params.mass * g, np.cross(params.first_moment, g)])


@dataclass
class MotionSample:
    """One body-frame kinematic state of the carried object.

    ``a_lin`` is the linear acceleration of the measurement origin,
    ``omega``/``domega`` the angular velocity and acceleration, and ``g``
    gravity -- all expressed in the measurement (end-effector) frame.
    """

    a_lin: np.ndarray
    domega: np.ndarray
    omega: np.ndarray
    g: np.ndarray = None

    def __post_init__(self):
        self.a_lin = np.asarray(self.a_lin, dtype=float).reshape(3)
        self.domega = np.asarray(self.domega, dtype=float).reshape(3)
        self.omega = np.asarray(self.omega, dtype=float).reshape(3)
        self.g = GRAVITY.copy() if self.g is None else np.asarray(self.g, dtype=float).reshape(3)


def effective_params_oracle(params_real, grasp, samples, partner_wrench_fn) -> InertialParams:
    """Best-fit parameters of the robot-side share of a jointly held object.

    When a partner supports part of the load, the wrench at the robot's
    grasp is ``A(s) phi_real - G F_partner(s)``; the parameters a wrench
    based estimator can converge to are the least-squares fit of that
    signal by ``A(s) phi_eff`` over the motions seen.  This computes the
    fit by stacking the samples directly -- an estimator-free reference.

    Parameters
    ----------
    params_real:
        Full-object :class:`InertialParams` in the measurement frame.
    grasp:
        :class:`~colift.spatial.PartialGraspMatrix` mapping the partner's
        grasp-point wrench to the measurement origin.
    samples:
        Iterable of :class:`MotionSample`, body frame.
    partner_wrench_fn:
        Callable ``sample -> (6,)`` wrench the partner applies at their
        grasp point, body frame.
    """
    rows, rhs = [], []
    for s in samples:
        A = regressor(s.a_lin, s.domega, s.omega, s.g)
        rows.append(A)
        rhs.append(A @ params_real.as_vector() - grasp.matrix @ partner_wrench_fn(s))
    stacked = np.vstack(rows)
    target = np.concatenate(rhs)
    if np.linalg.matrix_rank(stacked) < 10:
        raise NumericalError(
            "sample set does not excite all ten parameters; the fit would be arbitrary"
        )
    phi_eff, *_ = np.linalg.lstsq(stacked, target, rcond=None)
    return InertialParams.from_vector(phi_eff)
