"""Kinematics and dynamics of a differential-drive base with a serial arm.

Configuration vector (``nq = 5 + n_arm``)::

    q = [x_c, y_c, phi, theta_r, theta_l, q_arm...]

with the base position/heading in the world, the two wheel spin angles, and
the arm joint positions.  The wheels cannot slip sideways, so the base obeys
three Pfaffian constraints ``A_c(q) @ qdot = 0`` and the velocity lives in
the reduced coordinates (``nv = 2 + n_arm``)::

    eta = [omega_r, omega_l, qdot_arm...],   qdot = S(q) @ eta

All dynamics are assembled in the world frame from per-body Jacobians and
spatial inertias -- no recursive articulated-body algorithm.  That costs a
constant factor in speed but keeps every quantity inspectable, and the test
suite holds the mass matrix, bias forces, and gravity vector against
independent routes (inverse-dynamics columns, finite-difference Jacobians,
energy conservation).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .object_dynamics import GRAVITY, InertialParams, newton_euler_wrench
from .spatial import Pose, quat_to_rot, rot_to_quat, skew

_IDENTITY_QUAT = (0.0, 0.0, 0.0, 1.0)


@dataclass
class LinkSpec:
    """One arm link: joint placement in the parent frame plus inertia."""

    name: str
    joint: str  # "revolute" or "prismatic"
    axis: np.ndarray
    origin: np.ndarray
    mass: float
    com: np.ndarray
    inertia_com: np.ndarray
    origin_quat: np.ndarray = field(default_factory=lambda: np.array(_IDENTITY_QUAT))
    torque_limit: float = 100.0
    accel_limit: float = 40.0

    def __post_init__(self):
        if self.joint not in ("revolute", "prismatic"):
            raise ConfigError(f"link {self.name!r}: unknown joint type {self.joint!r}")
        self.axis = np.asarray(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(self.axis)
        if n < 1e-9:
            raise ConfigError(f"link {self.name!r}: joint axis must be nonzero")
        self.axis = self.axis / n
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        self.origin_quat = np.asarray(self.origin_quat, dtype=float).reshape(4)
        self.com = np.asarray(self.com, dtype=float).reshape(3)
        self.inertia_com = np.asarray(self.inertia_com, dtype=float).reshape(3, 3)
        self.mass = float(self.mass)


@dataclass
class BaseSpec:
    """Differential-drive base geometry and inertia."""

    wheel_radius: float
    half_track: float
    mass: float
    com: np.ndarray
    inertia_com: np.ndarray
    mount_origin: np.ndarray
    mount_quat: np.ndarray = field(default_factory=lambda: np.array(_IDENTITY_QUAT))
    wheel_mass: float = 5.0
    wheel_spin_inertia: float = 0.07
    wheel_lat_inertia: float = 0.04
    wheel_torque_limit: float = 80.0
    wheel_accel_limit: float = 40.0

    def __post_init__(self):
        if self.wheel_radius <= 0.0 or self.half_track <= 0.0:
            raise ConfigError("wheel radius and half track must be positive")
        self.com = np.asarray(self.com, dtype=float).reshape(3)
        self.inertia_com = np.asarray(self.inertia_com, dtype=float).reshape(3, 3)
        self.mount_origin = np.asarray(self.mount_origin, dtype=float).reshape(3)
        self.mount_quat = np.asarray(self.mount_quat, dtype=float).reshape(4)


@dataclass
class RobotDescription:
    """Full robot: base, arm chain, tool frame, and the home posture."""

    base: BaseSpec
    links: list
    tool_origin: np.ndarray
    tool_quat: np.ndarray = field(default_factory=lambda: np.array(_IDENTITY_QUAT))
    home_arm: np.ndarray | None = None
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    def __post_init__(self):
        self.tool_origin = np.asarray(self.tool_origin, dtype=float).reshape(3)
        self.tool_quat = np.asarray(self.tool_quat, dtype=float).reshape(4)
        self.gravity = np.asarray(self.gravity, dtype=float).reshape(3)
        if self.home_arm is None:
            self.home_arm = np.zeros(len(self.links))
        self.home_arm = np.asarray(self.home_arm, dtype=float).reshape(len(self.links))


class _Body:
    """Internal node of the kinematic tree."""

    __slots__ = ("name", "parent", "q_index", "joint", "axis", "origin",
                 "R_origin", "mass", "com", "inertia_com", "ancestors")

    def __init__(self, name, parent, q_index, joint, axis, origin, R_origin,
                 mass, com, inertia_com):
        self.name = name
        self.parent = parent
        self.q_index = q_index      # index into q, or None for a fixed body
        self.joint = joint          # "revolute" | "prismatic" | "fixed"
        self.axis = axis
        self.origin = origin
        self.R_origin = R_origin
        self.mass = mass
        self.com = com
        self.inertia_com = inertia_com
        self.ancestors = None       # chain of body indices, filled at build


def _rodrigues(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation about a unit axis."""
    K = skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


class _KinState:
    """Per-body world-frame kinematics for one (q, qd, qdd) evaluation."""

    __slots__ = ("R", "o", "w", "v", "dw", "a")

    def __init__(self, n):
        self.R = [None] * n
        self.o = [None] * n
        self.w = [None] * n
        self.v = [None] * n
        self.dw = [None] * n
        self.a = [None] * n


@dataclass
class TickQuantities:
    """Per-tick model quantities shared by controller and plant."""

    M: np.ndarray
    bias: np.ndarray  # Coriolis + gravity, reduced coordinates
    J_red: np.ndarray
    bias_accel: np.ndarray
    pose: Pose
    twist: np.ndarray


class RobotModel:
    """Evaluates kinematics, Jacobians, and reduced dynamics of the robot."""

    def __init__(self, description: RobotDescription):
        self.desc = description
        base = description.base
        self.n_arm = len(description.links)
        self.nq = 5 + self.n_arm
        self.nv = 2 + self.n_arm
        self.gravity = description.gravity

        # body table: 0 base, 1-2 wheels, then arm links, then the EE frame
        wheel_inertia = np.diag([
            base.wheel_lat_inertia, base.wheel_spin_inertia, base.wheel_lat_inertia,
        ])
        ey = np.array([0.0, 1.0, 0.0])
        bodies = [
            _Body("base", -1, None, "base", None, np.zeros(3), np.eye(3),
                  base.mass, base.com, base.inertia_com),
            _Body("wheel_r", 0, 3, "revolute", ey,
                  np.array([0.0, -base.half_track, base.wheel_radius]), np.eye(3),
                  base.wheel_mass, np.zeros(3), wheel_inertia),
            _Body("wheel_l", 0, 4, "revolute", ey,
                  np.array([0.0, base.half_track, base.wheel_radius]), np.eye(3),
                  base.wheel_mass, np.zeros(3), wheel_inertia),
        ]
        parent = 0
        R_mount = quat_to_rot(base.mount_quat)
        for i, link in enumerate(description.links):
            if i == 0:
                # fold the mount transform into the first link's placement
                origin = base.mount_origin + R_mount @ link.origin
                R_origin = R_mount @ quat_to_rot(link.origin_quat)
            else:
                origin = link.origin
                R_origin = quat_to_rot(link.origin_quat)
            bodies.append(_Body(
                link.name, parent, 5 + i, link.joint, link.axis,
                origin, R_origin, link.mass, link.com, link.inertia_com,
            ))
            parent = len(bodies) - 1
        bodies.append(_Body(
            "ee", parent, None, "fixed", None,
            description.tool_origin, quat_to_rot(description.tool_quat),
            0.0, np.zeros(3), np.zeros((3, 3)),
        ))
        self.bodies = bodies
        self.ee_index = len(bodies) - 1
        for i, b in enumerate(bodies):
            chain = []
            j = i
            while j > 0:
                chain.append(j)
                j = bodies[j].parent
            b.ancestors = list(reversed(chain))

        r, bb = base.wheel_radius, base.half_track
        self._r = r
        self._b = bb

    # ------------------------------------------------------------------
    # reduced-coordinate maps
    # ------------------------------------------------------------------

    def motion_map(self, q: np.ndarray) -> np.ndarray:
        """S(q): qdot = S @ eta for the admissible velocities."""
        r, b = self._r, self._b
        phi = q[2]
        S = np.zeros((self.nq, self.nv))
        half = 0.5 * r
        S[0, 0] = half * np.cos(phi)
        S[0, 1] = half * np.cos(phi)
        S[1, 0] = half * np.sin(phi)
        S[1, 1] = half * np.sin(phi)
        S[2, 0] = r / (2.0 * b)
        S[2, 1] = -r / (2.0 * b)
        S[3, 0] = 1.0
        S[4, 1] = 1.0
        S[5:, 2:] = np.eye(self.n_arm)
        return S

    def motion_map_rate(self, q: np.ndarray, eta: np.ndarray) -> np.ndarray:
        """dS/dt along the current motion (only the heading rows vary)."""
        r, b = self._r, self._b
        phi = q[2]
        phidot = r * (eta[0] - eta[1]) / (2.0 * b)
        dS = np.zeros((self.nq, self.nv))
        half = 0.5 * r
        dS[0, 0] = -half * np.sin(phi) * phidot
        dS[0, 1] = -half * np.sin(phi) * phidot
        dS[1, 0] = half * np.cos(phi) * phidot
        dS[1, 1] = half * np.cos(phi) * phidot
        return dS

    def constraint_matrix(self, q: np.ndarray) -> np.ndarray:
        """Pfaffian rows A_c(q) with A_c @ qdot = 0: no side slip, wheels roll."""
        r, b = self._r, self._b
        phi = q[2]
        A = np.zeros((3, self.nq))
        A[0, 0], A[0, 1] = -np.sin(phi), np.cos(phi)
        A[1, 0], A[1, 1] = np.cos(phi), np.sin(phi)
        A[1, 3] = A[1, 4] = -0.5 * r
        A[2, 2] = 1.0
        A[2, 3] = -r / (2.0 * b)
        A[2, 4] = r / (2.0 * b)
        return A

    # ------------------------------------------------------------------
    # kinematics
    # ------------------------------------------------------------------

    def _kinematics(self, q, qd=None, qdd=None) -> _KinState:
        n = len(self.bodies)
        st = _KinState(n)
        want_vel = qd is not None
        want_acc = qdd is not None
        phi = q[2]
        c, s = np.cos(phi), np.sin(phi)
        st.R[0] = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        st.o[0] = np.array([q[0], q[1], 0.0])
        if want_vel:
            st.w[0] = np.array([0.0, 0.0, qd[2]])
            st.v[0] = np.array([qd[0], qd[1], 0.0])
        if want_acc:
            st.dw[0] = np.array([0.0, 0.0, qdd[2]])
            st.a[0] = np.array([qdd[0], qdd[1], 0.0])

        for i in range(1, n):
            b = self.bodies[i]
            lam = b.parent
            R_lam, o_lam = st.R[lam], st.o[lam]
            R_pre = R_lam @ b.R_origin
            r_off = R_lam @ b.origin
            if b.joint == "revolute":
                qi = q[b.q_index]
                s_w = R_pre @ b.axis
                st.R[i] = R_pre @ _rodrigues(b.axis, qi)
                st.o[i] = o_lam + r_off
            elif b.joint == "prismatic":
                qi = q[b.q_index]
                s_w = R_pre @ b.axis
                st.R[i] = R_pre
                st.o[i] = o_lam + r_off + qi * s_w
            else:  # fixed
                s_w = None
                st.R[i] = R_pre
                st.o[i] = o_lam + r_off
            if not want_vel:
                continue
            w_lam, v_lam = st.w[lam], st.v[lam]
            r_vec = st.o[i] - o_lam
            if b.joint == "revolute":
                qdi = qd[b.q_index]
                st.w[i] = w_lam + qdi * s_w
                st.v[i] = v_lam + np.cross(w_lam, r_vec)
            elif b.joint == "prismatic":
                qdi = qd[b.q_index]
                st.w[i] = w_lam
                st.v[i] = v_lam + np.cross(w_lam, r_vec) + qdi * s_w
            else:
                st.w[i] = w_lam
                st.v[i] = v_lam + np.cross(w_lam, r_vec)
            if not want_acc:
                continue
            dw_lam, a_lam = st.dw[lam], st.a[lam]
            centrip = a_lam + np.cross(dw_lam, r_vec) + np.cross(w_lam, np.cross(w_lam, r_vec))
            if b.joint == "revolute":
                qddi = qdd[b.q_index]
                st.dw[i] = dw_lam + qddi * s_w + np.cross(w_lam, qdi * s_w)
                st.a[i] = centrip
            elif b.joint == "prismatic":
                qddi = qdd[b.q_index]
                st.dw[i] = dw_lam
                st.a[i] = centrip + 2.0 * np.cross(w_lam, qdi * s_w) + qddi * s_w
            else:
                st.dw[i] = dw_lam
                st.a[i] = centrip
        return st

    def forward_kinematics(self, q: np.ndarray) -> dict:
        """World pose of every body frame, keyed by body name."""
        st = self._kinematics(q)
        return {
            b.name: Pose(st.o[i], rot_to_quat(st.R[i]))
            for i, b in enumerate(self.bodies)
        }

    def ee_pose(self, q: np.ndarray) -> Pose:
        st = self._kinematics(q)
        i = self.ee_index
        return Pose(st.o[i], rot_to_quat(st.R[i]))

    def _body_jacobian(self, q, st: _KinState, i: int) -> np.ndarray:
        """6 x nq world Jacobian of body i's frame origin, rows (v; w)."""
        J = np.zeros((6, self.nq))
        o_i = st.o[i]
        # planar base freedoms move everything
        J[0, 0] = 1.0
        J[1, 1] = 1.0
        ez = np.array([0.0, 0.0, 1.0])
        J[:3, 2] = np.cross(ez, o_i - st.o[0])
        J[3:, 2] = ez
        for j in self.bodies[i].ancestors:
            b = self.bodies[j]
            if b.q_index is None:
                continue
            R_pre = st.R[self.bodies[j].parent] @ b.R_origin
            s_w = R_pre @ b.axis
            if b.joint == "revolute":
                J[:3, b.q_index] = np.cross(s_w, o_i - st.o[j])
                J[3:, b.q_index] = s_w
            else:  # prismatic
                J[:3, b.q_index] = s_w
        return J

    def ee_jacobian(self, q: np.ndarray) -> np.ndarray:
        """6 x nq Jacobian of the EE frame in the world, rows (v; w)."""
        st = self._kinematics(q)
        return self._body_jacobian(q, st, self.ee_index)

    def reduced_ee_jacobian(self, q: np.ndarray) -> np.ndarray:
        """6 x nv Jacobian mapping eta to the EE twist."""
        return self.ee_jacobian(q) @ self.motion_map(q)

    def ee_bias_accel(self, q: np.ndarray, eta: np.ndarray) -> np.ndarray:
        """EE spatial acceleration with eta held constant (etadot = 0).

        In reduced coordinates ``xddot = J_red etadot + bias``; this is the
        bias, combining the Jacobian rate and the motion-map rate in one
        propagation with ``qddot = dS/dt eta``.
        """
        qd = self.motion_map(q) @ eta
        qdd = self.motion_map_rate(q, eta) @ eta
        st = self._kinematics(q, qd, qdd)
        i = self.ee_index
        return np.concatenate([st.a[i], st.dw[i]])

    def ee_twist(self, q: np.ndarray, eta: np.ndarray) -> np.ndarray:
        qd = self.motion_map(q) @ eta
        st = self._kinematics(q, qd)
        i = self.ee_index
        return np.concatenate([st.v[i], st.w[i]])

    # ------------------------------------------------------------------
    # dynamics
    # ------------------------------------------------------------------

    def _world_inertia(self, st: _KinState, i: int) -> tuple:
        """(mass, h_world, J_world) of body i about its frame origin."""
        b = self.bodies[i]
        R = st.R[i]
        c_w = R @ b.com
        h = b.mass * c_w
        J = R @ b.inertia_com @ R.T + b.mass * (
            np.dot(c_w, c_w) * np.eye(3) - np.outer(c_w, c_w)
        )
        return b.mass, h, J

    def mass_matrix_full(self, q: np.ndarray) -> np.ndarray:
        """nq x nq mass matrix from per-body Jacobians and spatial inertias."""
        st = self._kinematics(q)
        M = np.zeros((self.nq, self.nq))
        for i, b in enumerate(self.bodies):
            if b.mass == 0.0 and not np.any(b.inertia_com):
                continue
            m, h, J_o = self._world_inertia(st, i)
            Sh = skew(h)
            I_sp = np.block([
                [m * np.eye(3), -Sh],
                [Sh, J_o],
            ])
            J_b = self._body_jacobian(q, st, i)
            M += J_b.T @ I_sp @ J_b
        return M

    def inverse_dynamics_full(self, q, qd, qdd) -> np.ndarray:
        """Generalized forces (length nq) realizing qdd at state (q, qd).

        Independent route from :meth:`mass_matrix_full`: propagates world
        accelerations down the tree and maps each body's Newton-Euler wrench
        through its Jacobian.
        """
        st = self._kinematics(q, qd, qdd)
        tau = np.zeros(self.nq)
        for i, b in enumerate(self.bodies):
            if b.mass == 0.0 and not np.any(b.inertia_com):
                continue
            m, h, J_o = self._world_inertia(st, i)
            params = InertialParams(m, h, J_o)
            w = newton_euler_wrench(params, st.a[i], st.dw[i], st.w[i], g=self.gravity)
            J_b = self._body_jacobian(q, st, i)
            tau += J_b.T @ w
        return tau

    def gravity_full(self, q: np.ndarray) -> np.ndarray:
        zero = np.zeros(self.nq)
        return self.inverse_dynamics_full(q, zero, zero)

    def velocity_bias_full(self, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
        """Coriolis/centrifugal generalized forces at zero acceleration."""
        zero = np.zeros(self.nq)
        return self.inverse_dynamics_full(q, qd, zero) - self.gravity_full(q)

    def reduced_dynamics(self, q: np.ndarray, eta: np.ndarray) -> tuple:
        """(M, c, g) of ``M etadot + c + g = tau + J_red^T F_ext``.

        ``c`` collects both the Coriolis forces and the motion-map rate
        term ``S^T Mfull dS/dt eta``.
        """
        S = self.motion_map(q)
        dS = self.motion_map_rate(q, eta)
        qd = S @ eta
        M_full = self.mass_matrix_full(q)
        g_full = self.gravity_full(q)
        cor_full = self.velocity_bias_full(q, qd)
        M = S.T @ M_full @ S
        c = S.T @ (M_full @ (dS @ eta) + cor_full)
        g = S.T @ g_full
        return M, c, g

    def control_quantities(self, q: np.ndarray, eta: np.ndarray) -> "TickQuantities":
        """Everything one control tick needs, from a single propagation.

        Computes the reduced mass matrix, the combined Coriolis+gravity
        bias, the reduced EE Jacobian, the EE bias acceleration, pose and
        twist in one pass.  Exactly equal to composing the one-quantity
        methods (the tests hold it to them); exists because the simulator
        calls this once per millisecond.
        """
        S = self.motion_map(q)
        qd = S @ eta
        qdd0 = self.motion_map_rate(q, eta) @ eta
        st = self._kinematics(q, qd, qdd0)

        M_full = np.zeros((self.nq, self.nq))
        force = np.zeros(self.nq)
        for i, b in enumerate(self.bodies):
            if b.mass == 0.0 and not np.any(b.inertia_com):
                continue
            m, h, J_o = self._world_inertia(st, i)
            Sh = skew(h)
            I_sp = np.block([
                [m * np.eye(3), -Sh],
                [Sh, J_o],
            ])
            J_b = self._body_jacobian(q, st, i)
            M_full += J_b.T @ I_sp @ J_b
            w = newton_euler_wrench(
                InertialParams(m, h, J_o), st.a[i], st.dw[i], st.w[i], g=self.gravity
            )
            force += J_b.T @ w

        i = self.ee_index
        J_ee = self._body_jacobian(q, st, i)
        # with qdd = dS/dt eta, the propagated ID already contains the
        # S^T M dS/dt eta term, so S^T force is exactly c + g
        return TickQuantities(
            M=S.T @ M_full @ S,
            bias=S.T @ force,
            J_red=J_ee @ S,
            bias_accel=np.concatenate([st.a[i], st.dw[i]]),
            pose=Pose(st.o[i], rot_to_quat(st.R[i])),
            twist=np.concatenate([st.v[i], st.w[i]]),
        )

    def forward_dynamics(self, q, eta, tau, tau_ext=None, F_ext=None) -> np.ndarray:
        """etadot from applied generalized forces and external loads.

        ``tau_ext`` is a generalized external force in the reduced
        coordinates; ``F_ext`` is a wrench the environment applies to the
        EE (world axes, about the EE origin) and is mapped through the
        reduced Jacobian.  Both add to the applied ``tau``.
        """
        M, c, g = self.reduced_dynamics(q, eta)
        rhs = np.asarray(tau, dtype=float).reshape(self.nv) - c - g
        if tau_ext is not None:
            rhs = rhs + np.asarray(tau_ext, dtype=float).reshape(self.nv)
        if F_ext is not None:
            rhs = rhs + self.reduced_ee_jacobian(q).T @ np.asarray(F_ext, dtype=float).reshape(6)
        if np.linalg.eigvalsh(M)[0] < 1e-9:
            raise NumericalError("reduced mass matrix lost positive definiteness")
        return np.linalg.solve(M, rhs)

    def integrate(self, q, eta, etadot, dt: float) -> tuple:
        """Semi-implicit Euler step honoring the nonholonomic constraint."""
        eta_new = eta + etadot * dt
        q_new = q + (self.motion_map(q) @ eta_new) * dt
        return q_new, eta_new

    # ------------------------------------------------------------------
    # energetics and limits
    # ------------------------------------------------------------------

    def kinetic_energy(self, q: np.ndarray, eta: np.ndarray) -> float:
        M = self.motion_map(q).T @ self.mass_matrix_full(q) @ self.motion_map(q)
        return float(0.5 * eta @ M @ eta)

    def kinetic_energy_bodywise(self, q: np.ndarray, eta: np.ndarray) -> float:
        """Kinetic energy summed body by body from CoM velocities.

        Written against the CoM-referenced formula ``1/2 m |v_c|^2 +
        1/2 w . J_c w`` so it shares nothing with the mass-matrix route.
        """
        qd = self.motion_map(q) @ eta
        st = self._kinematics(q, qd)
        total = 0.0
        for i, b in enumerate(self.bodies):
            if b.mass == 0.0 and not np.any(b.inertia_com):
                continue
            c_w = st.R[i] @ b.com
            v_com = st.v[i] + np.cross(st.w[i], c_w)
            J_c = st.R[i] @ b.inertia_com @ st.R[i].T
            total += 0.5 * b.mass * float(v_com @ v_com)
            total += 0.5 * float(st.w[i] @ J_c @ st.w[i])
        return total

    def potential_energy(self, q: np.ndarray) -> float:
        st = self._kinematics(q)
        total = 0.0
        for i, b in enumerate(self.bodies):
            if b.mass == 0.0:
                continue
            com_w = st.o[i] + st.R[i] @ b.com
            total -= b.mass * float(self.gravity @ com_w)
        return total

    def torque_limits(self) -> np.ndarray:
        base = self.desc.base
        return np.array(
            [base.wheel_torque_limit] * 2
            + [link.torque_limit for link in self.desc.links]
        )

    def accel_limits(self) -> np.ndarray:
        base = self.desc.base
        return np.array(
            [base.wheel_accel_limit] * 2
            + [link.accel_limit for link in self.desc.links]
        )

    def home_configuration(self) -> tuple:
        """(q, eta) of the configured home posture, base at the origin."""
        q = np.zeros(self.nq)
        q[5:] = self.desc.home_arm
        return q, np.zeros(self.nv)
