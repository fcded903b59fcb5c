"""Closed-loop engine for the shared-carry scenario.

Couples the mobile-manipulator model, a rigidly grasped object, and a
scripted partner into one fixed-step rollout.  The controller inside the
loop is the real one -- estimator, impedance law, QP -- fed only what a
robot would have: the delayed, noisy wrist wrench and its own state.  The
plant, meanwhile, integrates the true coupled dynamics: the object's
inertia is folded into the joint-space equations (it is rigidly attached,
so it cannot be treated as an external force without making the effective
mass matrix inconsistent), and the partner's contribution enters through
the grasp map.

Everything is deterministic given the config: one seeded generator drives
all noise, and the log writer formats floats identically run to run.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IntegrationDiverged, SchemaError
from .estimator import EkfTuning, InertialParamEkf
from .excitation import PivotExcitation
from .impedance import (
    ImpedanceGains,
    cartesian_inertia,
    estimate_partner_wrench,
    grasp_in_world,
    impedance_task_accel,
    pose_error,
    shape_inertia,
)
from .object_dynamics import (
    GRAVITY,
    InertialParams,
    from_point_masses,
    gravity_wrench,
    regressor,
    spatial_inertia,
    velocity_bias_wrench,
)
from .qp_control import ActiveSetQp, QpStatus, TaskSet, clamp_torque, feedback_linearize
from .robot_model import RobotDescription, RobotModel
from .spatial import PartialGraspMatrix, quat_to_rot, rot6

log = logging.getLogger("colift.simulator")

LOG_SCHEMA = "colift-log v1"

PHASE_LIFT = 1
PHASE_ESTIMATE = 2
PHASE_TRANSPORT = 3
PHASE_COMPENSATE = 4
PHASE_FOLLOW = 5
PHASE_HOLD = 6

_PHASE_NAMES = {
    PHASE_LIFT: "lift",
    PHASE_ESTIMATE: "estimate",
    PHASE_TRANSPORT: "transport",
    PHASE_COMPENSATE: "compensate",
    PHASE_FOLLOW: "follow",
    PHASE_HOLD: "hold",
}


def _min_jerk(t: float, T: float) -> tuple:
    """Normalized minimum-jerk blend: (position, velocity, accel) factors."""
    if T <= 0.0 or t >= T:
        return 1.0, 0.0, 0.0
    if t <= 0.0:
        return 0.0, 0.0, 0.0
    s = t / T
    p = s**3 * (10.0 - 15.0 * s + 6.0 * s * s)
    v = (30.0 * s**2 - 60.0 * s**3 + 30.0 * s**4) / T
    a = (60.0 * s - 180.0 * s**2 + 120.0 * s**3) / T**2
    return p, v, a


# ---------------------------------------------------------------------------
# object and partner
# ---------------------------------------------------------------------------

@dataclass
class ObjectSpec:
    """Carried object as point masses in the EE frame.

    ``partner_supported`` marks the masses whose dynamic load the partner
    carries under ideal sharing; the remaining masses are the robot-side
    (effective) share.
    """

    positions: np.ndarray
    masses: np.ndarray
    partner_supported: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.masses = np.asarray(self.masses, dtype=float).reshape(-1)
        self.partner_supported = np.asarray(self.partner_supported, dtype=bool).reshape(-1)
        problems = []
        if self.positions.shape[0] != self.masses.shape[0]:
            problems.append("object: need one mass per position")
        if self.partner_supported.shape[0] != self.masses.shape[0]:
            problems.append("object: need one partner_supported flag per mass")
        if np.any(self.masses <= 0.0):
            problems.append("object: masses must be positive")
        if problems:
            raise ConfigError(problems)

    def full_params(self) -> InertialParams:
        return from_point_masses(self.positions, self.masses)

    def effective_params(self) -> InertialParams:
        """Robot-side share under ideal load sharing."""
        keep = ~self.partner_supported
        if not np.any(keep):
            raise ConfigError("object: at least one mass must be robot-supported")
        return from_point_masses(self.positions[keep], self.masses[keep])

    def partner_params_about(self, point: np.ndarray) -> InertialParams:
        """Partner-carried masses, re-referenced to ``point`` (EE frame)."""
        sel = self.partner_supported
        if not np.any(sel):
            return InertialParams(0.0, np.zeros(3), np.zeros((3, 3)))
        return from_point_masses(self.positions[sel] - np.asarray(point, dtype=float), self.masses[sel])


def default_object() -> ObjectSpec:
    """Two-handle board: equal point masses at the robot and partner ends."""
    return ObjectSpec(
        positions=[[0.0, 0.0, 0.049], [0.0, -1.366, 0.049]],
        masses=[1.115, 1.115],
        partner_supported=[False, True],
    )


@dataclass
class IntentSegment:
    """One scripted partner action during the follow phase.

    Times are relative to the phase start.  ``wrench`` is a 6-vector in the
    EE body frame at the partner's grasp point; ``velocity`` a 3-vector
    world-frame hand velocity target realized through a proportional pull.
    """

    t_start: float
    t_end: float
    wrench: np.ndarray | None = None
    velocity: np.ndarray | None = None

    def __post_init__(self):
        if self.t_end <= self.t_start:
            raise ConfigError(
                f"intent segment: t_end {self.t_end} must exceed t_start {self.t_start}"
            )
        if (self.wrench is None) == (self.velocity is None):
            raise ConfigError("intent segment: give exactly one of wrench or velocity")
        if self.wrench is not None:
            self.wrench = np.asarray(self.wrench, dtype=float).reshape(6)
        if self.velocity is not None:
            self.velocity = np.asarray(self.velocity, dtype=float).reshape(3)


class _AgentContext:
    """What a partner model may look at each tick."""

    __slots__ = ("t", "R", "g_body", "hand_pos", "hand_vel")

    def __init__(self, t, R, g_body, hand_pos, hand_vel):
        self.t = t
        self.R = R
        self.g_body = g_body
        self.hand_pos = hand_pos
        self.hand_vel = hand_vel


class HumanAgent:
    """Base partner model.

    ``folds_share`` tells the plant whether the partner carries the ideal
    dynamic share of their masses (folded analytically into the plant) or
    whether the whole object rests on the robot and the partner only adds
    the explicit wrench from :meth:`known_wrench`.
    """

    folds_share = False
    _grasp_offset = np.zeros(3)

    def reset(self, ctx: _AgentContext, object_spec: ObjectSpec, rng) -> None:
        pass

    def known_wrench(self, ctx: _AgentContext) -> np.ndarray:
        """Partner wrench at their grasp point, EE body frame, excluding
        any ideal folded share."""
        return np.zeros(6)


class HalfLoadShare(HumanAgent):
    """Ideal sharer: carries exactly the dynamic load of their masses.

    The share is folded into the plant, which makes the robot-side wrench
    exactly the effective-parameter regressor output -- the cleanest case,
    and the paper-style ground truth for what the estimator should find.
    """

    folds_share = True


class PinSupport(HumanAgent):
    """Frictionless vertical prop: a constant world-frame force.

    Magnitude follows the static lever rule at the initial configuration
    (the fraction of the weight the far support carries for the object's
    CoM position), then never changes -- a deliberately crude partner.
    """

    def __init__(self):
        self._force_world = np.zeros(3)

    @staticmethod
    def static_share(object_spec: ObjectSpec, grasp_offset: np.ndarray) -> float:
        """Weight fraction the hand-side support takes, by the lever rule."""
        full = object_spec.full_params()
        offset = np.asarray(grasp_offset, dtype=float)
        span = float(np.linalg.norm(offset))
        if span < 1e-9:
            return 0.5
        u = offset / span
        along = float(np.dot(full.com, u))
        return float(np.clip(along / span, 0.0, 1.0))

    def reset(self, ctx, object_spec, rng):
        share = self.static_share(object_spec, self._grasp_offset)
        weight = object_spec.full_params().mass * abs(GRAVITY[2])
        self._force_world = np.array([0.0, 0.0, share * weight])

    def known_wrench(self, ctx):
        return np.concatenate([ctx.R.T @ self._force_world, np.zeros(3)])


class CompliantHold(HumanAgent):
    """Spring-damper hand about its initial position, plus static share.

    Adds seeded smooth jitter so the hand never holds perfectly still --
    the robustness variant of the partner.
    """

    def __init__(self, stiffness: float = 400.0, damping: float = 40.0,
                 jitter: float = 0.5):
        self.stiffness = float(stiffness)
        self.damping = float(damping)
        self.jitter = float(jitter)
        self._anchor = np.zeros(3)
        self._force_static = np.zeros(3)
        self._freqs = np.zeros((3, 3))
        self._phases = np.zeros((3, 3))

    def reset(self, ctx, object_spec, rng):
        self._anchor = ctx.hand_pos.copy()
        share = PinSupport.static_share(object_spec, self._grasp_offset)
        weight = object_spec.full_params().mass * abs(GRAVITY[2])
        self._force_static = np.array([0.0, 0.0, share * weight])
        self._freqs = rng.uniform(0.8, 2.5, size=(3, 3))
        self._phases = rng.uniform(0.0, 2.0 * np.pi, size=(3, 3))

    def known_wrench(self, ctx):
        f = (
            self._force_static
            + self.stiffness * (self._anchor - ctx.hand_pos)
            - self.damping * ctx.hand_vel
        )
        if self.jitter > 0.0:
            wob = np.sin(2.0 * np.pi * self._freqs * ctx.t + self._phases)
            f = f + (self.jitter / 3.0) * wob.sum(axis=1)
        return np.concatenate([ctx.R.T @ f, np.zeros(3)])


class WrenchProfile(HumanAgent):
    """Partner that plays back a scripted body-frame wrench sequence."""

    def __init__(self, segments):
        self.segments = list(segments)

    def known_wrench(self, ctx):
        out = np.zeros(6)
        for seg in self.segments:
            if seg.t_start <= ctx.t < seg.t_end and seg.wrench is not None:
                out = out + seg.wrench
        return out


HUMAN_MODES = {
    "half_load": HalfLoadShare,
    "pin": PinSupport,
    "compliant": CompliantHold,
    "profile": WrenchProfile,
}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class PhaseSchedule:
    lift: float = 2.0
    estimate: float = 10.0
    transport: float = 5.0
    compensate: float = 3.0
    follow: float = 4.0
    hold: float = 1.0

    def __post_init__(self):
        problems = [
            f"phases.{name}: duration must be > 0 (got {getattr(self, name)})"
            for name in ("lift", "estimate", "transport", "compensate", "follow", "hold")
            if getattr(self, name) <= 0.0
        ]
        if problems:
            raise ConfigError(problems)

    def as_list(self) -> list:
        return [
            (PHASE_LIFT, self.lift),
            (PHASE_ESTIMATE, self.estimate),
            (PHASE_TRANSPORT, self.transport),
            (PHASE_COMPENSATE, self.compensate),
            (PHASE_FOLLOW, self.follow),
            (PHASE_HOLD, self.hold),
        ]


@dataclass
class ScenarioConfig:
    """Everything one deterministic scenario run depends on."""

    robot: RobotDescription
    object_spec: ObjectSpec = field(default_factory=default_object)
    grasp_offset: np.ndarray = field(default_factory=lambda: np.array([0.0, -1.5, 0.0]))
    human_mode: str = "half_load"
    hold_stiffness: float = 400.0
    hold_damping: float = 40.0
    hand_jitter: float = 0.5
    velocity_gain: float = 50.0
    intent: list = field(default_factory=list)
    wrench_profile: list = field(default_factory=list)
    phases: PhaseSchedule = field(default_factory=PhaseSchedule)
    lift_height: float = 0.10
    transport_distance: float = 0.30
    transport_move_time: float = 3.0
    excitation_amplitude: float = 0.2
    excitation_frequency: float = 0.4
    tuning: EkfTuning = field(default_factory=EkfTuning)
    estimator_rate: float = 1000.0
    gains: ImpedanceGains = field(default_factory=ImpedanceGains)
    dt: float = 0.001
    noise_scale: float = 0.01
    seed: int = 0
    use_estimate: bool = True
    posture_kp: float = 4.0
    posture_kd: float = 4.0
    base_hold: float = 0.0
    jig_position: np.ndarray | None = None
    jig_quaternion: np.ndarray | None = None

    def __post_init__(self):
        self.grasp_offset = np.asarray(self.grasp_offset, dtype=float).reshape(3)
        problems = []
        if self.dt <= 0.0:
            problems.append(f"scenario.dt: must be > 0 (got {self.dt})")
        if self.estimator_rate <= 0.0:
            problems.append(f"estimator.rate: must be > 0 (got {self.estimator_rate})")
        if self.human_mode not in HUMAN_MODES:
            problems.append(
                f"scenario.human_mode: unknown mode {self.human_mode!r}; "
                f"choose from {sorted(HUMAN_MODES)}"
            )
        if self.noise_scale < 0.0:
            problems.append(f"scenario.noise_scale: must be >= 0 (got {self.noise_scale})")
        if self.transport_move_time > self.phases.transport:
            problems.append(
                "phases.transport: must cover transport_move_time "
                f"({self.transport_move_time} > {self.phases.transport})"
            )
        times = sorted((seg.t_start, seg.t_end) for seg in self.intent)
        for (a0, a1), (b0, b1) in zip(times, times[1:]):
            if b0 < a1:
                problems.append("intent: segments must not overlap")
                break
        if problems:
            raise ConfigError(problems)

    def build_agent(self) -> HumanAgent:
        cls = HUMAN_MODES[self.human_mode]
        if cls is CompliantHold:
            agent = CompliantHold(self.hold_stiffness, self.hold_damping, self.hand_jitter)
        elif cls is WrenchProfile:
            agent = WrenchProfile(self.wrench_profile)
        else:
            agent = cls()
        agent._grasp_offset = self.grasp_offset
        return agent


# ---------------------------------------------------------------------------
# coupled plant
# ---------------------------------------------------------------------------

class CoupledPlant:
    """Robot + rigidly attached object + explicit partner wrench.

    The object's spatial inertia is folded into the reduced equations of
    motion (a rigid attachment changes the mass matrix; treating the
    object wrench as external feedback would let the combined system go
    indefinite).  ``params`` may be None for a bare robot.
    """

    def __init__(self, model: RobotModel, params: InertialParams | None,
                 grasp: PartialGraspMatrix | None = None):
        self.model = model
        self.params = params
        self.grasp = grasp
        self._Msp = spatial_inertia(params) if params is not None else None

    def object_wrench_terms(self, R: np.ndarray, omega_body: np.ndarray) -> np.ndarray:
        """Acceleration-independent part of the object's body wrench."""
        g_body = R.T @ self.model.gravity
        return (
            velocity_bias_wrench(self.params, omega_body)
            - gravity_wrench(self.params, g_body)
        )

    def step(self, q, eta, tau, F_partner_body=None, tq=None, dt: float = 0.001):
        """Advance one step; returns (q, eta, etadot, F_meas_body, accel_w).

        ``F_partner_body`` is the partner's wrench at their grasp point
        (EE body frame); requires ``grasp``.  ``F_meas_body`` is what an
        ideal wrist sensor between flange and object reads (the wrench the
        robot supplies to the object).
        """
        if tq is None:
            tq = self.model.control_quantities(q, eta)
        if self.params is None:
            etadot = np.linalg.solve(tq.M, np.asarray(tau, dtype=float) - tq.bias)
            accel_w = tq.J_red @ etadot + tq.bias_accel
            q, eta = self.model.integrate(q, eta, etadot, dt)
            return q, eta, etadot, np.zeros(6), accel_w

        R = quat_to_rot(tq.pose.quaternion)
        R6 = rot6(R)
        omega_body = R.T @ tq.twist[3:]
        JTR6 = tq.J_red.T @ R6
        # acceleration-independent object wrench: velocity bias, gravity,
        # and whatever share the partner takes through the grasp map
        rest = self.object_wrench_terms(R, omega_body)
        if F_partner_body is not None:
            rest = rest - self.grasp.matrix @ np.asarray(F_partner_body, dtype=float)

        M_lock = tq.M + JTR6 @ self._Msp @ (R6.T @ tq.J_red)
        rhs = (
            np.asarray(tau, dtype=float) - tq.bias
            - JTR6 @ (self._Msp @ (R6.T @ tq.bias_accel) + rest)
        )
        etadot = np.linalg.solve(M_lock, rhs)
        accel_w = tq.J_red @ etadot + tq.bias_accel
        F_meas = self._Msp @ (R6.T @ accel_w) + rest
        q, eta = self.model.integrate(q, eta, etadot, dt)
        return q, eta, etadot, F_meas, accel_w

    def total_energy(self, q, eta) -> float:
        """Kinetic + potential energy of robot and attached object."""
        E = self.model.kinetic_energy(q, eta) + self.model.potential_energy(q)
        if self.params is None:
            return float(E)
        pose = self.model.ee_pose(q)
        R = quat_to_rot(pose.quaternion)
        V = self.model.ee_twist(q, eta)
        I_w = rot6(R) @ self._Msp @ rot6(R).T
        com_w = pose.position + R @ self.params.com
        E += 0.5 * V @ I_w @ V - self.params.mass * float(np.dot(GRAVITY, com_w))
        return float(E)


def passive_energy_audit(
    model: RobotModel,
    params: InertialParams | None = None,
    duration: float = 1.0,
    dt: float = 0.001,
    q0: np.ndarray | None = None,
    eta0: np.ndarray | None = None,
) -> float:
    """Unforced rollout energy drift, as a fraction of the energy exchanged.

    With zero torque and no partner, total mechanical energy is conserved;
    the returned value is ``max |E(t) - E(0)|`` divided by the largest
    kinetic energy change during the rollout (so a rollout that barely
    moves cannot pass vacuously).  The drift of the fixed-step integrator
    scales with how violent the motion is, so a meaningful audit starts
    near a hanging equilibrium with a small velocity kick rather than
    letting the arm fall from a raised pose.
    """
    q, eta = model.home_configuration()
    if q0 is not None:
        q = np.asarray(q0, dtype=float).reshape(model.nq)
    if eta0 is not None:
        eta = np.asarray(eta0, dtype=float).reshape(model.nv)
    plant = CoupledPlant(model, params)
    E0 = plant.total_energy(q, eta)
    tau = np.zeros(model.nv)
    drift = 0.0
    exchanged = 0.0
    ke0 = model.kinetic_energy(q, eta)
    for _ in range(int(round(duration / dt))):
        q, eta, *_ = plant.step(q, eta, tau, dt=dt)
        E = plant.total_energy(q, eta)
        drift = max(drift, abs(E - E0))
        exchanged = max(exchanged, abs(model.kinetic_energy(q, eta) - ke0))
    return drift / max(exchanged, 1e-9)


# ---------------------------------------------------------------------------
# log
# ---------------------------------------------------------------------------

def _columns() -> list:
    cols = ["t", "phase"]
    cols += [f"ee_{c}" for c in ("px", "py", "pz", "qx", "qy", "qz", "qw")]
    cols += [f"ee_{c}" for c in ("vx", "vy", "vz", "wx", "wy", "wz")]
    cols += [f"des_{c}" for c in ("px", "py", "pz", "qx", "qy", "qz", "qw")]
    cols += [f"fext_{c}" for c in ("fx", "fy", "fz", "tx", "ty", "tz")]
    cols += [f"fhat_{c}" for c in ("fx", "fy", "fz", "tx", "ty", "tz")]
    cols += [f"phi_{n}" for n in ("m", "hx", "hy", "hz", "jxx", "jxy", "jxz", "jyy", "jyz", "jzz")]
    cols += [f"pdiag_{i}" for i in range(10)]
    cols += ["qp_status", "qp_residual"]
    cols += ["hand_vx", "hand_vy", "hand_vz"]
    return cols


class SimLog:
    """Fixed-schema per-tick record of one scenario run.

    Stored as a dense float array; written as CSV behind a one-line schema
    header.  Floats are formatted with 12 significant digits, which makes
    the write-read-write cycle byte-stable.
    """

    COLUMNS = _columns()

    def __init__(self, data: np.ndarray):
        data = np.asarray(data, dtype=float)
        if data.size == 0:
            data = data.reshape(0, len(self.COLUMNS))
        if data.ndim != 2 or data.shape[1] != len(self.COLUMNS):
            raise SchemaError(
                f"log data must have {len(self.COLUMNS)} columns, got {data.shape}"
            )
        self.data = data

    def __len__(self) -> int:
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.COLUMNS.index(name)]
        except ValueError:
            raise SchemaError(f"no such log column: {name!r}") from None

    def columns(self, *names) -> np.ndarray:
        idx = [self.COLUMNS.index(n) for n in names]
        return self.data[:, idx]

    def phase_mask(self, phase: int) -> np.ndarray:
        return self.column("phase") == phase

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# {LOG_SCHEMA}\n")
            fh.write(",".join(self.COLUMNS) + "\n")
            for row in self.data:
                fh.write(",".join(f"{v:.12g}" for v in row) + "\n")

    @classmethod
    def read(cls, path) -> "SimLog":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != f"# {LOG_SCHEMA}":
                raise SchemaError(
                    f"{path}: expected schema header '# {LOG_SCHEMA}', got {header!r}"
                )
            names = fh.readline().strip()
            if names.split(",") != cls.COLUMNS:
                raise SchemaError(f"{path}: column header does not match {LOG_SCHEMA}")
            rows = [
                [float(v) for v in line.split(",")]
                for line in fh
                if line.strip()
            ]
        if not rows:
            return cls(np.empty((0, len(cls.COLUMNS))))
        return cls(np.asarray(rows, dtype=float))


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------

class _PhasePlan:
    """Desired-trajectory state machine across the six phases.

    The desired pose is carried continuously from phase to phase (each
    phase starts from the previous phase's *commanded* end, not from the
    drifted actual state), with one exception: the final hold adopts the
    actual pose, since follow-me deliberately let the partner move the
    robot away from any earlier reference.
    """

    def __init__(self, cfg: ScenarioConfig, start_pos, start_quat):
        self.cfg = cfg
        self.des_pos = np.asarray(start_pos, dtype=float).copy()
        self.des_quat = np.asarray(start_quat, dtype=float).copy()
        self.pivot = None
        self._entry_pos = self.des_pos.copy()
        self._entry_quat = self.des_quat.copy()

    def enter_phase(self, phase: int, actual_pose) -> None:
        self._entry_pos = self.des_pos.copy()
        self._entry_quat = self.des_quat.copy()
        if phase == PHASE_ESTIMATE:
            R = quat_to_rot(self.des_quat)
            hand = self.des_pos + R @ self.cfg.grasp_offset
            self.pivot = PivotExcitation(
                self.des_pos, hand,
                amplitude=self.cfg.excitation_amplitude,
                frequency=self.cfg.excitation_frequency,
                ee_quat_start=self.des_quat,
            )
        elif phase == PHASE_HOLD:
            self._entry_pos = np.asarray(actual_pose.position, dtype=float).copy()
            self._entry_quat = np.asarray(actual_pose.quaternion, dtype=float).copy()
            self.des_pos = self._entry_pos.copy()
            self.des_quat = self._entry_quat.copy()

    def desired(self, phase: int, t_local: float) -> tuple:
        """(pos, quat, twist, accel) of the reference at this tick."""
        cfg = self.cfg
        twist = np.zeros(6)
        accel = np.zeros(6)
        if phase == PHASE_LIFT:
            p, v, a = _min_jerk(t_local, cfg.phases.lift)
            pos = self._entry_pos + np.array([0.0, 0.0, cfg.lift_height * p])
            twist[2] = cfg.lift_height * v
            accel[2] = cfg.lift_height * a
            self.des_pos, self.des_quat = pos, self._entry_quat
        elif phase == PHASE_ESTIMATE:
            s = self.pivot.sample(t_local)
            pos = s.position
            self.des_pos, self.des_quat = pos, s.quaternion
            twist = np.concatenate([s.linear_velocity, s.angular_velocity])
            accel = np.concatenate([s.linear_accel, s.angular_accel])
        elif phase == PHASE_TRANSPORT:
            p, v, a = _min_jerk(t_local, cfg.transport_move_time)
            pos = self._entry_pos + np.array([cfg.transport_distance * p, 0.0, 0.0])
            twist[0] = cfg.transport_distance * v
            accel[0] = cfg.transport_distance * a
            self.des_pos, self.des_quat = pos, self._entry_quat
        else:  # compensate, follow, hold: hold the carried reference
            self.des_pos = self._entry_pos
            self.des_quat = self._entry_quat
        return self.des_pos, self.des_quat, twist, accel


def _intent_wrench(cfg: ScenarioConfig, t_local: float, ctx: _AgentContext) -> np.ndarray:
    out = np.zeros(6)
    for seg in cfg.intent:
        if seg.t_start <= t_local < seg.t_end:
            if seg.wrench is not None:
                out = out + seg.wrench
            else:
                pull = cfg.velocity_gain * (seg.velocity - ctx.hand_vel)
                out = out + np.concatenate([ctx.R.T @ pull, np.zeros(3)])
    return out


def run_scenario(cfg: ScenarioConfig, phase_only: int | None = None) -> SimLog:
    """Run the six-phase scenario (or one phase) and return the log.

    ``phase_only`` runs a single phase from a synthesized start: the robot
    at home, and -- for phases after the estimation window -- the filter
    preloaded with the ideal effective parameters, as if estimation had
    already converged.

    On integrator divergence the partially filled log is attached to the
    raised :class:`IntegrationDiverged` as ``partial_log``.
    """
    model = RobotModel(cfg.robot)
    grasp = PartialGraspMatrix(cfg.grasp_offset)
    agent = cfg.build_agent()
    params_plant = (
        cfg.object_spec.effective_params() if agent.folds_share
        else cfg.object_spec.full_params()
    )
    plant = CoupledPlant(model, params_plant, grasp)
    ekf = InertialParamEkf(cfg.tuning)
    qp = ActiveSetQp()
    rng = np.random.default_rng(cfg.seed)
    sigma = cfg.noise_scale * np.sqrt(np.diag(cfg.tuning.R))
    P_d = cfg.gains.wrench_weight
    torque_lim = model.torque_limits()
    accel_lim = model.accel_limits()
    home_arm = model.desc.home_arm

    schedule = cfg.phases.as_list()
    if phase_only is not None:
        if not 1 <= phase_only <= 6:
            raise ConfigError(f"phase_only: must be 1..6 (got {phase_only})")
        schedule = [schedule[phase_only - 1]]
        if phase_only >= PHASE_TRANSPORT:
            ekf.phi = cfg.object_spec.effective_params().as_vector()
            ekf.P = 1e-4 * np.eye(10)
    boundaries = np.cumsum([dur for _, dur in schedule])
    total = float(boundaries[-1])
    n_ticks = int(round(total / cfg.dt))

    q, eta = model.home_configuration()
    tq = model.control_quantities(q, eta)
    R = quat_to_rot(tq.pose.quaternion)
    plan = _PhasePlan(cfg, tq.pose.position, tq.pose.quaternion)

    hand_pos = tq.pose.position + R @ cfg.grasp_offset
    ctx = _AgentContext(0.0, R, R.T @ GRAVITY, hand_pos, np.zeros(3))
    agent.reset(ctx, cfg.object_spec, rng)

    # seed the one-tick-delayed sensor with the static wrench
    F_known0 = agent.known_wrench(ctx)
    F_sensor = (
        -gravity_wrench(params_plant, R.T @ GRAVITY)
        - grasp.matrix @ F_known0
    )
    if cfg.noise_scale > 0.0:
        F_sensor = F_sensor + sigma * rng.standard_normal(6)
    prev = {
        "a_b": np.zeros(3), "dw_b": np.zeros(3),
        "w_b": np.zeros(3), "g_b": R.T @ GRAVITY,
    }

    update_every = max(1, int(round(1.0 / (cfg.estimator_rate * cfg.dt))))
    hold_ticks = max(1, int(round(cfg.base_hold / cfg.dt))) if cfg.base_hold > 0 else 0
    held_base = None

    rows = np.empty((n_ticks, len(SimLog.COLUMNS)))
    phase_prev = None

    def flush(k: int) -> SimLog:
        return SimLog(rows[:k].copy())

    for k in range(n_ticks):
        t = k * cfg.dt
        idx = int(np.searchsorted(boundaries, t, side="right"))
        idx = min(idx, len(schedule) - 1)
        phase = schedule[idx][0]
        t_local = t - (float(boundaries[idx - 1]) if idx > 0 else 0.0)

        tq = model.control_quantities(q, eta)
        R = quat_to_rot(tq.pose.quaternion)
        R6 = rot6(R)

        if phase != phase_prev:
            plan.enter_phase(phase, tq.pose)
            log.info("t=%.3f entering phase %d (%s)", t, phase, _PHASE_NAMES[phase])
            phase_prev = phase

        if phase == PHASE_ESTIMATE and k % update_every == 0:
            ekf.step(prev["a_b"], prev["dw_b"], prev["w_b"], F_sensor, g=prev["g_b"])

        pos_des, quat_des, twist_des, accel_des = plan.desired(phase, t_local)
        perr = pose_error(tq.pose.position, tq.pose.quaternion, pos_des, quat_des)
        verr = tq.twist - twist_des

        M_x, _ = cartesian_inertia(tq.M, tq.J_red)
        G_w = grasp_in_world(grasp, R)
        phi_ctrl = ekf.phi if (cfg.use_estimate and phase >= PHASE_COMPENSATE) else np.zeros(10)
        A_prev = regressor(prev["a_b"], prev["dw_b"], prev["w_b"], g=prev["g_b"])
        F_hat_b = estimate_partner_wrench(A_prev, phi_ctrl, F_sensor, grasp)

        if phase >= PHASE_COMPENSATE:
            M_e = shape_inertia(M_x, G_w, P_d)
            partner_task = R6 @ F_hat_b
        else:
            M_e = M_x
            partner_task = None
        gains_tick = cfg.gains.follow_mode() if phase == PHASE_FOLLOW else cfg.gains
        a_task = impedance_task_accel(perr, verr, accel_des, M_e, gains_tick, partner_task)

        posture = np.concatenate([
            -cfg.posture_kd * eta[:2],
            cfg.posture_kp * (home_arm - q[5:]) - cfg.posture_kd * eta[2:],
        ])
        tasks = TaskSet(
            n=model.nv,
            p0_cartesian=(tq.J_red, tq.bias_accel, a_task),
            p1_joint=posture,
            lb=-accel_lim,
            ub=accel_lim,
        )
        sol = qp.solve(tasks.to_problem())
        etadot_cmd = sol.x
        if hold_ticks:
            if k % hold_ticks == 0 or held_base is None:
                held_base = etadot_cmd[:2].copy()
            else:
                etadot_cmd = etadot_cmd.copy()
                etadot_cmd[:2] = held_base

        tau = feedback_linearize(
            tq.M, tq.bias, np.zeros(model.nv), etadot_cmd,
            tau_ext=-tq.J_red.T @ (R6 @ F_sensor),
        )
        tau, limited = clamp_torque(tau, torque_lim)
        if limited:
            log.debug("t=%.3f torque clamped", t)

        hand_pos = tq.pose.position + R @ cfg.grasp_offset
        hand_vel = tq.twist[:3] + np.cross(tq.twist[3:], R @ cfg.grasp_offset)
        ctx = _AgentContext(t, R, R.T @ GRAVITY, hand_pos, hand_vel)
        F_known = agent.known_wrench(ctx)
        if phase == PHASE_FOLLOW:
            F_known = F_known + _intent_wrench(cfg, t_local, ctx)

        q, eta, etadot, F_meas, accel_w = plant.step(
            q, eta, tau, F_partner_body=F_known, tq=tq, dt=cfg.dt
        )
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(eta))) or (
            max(np.max(np.abs(q)), np.max(np.abs(eta))) > 1e6
        ):
            err = IntegrationDiverged(f"state diverged at t={t:.4f} (tick {k})")
            err.partial_log = flush(k)
            raise err

        F_next = F_meas + sigma * rng.standard_normal(6) if cfg.noise_scale > 0.0 else F_meas

        row = rows[k]
        row[0] = t
        row[1] = phase
        row[2:9] = np.concatenate([tq.pose.position, tq.pose.quaternion])
        row[9:15] = tq.twist
        row[15:22] = np.concatenate([pos_des, quat_des])
        row[22:28] = F_next
        row[28:34] = F_hat_b
        row[34:44] = ekf.phi
        row[44:54] = np.diag(ekf.P)
        row[54] = {QpStatus.OPTIMAL: 0, QpStatus.MAX_ITER: 1, QpStatus.INFEASIBLE: 2}[sol.status]
        row[55] = sol.kkt_residual if np.isfinite(sol.kkt_residual) else -1.0
        row[56:59] = hand_vel

        prev = {
            "a_b": R.T @ accel_w[:3],
            "dw_b": R.T @ accel_w[3:],
            "w_b": R.T @ tq.twist[3:],
            "g_b": R.T @ GRAVITY,
        }
        F_sensor = F_next

    return flush(n_ticks)


def summarize(simlog: SimLog, cfg: ScenarioConfig) -> dict:
    """Headline numbers of a run: estimate quality, compensation, tracking."""
    out = {"ticks": len(simlog), "duration": float(simlog.column("t")[-1]) if len(simlog) else 0.0}
    eff = cfg.object_spec.effective_params()
    phi = simlog.data[:, 34:44]
    out["phi_final"] = [float(v) for v in phi[-1]] if len(simlog) else None
    out["effective_mass"] = float(eff.mass)
    out["effective_com"] = [float(v) for v in eff.com]

    t = simlog.column("t")
    est = simlog.phase_mask(PHASE_ESTIMATE)
    if np.any(est):
        mass_err = np.abs(phi[:, 0] - eff.mass)
        with np.errstate(divide="ignore", invalid="ignore"):
            com = phi[:, 1:4] / phi[:, [0]]
        com_err = np.linalg.norm(com - eff.com, axis=1)
        com_err[np.abs(phi[:, 0]) < 1e-6] = np.inf
        te = t[est]
        out["mass_error_end_of_estimate"] = float(mass_err[est][-1])
        out["com_error_end_of_estimate"] = float(com_err[est][-1])
        for label, series, tol in (
            ("mass_converged_at", mass_err[est], 0.05),
            ("com_converged_at", com_err[est], 0.015),
        ):
            hit = np.nonzero(series <= tol)[0]
            out[label] = float(te[hit[0]] - te[0]) if hit.size else None
        speeds = np.linalg.norm(simlog.data[est][:, 56:59], axis=1)
        out["max_hand_speed_estimate_phase"] = float(np.max(speeds))

    comp = simlog.phase_mask(PHASE_COMPENSATE)
    if np.any(comp):
        tc = t[comp]
        window = comp & (t >= tc[0] + 0.5) & (t <= tc[0] + 2.5)
        if np.any(window):
            fhat = simlog.data[window][:, 28:34]
            out["mean_abs_partner_wrench_static"] = float(np.mean(np.abs(fhat)))

    follow = simlog.phase_mask(PHASE_FOLLOW)
    if np.any(follow):
        pos = simlog.data[follow][:, 2:5]
        out["follow_displacement"] = [float(v) for v in (pos[-1] - pos[0])]

    status = simlog.column("qp_status")
    out["qp_all_optimal"] = bool(np.all(status == 0)) if len(simlog) else True
    out["qp_max_residual"] = float(np.max(simlog.column("qp_residual"))) if len(simlog) else 0.0

    if cfg.jig_position is not None and len(simlog):
        from .spatial import orientation_error

        final_pos = simlog.data[-1, 2:5]
        final_quat = simlog.data[-1, 5:9]
        perr = float(np.linalg.norm(final_pos - np.asarray(cfg.jig_position, dtype=float)))
        jq = np.asarray(
            cfg.jig_quaternion if cfg.jig_quaternion is not None else [0, 0, 0, 1],
            dtype=float,
        )
        oerr = float(np.degrees(np.linalg.norm(orientation_error(final_quat, jq))))
        out["jig_position_error"] = perr
        out["jig_orientation_error_deg"] = oerr
        out["jig_success"] = bool(perr <= 0.02 and oerr <= 5.0)
    return out
