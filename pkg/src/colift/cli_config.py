"""Plain-text configuration files and the run manifest.

Config files are INI-style: ``[section]`` headers, ``key = value`` lines,
``#`` comments.  A scenario file either references a robot file
(``robot = path`` in ``[scenario]``, resolved relative to the scenario
file) or carries the robot sections inline.  Loading collects *every*
problem it can find -- type errors, missing keys, unknown keys, bad
shapes -- and reports them all at once with dotted key paths, instead of
dying on the first.

A run manifest is the same format with every setting materialized (robot
inline, all defaults spelled out) plus an informational ``[manifest]``
section.  Feeding a manifest back through :func:`load_config` reproduces
the run exactly; floats are written with ``repr`` so they round-trip to
the bit.
"""

from __future__ import annotations

import configparser
import datetime
import logging
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError
from .estimator import EkfTuning
from .impedance import ImpedanceGains, default_damping
from .robot_model import BaseSpec, LinkSpec, RobotDescription
from .simulator import IntentSegment, ObjectSpec, PhaseSchedule, ScenarioConfig

log = logging.getLogger("colift.config")

_MISSING = object()


def default_scenario_path() -> Path:
    """Path of the packaged default scenario config."""
    return Path(__file__).parent / "data" / "default_scenario.cfg"


def _parser() -> configparser.ConfigParser:
    return configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#",), interpolation=None, strict=True
    )


class _Reader:
    """Typed, problem-collecting view of a parsed config file."""

    def __init__(self, parser: configparser.ConfigParser, path):
        self.parser = parser
        self.path = str(path)
        self.problems: list = []
        self._seen: set = set()
        self._touched: set = set()

    # -- raw access ------------------------------------------------------

    def has_section(self, sec: str) -> bool:
        return self.parser.has_section(sec)

    def section_keys(self, sec: str) -> list:
        return list(self.parser[sec]) if self.parser.has_section(sec) else []

    def mark(self, sec: str, key: str | None = None) -> None:
        self._touched.add(sec)
        if key is not None:
            self._seen.add((sec, key))

    def raw(self, sec: str, key: str, default=_MISSING):
        self._touched.add(sec)
        if self.parser.has_option(sec, key):
            self._seen.add((sec, key))
            return self.parser.get(sec, key).strip()
        if default is _MISSING:
            self.problems.append(f"{sec}.{key}: required key is missing")
            return None
        return default

    def complain(self, path: str, msg: str) -> None:
        self.problems.append(f"{path}: {msg}")

    # -- typed getters ----------------------------------------------------

    def float(self, sec, key, default=_MISSING):
        raw = self.raw(sec, key, default)
        if raw is None or isinstance(raw, (int, float)):
            return raw
        try:
            return float(raw)
        except ValueError:
            self.complain(f"{sec}.{key}", f"expected a number, got {raw!r}")
            return None

    def int(self, sec, key, default=_MISSING):
        raw = self.raw(sec, key, default)
        if raw is None or isinstance(raw, int):
            return raw
        try:
            return int(raw)
        except ValueError:
            self.complain(f"{sec}.{key}", f"expected an integer, got {raw!r}")
            return None

    def bool(self, sec, key, default=_MISSING):
        raw = self.raw(sec, key, default)
        if raw is None or isinstance(raw, bool):
            return raw
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        self.complain(f"{sec}.{key}", f"expected true/false, got {raw!r}")
        return None

    def str(self, sec, key, default=_MISSING):
        return self.raw(sec, key, default)

    def vec(self, sec, key, n, default=_MISSING):
        raw = self.raw(sec, key, default)
        if raw is None or isinstance(raw, np.ndarray):
            return raw
        try:
            vals = np.array([float(v) for v in raw.split()])
        except ValueError:
            self.complain(f"{sec}.{key}", f"expected {n} numbers, got {raw!r}")
            return None
        if vals.size != n:
            self.complain(f"{sec}.{key}", f"expected {n} numbers, got {vals.size}")
            return None
        return vals

    def vec_any(self, sec, key, default=_MISSING):
        raw = self.raw(sec, key, default)
        if raw is None or isinstance(raw, np.ndarray):
            return raw
        try:
            return np.array([float(v) for v in raw.split()])
        except ValueError:
            self.complain(f"{sec}.{key}", f"expected numbers, got {raw!r}")
            return None

    def groups(self, sec, key, n, default=_MISSING):
        """Semicolon-separated groups of n numbers each."""
        raw = self.raw(sec, key, default)
        if raw is None or isinstance(raw, np.ndarray):
            return raw
        rows = []
        for part in raw.split(";"):
            part = part.strip()
            if not part:
                continue
            try:
                vals = [float(v) for v in part.split()]
            except ValueError:
                self.complain(f"{sec}.{key}", f"expected numbers in group {part!r}")
                return None
            if len(vals) != n:
                self.complain(
                    f"{sec}.{key}", f"each group needs {n} numbers, got {part!r}"
                )
                return None
            rows.append(vals)
        return np.array(rows).reshape(-1, n)

    def sym3(self, sec, key, default=_MISSING):
        """Symmetric 3x3 from six numbers: xx xy xz yy yz zz."""
        v = self.vec(sec, key, 6, default)
        if v is None or (hasattr(v, "ndim") and v.ndim == 2):
            return v
        return np.array([
            [v[0], v[1], v[2]],
            [v[1], v[3], v[4]],
            [v[2], v[4], v[5]],
        ])

    # -- closing ----------------------------------------------------------

    def check_unknown(self) -> None:
        for sec in self.parser.sections():
            if sec not in self._touched:
                self.complain(sec, "unknown section")
                continue
            for key in self.parser[sec]:
                if (sec, key) not in self._seen:
                    self.complain(f"{sec}.{key}", "unknown key")

    def finish(self):
        self.check_unknown()
        if self.problems:
            raise ConfigError([f"{self.path}: {p}" for p in self.problems])


def _read_file(path) -> configparser.ConfigParser:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = _parser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parser


# ---------------------------------------------------------------------------
# robot
# ---------------------------------------------------------------------------

def _link_numbers(reader: _Reader) -> list:
    nums = []
    for sec in reader.parser.sections():
        if sec.startswith("link."):
            try:
                nums.append(int(sec.split(".", 1)[1]))
            except ValueError:
                reader.complain(sec, "link sections must be named link.<number>")
    nums.sort()
    if nums and nums != list(range(1, len(nums) + 1)):
        reader.complain("link", f"link numbers must run 1..{len(nums)}, got {nums}")
    return nums


def _robot_from_reader(reader: _Reader) -> RobotDescription | None:
    r = reader
    base_kwargs = dict(
        wheel_radius=r.float("base", "wheel_radius"),
        half_track=r.float("base", "half_track"),
        mass=r.float("base", "mass"),
        com=r.vec("base", "com", 3),
        inertia_com=r.sym3("base", "inertia_com"),
        mount_origin=r.vec("base", "mount_origin", 3),
        mount_quat=r.vec("base", "mount_quat", 4, default=np.array([0.0, 0, 0, 1.0])),
        wheel_mass=r.float("base", "wheel_mass", default=5.0),
        wheel_spin_inertia=r.float("base", "wheel_spin_inertia", default=0.07),
        wheel_lat_inertia=r.float("base", "wheel_lat_inertia", default=0.04),
        wheel_torque_limit=r.float("base", "wheel_torque_limit", default=80.0),
        wheel_accel_limit=r.float("base", "wheel_accel_limit", default=40.0),
    )
    tool_origin = r.vec("tool", "origin", 3)
    tool_quat = r.vec("tool", "quat", 4, default=np.array([0.0, 0, 0, 1.0]))

    links = []
    ok = True
    for n in _link_numbers(r):
        sec = f"link.{n}"
        kw = dict(
            name=r.str(sec, "name", default=f"link{n}"),
            joint=r.str(sec, "joint"),
            axis=r.vec(sec, "axis", 3),
            origin=r.vec(sec, "origin", 3),
            origin_quat=r.vec(sec, "origin_quat", 4, default=np.array([0.0, 0, 0, 1.0])),
            mass=r.float(sec, "mass"),
            com=r.vec(sec, "com", 3),
            inertia_com=r.sym3(sec, "inertia_com"),
            torque_limit=r.float(sec, "torque_limit", default=100.0),
            accel_limit=r.float(sec, "accel_limit", default=40.0),
        )
        if any(v is None for v in kw.values()):
            ok = False
            continue
        try:
            links.append(LinkSpec(**kw))
        except ConfigError as exc:
            ok = False
            r.complain(sec, str(exc))

    home = r.vec("home", "arm", len(links)) if r.has_section("home") else None

    if not links:
        r.complain("link", "robot needs at least one arm link")
        return None
    if any(v is None for v in base_kwargs.values()) or tool_origin is None or not ok:
        return None
    try:
        return RobotDescription(
            base=BaseSpec(**base_kwargs),
            links=links,
            tool_origin=tool_origin,
            tool_quat=tool_quat,
            home_arm=home,
        )
    except ConfigError as exc:
        r.complain("robot", str(exc))
        return None


def load_robot(path) -> RobotDescription:
    """Load a robot description file, reporting all problems at once."""
    reader = _Reader(_read_file(path), path)
    desc = _robot_from_reader(reader)
    reader.finish()
    if desc is None:  # pragma: no cover - finish() raised already
        raise ConfigError(f"{path}: robot description incomplete")
    return desc


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------

def _intent_segments(reader: _Reader) -> list:
    segments = []
    if not reader.has_section("intent"):
        return segments
    reader.mark("intent")
    for key in reader.section_keys("intent"):
        if not key.startswith("segment."):
            reader.complain(f"intent.{key}", "intent keys must be named segment.<n>")
            reader.mark("intent", key)
            continue
        raw = reader.raw("intent", key)
        tokens = raw.split()
        path = f"intent.{key}"
        if len(tokens) < 3:
            reader.complain(path, "expected: <wrench|velocity> t0 t1 values...")
            continue
        kind = tokens[0]
        try:
            nums = [float(v) for v in tokens[1:]]
        except ValueError:
            reader.complain(path, f"expected numbers after the kind, got {raw!r}")
            continue
        t0, t1, vals = nums[0], nums[1], nums[2:]
        want = {"wrench": 6, "velocity": 3}.get(kind)
        if want is None:
            reader.complain(path, f"unknown intent kind {kind!r}")
            continue
        if len(vals) != want:
            reader.complain(path, f"{kind} segment needs {want} values, got {len(vals)}")
            continue
        try:
            segments.append(IntentSegment(
                t0, t1,
                wrench=vals if kind == "wrench" else None,
                velocity=vals if kind == "velocity" else None,
            ))
        except ConfigError as exc:
            reader.complain(path, str(exc))
    segments.sort(key=lambda s: s.t_start)
    return segments


def load_config(path) -> ScenarioConfig:
    """Load a scenario (or manifest) file into a :class:`ScenarioConfig`."""
    path = Path(path)
    reader = _Reader(_read_file(path), path)
    r = reader

    if r.has_section("manifest"):
        r.mark("manifest")
        for key in r.section_keys("manifest"):
            r.mark("manifest", key)

    if r.has_section("base"):
        robot = _robot_from_reader(r)
        r.str("scenario", "robot", default="inline")
    else:
        robot_path = r.str("scenario", "robot")
        robot = None
        if robot_path is not None:
            try:
                robot = load_robot((path.parent / robot_path).resolve())
            except ConfigError as exc:
                r.complain("scenario.robot", str(exc))

    obj = None
    masses = r.vec_any("object", "masses")
    positions = r.groups("object", "positions", 3)
    supported = r.vec_any("object", "partner_supported")
    grasp_offset = r.vec("object", "grasp_offset", 3, default=np.array([0.0, -1.5, 0.0]))
    if masses is not None and positions is not None and supported is not None:
        try:
            obj = ObjectSpec(positions, masses, supported != 0.0)
        except ConfigError as exc:
            r.problems.extend(f"object: {p}" for p in exc.problems)

    phase_kwargs = dict(
        lift=r.float("phases", "lift", default=2.0),
        estimate=r.float("phases", "estimate", default=10.0),
        transport=r.float("phases", "transport", default=5.0),
        compensate=r.float("phases", "compensate", default=3.0),
        follow=r.float("phases", "follow", default=4.0),
        hold=r.float("phases", "hold", default=1.0),
    )
    lift_height = r.float("phases", "lift_height", default=0.10)
    transport_distance = r.float("phases", "transport_distance", default=0.30)
    transport_move_time = r.float("phases", "transport_move_time", default=3.0)
    phases = None
    if all(v is not None for v in phase_kwargs.values()):
        try:
            phases = PhaseSchedule(**phase_kwargs)
        except ConfigError as exc:
            r.problems.extend(exc.problems)

    tuning = None
    rate = r.float("estimator", "rate", default=1000.0)
    p0 = r.vec("estimator", "p0_diag", 10, default=None)
    qd = r.vec("estimator", "q_diag", 10, default=None)
    rd = r.vec("estimator", "r_diag", 6, default=None)
    try:
        kw = {}
        if p0 is not None:
            kw["P0"] = np.diag(p0)
        if qd is not None:
            kw["Q"] = np.diag(qd)
        if rd is not None:
            kw["R"] = np.diag(rd)
        tuning = EkfTuning(**kw)
    except (ConfigError, ValueError) as exc:
        r.complain("estimator", str(exc))

    gains = None
    stiff = r.vec("impedance", "stiffness", 6, default=None)
    damp = r.vec("impedance", "damping", 6, default=None)
    pd_rows = r.groups("impedance", "wrench_weight", 3, default=None)
    try:
        kw = {}
        if stiff is not None:
            kw["stiffness"] = np.diag(stiff)
            if damp is None:
                kw["damping"] = default_damping(np.diag(stiff))
        if damp is not None:
            kw["damping"] = np.diag(damp)
        if pd_rows is not None:
            P_d = np.zeros((6, 6))
            for i, j, v in pd_rows:
                if not (float(i).is_integer() and float(j).is_integer()
                        and 0 <= int(i) < 6 and 0 <= int(j) < 6):
                    raise ConfigError(
                        f"impedance.wrench_weight: bad entry indices ({i:g}, {j:g})"
                    )
                P_d[int(i), int(j)] = v
            kw["wrench_weight"] = P_d
        gains = ImpedanceGains(**kw)
    except ConfigError as exc:
        r.problems.extend(exc.problems)

    jig_pos = jig_quat = None
    if r.has_section("jig"):
        jig_pos = r.vec("jig", "position", 3)
        jig_quat = r.vec("jig", "quaternion", 4, default=np.array([0.0, 0, 0, 1.0]))

    kwargs = dict(
        robot=robot,
        object_spec=obj,
        grasp_offset=grasp_offset,
        human_mode=r.str("scenario", "human_mode", default="half_load"),
        hold_stiffness=r.float("human", "hold_stiffness", default=400.0),
        hold_damping=r.float("human", "hold_damping", default=40.0),
        hand_jitter=r.float("human", "jitter", default=0.5),
        velocity_gain=r.float("human", "velocity_gain", default=50.0),
        intent=_intent_segments(r),
        phases=phases,
        lift_height=lift_height,
        transport_distance=transport_distance,
        transport_move_time=transport_move_time,
        excitation_amplitude=r.float("excitation", "amplitude", default=0.2),
        excitation_frequency=r.float("excitation", "frequency", default=0.4),
        tuning=tuning,
        estimator_rate=rate,
        gains=gains,
        dt=r.float("scenario", "dt", default=0.001),
        noise_scale=r.float("scenario", "noise_scale", default=0.01),
        seed=r.int("scenario", "seed", default=0),
        use_estimate=r.bool("scenario", "use_estimate", default=True),
        posture_kp=r.float("control", "posture_kp", default=4.0),
        posture_kd=r.float("control", "posture_kd", default=4.0),
        base_hold=r.float("control", "base_hold", default=0.0),
        jig_position=jig_pos,
        jig_quaternion=jig_quat,
    )

    r.check_unknown()
    if r.problems:
        raise ConfigError([f"{path}: {p}" for p in r.problems])
    try:
        return ScenarioConfig(**kwargs)
    except ConfigError as exc:
        raise ConfigError([f"{path}: {p}" for p in exc.problems]) from exc


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def _f(x) -> str:
    return repr(float(x))


def _vecstr(v) -> str:
    return " ".join(_f(x) for x in np.asarray(v, dtype=float).ravel())


def _sym6str(M) -> str:
    M = np.asarray(M, dtype=float)
    return _vecstr([M[0, 0], M[0, 1], M[0, 2], M[1, 1], M[1, 2], M[2, 2]])


def _groupstr(rows) -> str:
    return "; ".join(_vecstr(row) for row in rows)


def robot_sections(desc: RobotDescription) -> dict:
    """Materialize a robot description as config sections."""
    base = desc.base
    out = {
        "base": {
            "wheel_radius": _f(base.wheel_radius),
            "half_track": _f(base.half_track),
            "mass": _f(base.mass),
            "com": _vecstr(base.com),
            "inertia_com": _sym6str(base.inertia_com),
            "mount_origin": _vecstr(base.mount_origin),
            "mount_quat": _vecstr(base.mount_quat),
            "wheel_mass": _f(base.wheel_mass),
            "wheel_spin_inertia": _f(base.wheel_spin_inertia),
            "wheel_lat_inertia": _f(base.wheel_lat_inertia),
            "wheel_torque_limit": _f(base.wheel_torque_limit),
            "wheel_accel_limit": _f(base.wheel_accel_limit),
        },
        "tool": {
            "origin": _vecstr(desc.tool_origin),
            "quat": _vecstr(desc.tool_quat),
        },
        "home": {"arm": _vecstr(desc.home_arm)},
    }
    for i, link in enumerate(desc.links, start=1):
        out[f"link.{i}"] = {
            "name": link.name,
            "joint": link.joint,
            "axis": _vecstr(link.axis),
            "origin": _vecstr(link.origin),
            "origin_quat": _vecstr(link.origin_quat),
            "mass": _f(link.mass),
            "com": _vecstr(link.com),
            "inertia_com": _sym6str(link.inertia_com),
            "torque_limit": _f(link.torque_limit),
            "accel_limit": _f(link.accel_limit),
        }
    return out


def scenario_sections(cfg: ScenarioConfig) -> dict:
    """Materialize every scenario setting (robot inline) as config sections."""
    out = {
        "scenario": {
            "robot": "inline",
            "seed": str(int(cfg.seed)),
            "dt": _f(cfg.dt),
            "noise_scale": _f(cfg.noise_scale),
            "use_estimate": "true" if cfg.use_estimate else "false",
            "human_mode": cfg.human_mode,
        },
        "object": {
            "masses": _vecstr(cfg.object_spec.masses),
            "positions": _groupstr(cfg.object_spec.positions),
            "partner_supported": " ".join(
                "1" if s else "0" for s in cfg.object_spec.partner_supported
            ),
            "grasp_offset": _vecstr(cfg.grasp_offset),
        },
        "phases": {
            "lift": _f(cfg.phases.lift),
            "estimate": _f(cfg.phases.estimate),
            "transport": _f(cfg.phases.transport),
            "compensate": _f(cfg.phases.compensate),
            "follow": _f(cfg.phases.follow),
            "hold": _f(cfg.phases.hold),
            "lift_height": _f(cfg.lift_height),
            "transport_distance": _f(cfg.transport_distance),
            "transport_move_time": _f(cfg.transport_move_time),
        },
        "excitation": {
            "amplitude": _f(cfg.excitation_amplitude),
            "frequency": _f(cfg.excitation_frequency),
        },
        "estimator": {
            "rate": _f(cfg.estimator_rate),
            "p0_diag": _vecstr(np.diag(cfg.tuning.P0)),
            "q_diag": _vecstr(np.diag(cfg.tuning.Q)),
            "r_diag": _vecstr(np.diag(cfg.tuning.R)),
        },
        "impedance": {
            "stiffness": _vecstr(np.diag(cfg.gains.stiffness)),
            "damping": _vecstr(np.diag(cfg.gains.damping)),
            "wrench_weight": _groupstr(
                [[i, j, cfg.gains.wrench_weight[i, j]]
                 for i, j in zip(*np.nonzero(cfg.gains.wrench_weight))]
            ),
        },
        "human": {
            "hold_stiffness": _f(cfg.hold_stiffness),
            "hold_damping": _f(cfg.hold_damping),
            "jitter": _f(cfg.hand_jitter),
            "velocity_gain": _f(cfg.velocity_gain),
        },
        "control": {
            "posture_kp": _f(cfg.posture_kp),
            "posture_kd": _f(cfg.posture_kd),
            "base_hold": _f(cfg.base_hold),
        },
    }
    if cfg.intent:
        out["intent"] = {
            f"segment.{i}": (
                f"wrench {_f(seg.t_start)} {_f(seg.t_end)} {_vecstr(seg.wrench)}"
                if seg.wrench is not None else
                f"velocity {_f(seg.t_start)} {_f(seg.t_end)} {_vecstr(seg.velocity)}"
            )
            for i, seg in enumerate(cfg.intent, start=1)
        }
    if cfg.jig_position is not None:
        out["jig"] = {"position": _vecstr(cfg.jig_position)}
        if cfg.jig_quaternion is not None:
            out["jig"]["quaternion"] = _vecstr(cfg.jig_quaternion)
    return out


def write_manifest(path, cfg: ScenarioConfig, outdir=None, note: str = "") -> None:
    """Write the fully resolved, replayable snapshot of a run's config."""
    sections = {
        "manifest": {
            "version": __version__,
            "created": datetime.datetime.now().isoformat(timespec="seconds"),
            "outdir": str(outdir) if outdir is not None else ".",
        },
    }
    if note:
        sections["manifest"]["note"] = note
    sections.update(scenario_sections(cfg))
    sections.update(robot_sections(cfg.robot))
    lines = []
    for sec, body in sections.items():
        lines.append(f"[{sec}]")
        lines.extend(f"{key} = {value}" for key, value in body.items())
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")
    log.debug("manifest written to %s", path)
