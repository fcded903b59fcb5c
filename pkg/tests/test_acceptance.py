"""Acceptance gate: the eleven go/no-go checks for this package.

Each test prints one ``[NN] PASS/FAIL`` line with the measured value next
to its limit (visible with ``pytest -s`` or in failure output), then
asserts.  Tolerances here are contractual -- do not loosen them to make a
red check green; fix the code or document why the number is out of reach.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from colift.estimator import run_estimation_benchmark
from colift.impedance import (
    ImpedanceGains,
    cartesian_inertia,
    default_wrench_weight,
    grasp_in_world,
    impedance_task_accel,
    object_compensated_torque,
    shape_inertia,
    wrench_weight,
)
from colift.object_dynamics import from_point_masses, newton_euler_wrench, regressor
from colift.qp_control import QpStatus, qp_benchmark
from colift.simulator import IntentSegment, run_scenario, summarize
from colift.spatial import PartialGraspMatrix, partial_grasp, quat_from_rotvec, quat_to_rot

FULL_RUN_TIME_LIMIT = 300.0


def _line(num: int, ok: bool, text: str) -> None:
    print(f"[{num:>2}] {'PASS' if ok else 'FAIL'} {text}")


# ---------------------------------------------------------------------------
# shared expensive runs
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def full_run(default_cfg):
    t0 = time.perf_counter()
    log = run_scenario(default_cfg)
    return log, time.perf_counter() - t0


@pytest.fixture(scope="module")
def repeat_run(default_cfg):
    return run_scenario(default_cfg)


@pytest.fixture(scope="module")
def baseline_run(default_cfg):
    cfg = replace(default_cfg, use_estimate=False)
    return run_scenario(cfg), cfg


@pytest.fixture(scope="module")
def clean_bench(default_cfg):
    t0 = time.perf_counter()
    result = run_estimation_benchmark(
        default_cfg.object_spec.effective_params(),
        duration=8.0,
        rate=1000.0,
        noise_scale=0.0,
        seed=0,
        amplitude=default_cfg.excitation_amplitude,
        frequency=default_cfg.excitation_frequency,
        hand_offset=default_cfg.grasp_offset,
        tuning=default_cfg.tuning,
    )
    return result, time.perf_counter() - t0


# ---------------------------------------------------------------------------
# 1: regressor vs direct Newton-Euler
# ---------------------------------------------------------------------------

def test_01_regressor_matches_newton_euler():
    rng = np.random.default_rng(0)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(1000):
        n_pts = rng.integers(1, 5)
        params = from_point_masses(
            rng.uniform(-0.8, 0.8, (n_pts, 3)), rng.uniform(0.05, 3.0, n_pts)
        )
        a, dw, w = rng.uniform(-5, 5, 3), rng.uniform(-10, 10, 3), rng.uniform(-5, 5, 3)
        via_regressor = regressor(a, dw, w) @ params.as_vector()
        direct = newton_euler_wrench(params, a, dw, w)
        err = np.linalg.norm(via_regressor - direct) / max(1.0, np.linalg.norm(direct))
        worst = max(worst, err)
    wall = time.perf_counter() - t0
    ok = worst <= 1e-10 and wall < 1.0
    _line(1, ok, f"regressor vs Newton-Euler: max rel err {worst:.2e} "
                 f"(limit 1e-10), {wall:.2f}s (limit 1s)")
    assert worst <= 1e-10
    assert wall < 1.0


# ---------------------------------------------------------------------------
# 2-4: kinematic estimation benchmark
# ---------------------------------------------------------------------------

def test_02_estimation_converges_on_clean_data(clean_bench):
    result, wall = clean_bench
    mass_5 = result.at(5.0)["mass_error"]
    com_8 = result.at(8.0)["com_error"]
    ok = mass_5 <= 0.05 and com_8 <= 0.015 and wall < 30.0
    _line(2, ok, f"estimation convergence: mass err {mass_5:.4f} kg at 5s "
                 f"(limit 0.05), CoM err {com_8 * 1e3:.2f} mm at 8s (limit 15), "
                 f"{wall:.1f}s (limit 30)")
    assert mass_5 <= 0.05
    assert com_8 <= 0.015
    assert wall < 30.0


def test_03_estimation_under_noise(default_cfg):
    passed = 0
    errors = []
    for seed in range(20):
        result = run_estimation_benchmark(
            default_cfg.object_spec.effective_params(),
            duration=10.0,
            rate=1000.0,
            noise_scale=0.02,
            seed=seed,
            amplitude=default_cfg.excitation_amplitude,
            frequency=default_cfg.excitation_frequency,
            hand_offset=default_cfg.grasp_offset,
            tuning=default_cfg.tuning,
        )
        sample = result.at(10.0)
        errors.append((sample["mass_error"], sample["com_error"]))
        if sample["mass_error"] <= 0.1 and sample["com_error"] <= 0.025:
            passed += 1
    worst_mass = max(e[0] for e in errors)
    worst_com = max(e[1] for e in errors)
    ok = passed >= 18
    _line(3, ok, f"noisy estimation: {passed}/20 seeds within 0.1 kg / 25 mm at 10s "
                 f"(need 18); worst mass {worst_mass:.3f} kg, worst CoM "
                 f"{worst_com * 1e3:.1f} mm")
    assert passed >= 18


def test_04_pivot_holds_the_hand_still(clean_bench):
    result, _ = clean_bench
    worst = float(np.max(result.hand_speed))
    ok = worst <= 1e-9
    _line(4, ok, f"pivot invariant: max hand speed {worst:.2e} m/s (limit 1e-9)")
    assert worst <= 1e-9


# ---------------------------------------------------------------------------
# 5: QP solver vs enumeration oracle
# ---------------------------------------------------------------------------

def test_05_qp_solver_matches_enumeration():
    t0 = time.perf_counter()
    result = qp_benchmark(count=500, seed=0)
    wall = time.perf_counter() - t0
    worst_gap = float(np.max(np.abs(result["gaps"])))
    worst_res = float(np.max(result["residuals"]))
    all_opt = all(s == QpStatus.OPTIMAL for s in result["statuses"])
    ok = worst_gap <= 1e-6 and worst_res <= 1e-8 and all_opt and wall < 10.0
    _line(5, ok, f"QP vs enumeration: max |gap| {worst_gap:.2e} (limit 1e-6), "
                 f"max residual {worst_res:.2e} (limit 1e-8), all optimal "
                 f"{all_opt}, {wall:.1f}s (limit 10)")
    assert worst_gap <= 1e-6
    assert worst_res <= 1e-8
    assert all_opt
    assert wall < 10.0


# ---------------------------------------------------------------------------
# 6-7: torque assembly algebra
# ---------------------------------------------------------------------------

def _assembly_state(rng):
    A = rng.standard_normal((9, 9))
    M = A @ A.T + 9.0 * np.eye(9)
    while True:
        J_red = rng.standard_normal((6, 9))
        if np.linalg.svd(J_red, compute_uv=False)[-1] > 0.3:
            break
    R_ee = quat_to_rot(quat_from_rotvec(rng.normal(size=3)))
    grasp = PartialGraspMatrix(rng.uniform(-1.5, 1.5, 3))
    return dict(
        M=M,
        bias=rng.normal(size=9),
        gravity=rng.normal(size=9),
        J_red=J_red,
        ee_bias_accel=rng.normal(size=6),
        task_accel_free=rng.normal(size=6),
        R_ee=R_ee,
        A_body=regressor(rng.normal(size=3), rng.normal(size=3),
                         rng.normal(size=3), g=rng.normal(size=3)),
        phi_hat=rng.uniform(0.1, 1.0, 10),
        grasp=grasp,
    )


def test_06_geometry_matched_shaping_cancels_wrench_feedback(model, default_cfg):
    q, eta = model.home_configuration()
    tq = model.control_quantities(q, eta)
    R = quat_to_rot(tq.pose.quaternion)
    M_x, _ = cartesian_inertia(tq.M, tq.J_red)
    grasp = partial_grasp(default_cfg.grasp_offset)
    G_w = grasp_in_world(grasp, R)
    kw = dict(
        M=tq.M,
        bias=tq.bias,  # already holds the gravity torques
        gravity=np.zeros(model.nv),
        J_red=tq.J_red,
        ee_bias_accel=tq.bias_accel,
        task_accel_free=np.array([0.1, -0.2, 0.3, 0.05, -0.05, 0.1]),
        R_ee=R,
        A_body=regressor([0.5, -0.3, 9.9], [0.2, 0.1, -0.3], [0.1, 0.2, 0.05],
                         g=R.T @ np.array([0.0, 0.0, -9.81])),
        phi_hat=default_cfg.object_spec.effective_params().as_vector(),
        grasp=grasp,
        M_e=np.linalg.solve(G_w, M_x),
    )
    quiet = object_compensated_torque(partner_wrench_body=np.zeros(6), **kw)

    rng = np.random.default_rng(6)
    bounds = np.array([50.0, 50.0, 50.0, 20.0, 20.0, 20.0])
    sweep = [sign * bounds[i] * np.eye(6)[i] for i in range(6) for sign in (1.0, -1.0)]
    sweep += [rng.uniform(-1.0, 1.0, 6) * bounds for _ in range(20)]
    worst = max(
        float(np.max(np.abs(object_compensated_torque(partner_wrench_body=w, **kw) - quiet)))
        for w in sweep
    )
    ok = worst <= 1e-9
    _line(6, ok, f"shaping cancellation: max torque change {worst:.2e} N*m over "
                 f"+/-50 N / +/-20 N*m sweep (limit 1e-9)")
    assert worst <= 1e-9


def test_07_dual_torque_assemblies_agree():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        kw = _assembly_state(rng)
        kw["partner_wrench_body"] = rng.normal(size=6)
        M_x, _ = cartesian_inertia(kw["M"], kw["J_red"])
        G_w = grasp_in_world(kw["grasp"], kw["R_ee"])
        kw["M_e"] = shape_inertia(M_x, G_w, default_wrench_weight())
        kw["M_F"] = wrench_weight(M_x, kw["M_e"], G_w)
        direct = object_compensated_torque(assembly="direct", **kw)
        gathered = object_compensated_torque(assembly="gathered", **kw)
        err = np.max(np.abs(direct - gathered)) / max(1.0, np.max(np.abs(direct)))
        worst = max(worst, float(err))
    ok = worst <= 1e-10
    _line(7, ok, f"dual assembly: max torque disagreement {worst:.2e} "
                 f"(limit 1e-10, 1000 states)")
    assert worst <= 1e-10


# ---------------------------------------------------------------------------
# 8: step response vs the analytic second-order system
# ---------------------------------------------------------------------------

def _overshoot_and_settling(t, x, x_ss):
    overshoot = (np.max(x) - x_ss) / x_ss
    outside = np.abs(x - x_ss) > 0.02 * abs(x_ss)
    last_out = int(np.max(np.nonzero(outside)[0])) if np.any(outside) else -1
    return overshoot, t[min(last_out + 1, len(t) - 1)]


def test_08_step_response_matches_second_order_model():
    gains = ImpedanceGains()
    M_e = np.diag([4.0, 2.0, 1.0, 0.5, 1.0, 2.0])
    k = np.diag(gains.stiffness)
    c = np.diag(gains.damping)
    m = np.diag(M_e)
    x_ss = np.full(6, 0.02)
    F = k * x_ss

    dt, T = 5e-4, 6.0
    n = int(round(T / dt))
    x = np.zeros(6)
    v = np.zeros(6)
    xs = np.empty((n, 6))

    def accel(x_, v_):
        return impedance_task_accel(x_, v_, np.zeros(6), M_e, gains, F)

    for i in range(n):
        k1v = accel(x, v)
        k2v = accel(x + 0.5 * dt * v, v + 0.5 * dt * k1v)
        k3v = accel(x + 0.5 * dt * (v + 0.5 * dt * k1v), v + 0.5 * dt * k2v)
        k4v = accel(x + dt * (v + 0.5 * dt * k2v), v + dt * k3v)
        x = x + dt * (v + dt / 6.0 * (k1v + k2v + k3v))
        v = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        xs[i] = x
    t = dt * np.arange(1, n + 1)

    worst_os, worst_ts = 0.0, 0.0
    for axis in range(6):
        zeta = c[axis] / (2.0 * np.sqrt(k[axis] * m[axis]))
        wn = np.sqrt(k[axis] / m[axis])
        wd = wn * np.sqrt(1.0 - zeta**2)
        envelope = np.exp(-zeta * wn * t)
        analytic = x_ss[axis] * (
            1.0 - envelope * (np.cos(wd * t) + zeta / np.sqrt(1 - zeta**2) * np.sin(wd * t))
        )
        os_sim, ts_sim = _overshoot_and_settling(t, xs[:, axis], x_ss[axis])
        os_ana, ts_ana = _overshoot_and_settling(t, analytic, x_ss[axis])
        worst_os = max(worst_os, abs(os_sim - os_ana) / os_ana)
        worst_ts = max(worst_ts, abs(ts_sim - ts_ana) / ts_ana)
    ok = worst_os <= 0.02 and worst_ts <= 0.02
    _line(8, ok, f"step response: overshoot within {worst_os * 100:.3f}%, settling "
                 f"within {worst_ts * 100:.3f}% of the analytic response (limit 2%)")
    assert worst_os <= 0.02
    assert worst_ts <= 0.02


# ---------------------------------------------------------------------------
# 9: payload feedforward drops the apparent partner wrench
# ---------------------------------------------------------------------------

def test_09_feedforward_shrinks_static_partner_wrench(full_run, baseline_run, default_cfg):
    log, _ = full_run
    base_log, base_cfg = baseline_run
    with_ff = summarize(log, default_cfg)["mean_abs_partner_wrench_static"]
    without_ff = summarize(base_log, base_cfg)["mean_abs_partner_wrench_static"]
    ratio = without_ff / with_ff
    ok = ratio >= 10.0
    _line(9, ok, f"feedforward effect: mean |F_hat| {without_ff:.3f} -> {with_ff:.3f} "
                 f"({ratio:.1f}x drop, need 10x)")
    assert ratio >= 10.0


# ---------------------------------------------------------------------------
# 10: follow-me sign pattern
# ---------------------------------------------------------------------------

def test_10_follow_me_sign_pattern(default_cfg):
    # Wrench channel -> expected translation axis, from the designed coupling
    # entries (+1 on x-force, -5 on z-torque, -4 on y-torque).
    legs = [
        ("torque about -z", np.array([0, 0, 0, 0, 0, -5.0]), 1, "+y"),
        ("torque about -y", np.array([0, 0, 0, 0, -5.0, 0]), 2, "+z"),
        ("force along +x", np.array([1.0, 0, 0, 0, 0, 0]), 0, "+x"),
    ]
    peaks = {}
    for name, w, axis, direction in legs:
        cfg = replace(default_cfg, intent=[IntentSegment(0.0, 3.5, wrench=w)])
        log = run_scenario(cfg, phase_only=5)
        t = log.column("t")
        window = (t - t[0]) <= 3.0
        pos = np.stack([log.column(n) for n in ("ee_px", "ee_py", "ee_pz")], axis=1)
        disp = pos - pos[0]
        peaks[name] = (float(np.max(disp[window, axis])), direction)
    ok = all(peak > 0.01 for peak, _ in peaks.values())
    detail = ", ".join(f"{n}: {p * 1e3:+.1f} mm {d}" for n, (p, d) in peaks.items())
    _line(10, ok, f"follow-me sign pattern (need >+10 mm each): {detail}")
    for name, (peak, direction) in peaks.items():
        assert peak > 0.01, (
            f"{name} moved {peak * 1e3:+.2f} mm along {direction} within 3 s; "
            "the coupled response on this desk-scale model stays millimetric "
            "because the shaped wrench feedback only drives a transient"
        )


# ---------------------------------------------------------------------------
# 11: determinism, QP health, wall time
# ---------------------------------------------------------------------------

def test_11_determinism_and_full_run_health(full_run, repeat_run, default_cfg, tmp_path):
    log, wall = full_run
    first = tmp_path / "first.csv"
    second = tmp_path / "second.csv"
    log.write(first)
    repeat_run.write(second)
    identical = first.read_bytes() == second.read_bytes()
    statuses = log.column("qp_status")
    all_optimal = bool(np.all(statuses == 0))
    ok = identical and all_optimal and wall < FULL_RUN_TIME_LIMIT
    _line(11, ok, f"determinism: bit-identical logs {identical}; QP optimal on all "
                  f"{len(statuses)} ticks {all_optimal}; {wall:.0f}s wall "
                  f"(limit {FULL_RUN_TIME_LIMIT:.0f}s)")
    assert identical
    assert all_optimal
    assert wall < FULL_RUN_TIME_LIMIT
