"""Command-line interface.

Three subcommands:

``run``
    Full scenario: writes the resolved manifest (before simulating), the
    per-tick CSV log, a JSON summary, and the report figures.
``estimate-bench``
    Kinematic estimation benchmark on ideal pivot excitation.
``qp-bench``
    Randomized QP sweep against the enumeration oracle.

Exit codes: 0 success, 1 usage, 2 configuration, 3 runtime failure,
4 numerical failure.  ``PHRI_LOG_LEVEL`` (error/warn/info/debug) sets the
log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .cli_config import default_scenario_path, load_config, write_manifest
from .errors import ColiftError, ConfigError, NumericalError
from .estimator import run_estimation_benchmark
from .qp_control import QpStatus, qp_benchmark
from .simulator import HUMAN_MODES, IntegrationDiverged, run_scenario, summarize

log = logging.getLogger("colift.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_NUMERICAL = 4

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def _configure_logging() -> None:
    raw = os.environ.get("PHRI_LOG_LEVEL", "warn").lower()
    level = _LOG_LEVELS.get(raw)
    if level is None:
        print(
            f"warning: PHRI_LOG_LEVEL={raw!r} not one of {sorted(_LOG_LEVELS)}; "
            "using 'warn'",
            file=sys.stderr,
        )
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="colift",
        description="shared-carry impedance control with online payload estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the six-phase scenario")
    run_p.add_argument("--config", default=None, help="scenario or manifest file (default: packaged scenario)")
    run_p.add_argument("--seed", type=int, default=None, help="override the seed")
    run_p.add_argument("--out", default="colift-out", help="output directory")
    run_p.add_argument(
        "--phase-only", type=int, default=None, choices=range(1, 7),
        metavar="K", help="run a single phase (1..6) from a synthesized start",
    )
    run_p.add_argument(
        "--human-mode", default=None, choices=sorted(HUMAN_MODES),
        help="override the partner model",
    )

    eb = sub.add_parser("estimate-bench", help="kinematic estimation benchmark")
    eb.add_argument("--config", default=None, help="scenario file for object/tuning (default: packaged scenario)")
    eb.add_argument("--seed", type=int, default=None)
    eb.add_argument("--out", default="colift-bench", help="output directory")
    eb.add_argument("--duration", type=float, default=None, help="seconds of excitation")
    eb.add_argument("--noise", type=float, default=None, help="noise scale override")
    eb.add_argument("--rate", type=float, default=None, help="sample rate override [Hz]")

    qb = sub.add_parser("qp-bench", help="randomized QP sweep vs enumeration oracle")
    qb.add_argument("--count", type=int, default=500)
    qb.add_argument("--seed", type=int, default=0)
    qb.add_argument("--out", default="colift-qp", help="output directory")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config if args.config is not None else default_scenario_path())
    if args.seed is not None:
        cfg.seed = args.seed
    if args.human_mode is not None:
        cfg.human_mode = args.human_mode
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    write_manifest(outdir / "manifest.cfg", cfg, outdir)
    log.info("manifest written, starting scenario (seed %d)", cfg.seed)

    t0 = time.perf_counter()
    try:
        simlog = run_scenario(cfg, phase_only=args.phase_only)
    except IntegrationDiverged as exc:
        partial = getattr(exc, "partial_log", None)
        if partial is not None and len(partial):
            partial.write(outdir / "log.csv")
            print(f"integration diverged; partial log in {outdir / 'log.csv'}",
                  file=sys.stderr)
        raise
    wall = time.perf_counter() - t0

    simlog.write(outdir / "log.csv")
    summary = summarize(simlog, cfg)
    summary["seed"] = int(cfg.seed)
    summary["wall_seconds"] = round(wall, 3)
    if args.phase_only is not None:
        summary["phase_only"] = args.phase_only
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")

    from .report import render_run

    figures = render_run(outdir, simlog, cfg, summary)

    print(f"run complete: {summary['ticks']} ticks, {wall:.1f} s wall")
    if "mass_error_end_of_estimate" in summary:
        conv = summary.get("mass_converged_at")
        conv_txt = f"converged at {conv:.2f} s" if conv is not None else "no convergence"
        print(
            f"  mass error after estimation: "
            f"{summary['mass_error_end_of_estimate']:.4f} kg ({conv_txt})"
        )
        com_err = summary["com_error_end_of_estimate"]
        if np.isfinite(com_err):
            print(f"  CoM error after estimation: {com_err * 1e3:.2f} mm")
    if "mean_abs_partner_wrench_static" in summary:
        print(
            "  mean |partner wrench| during static compensation: "
            f"{summary['mean_abs_partner_wrench_static']:.4f}"
        )
    print(f"  QP optimal on every tick: {summary['qp_all_optimal']}")
    names = ["manifest.cfg", "log.csv", "summary.json"] + [p.name for p in figures]
    print(f"outputs in {outdir}: " + " ".join(names))
    return EXIT_OK


def _cmd_estimate_bench(args) -> int:
    cfg = load_config(args.config if args.config is not None else default_scenario_path())
    result = run_estimation_benchmark(
        cfg.object_spec.effective_params(),
        duration=args.duration if args.duration is not None else cfg.phases.estimate,
        rate=args.rate if args.rate is not None else cfg.estimator_rate,
        noise_scale=args.noise if args.noise is not None else cfg.noise_scale,
        seed=args.seed if args.seed is not None else cfg.seed,
        amplitude=cfg.excitation_amplitude,
        frequency=cfg.excitation_frequency,
        hand_offset=cfg.grasp_offset,
        tuning=cfg.tuning,
    )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    with open(outdir / "bench.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,mass_error,com_error,hand_speed\n")
        for row in zip(result.t, result.mass_error, result.com_error, result.hand_speed):
            fh.write(",".join(f"{v:.12g}" for v in row) + "\n")

    summary = {
        "final_mass_error": float(result.mass_error[-1]),
        "final_com_error": float(result.com_error[-1]),
        "max_hand_speed": float(np.max(result.hand_speed)),
        "at_5s": result.at(5.0),
        "at_8s": result.at(8.0),
        "excitation_metric": result.metric,
    }
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")

    from .report import render_estimation_bench

    figures = render_estimation_bench(outdir, result)

    print(
        f"estimation benchmark: mass error {summary['final_mass_error']:.4f} kg, "
        f"CoM error {summary['final_com_error'] * 1e3:.2f} mm "
        f"after {result.t[-1]:.1f} s"
    )
    print(f"  max hand speed: {summary['max_hand_speed']:.2e} m/s")
    names = ["bench.csv", "summary.json"] + [p.name for p in figures]
    print(f"outputs in {outdir}: " + " ".join(names))
    return EXIT_OK


def _cmd_qp_bench(args) -> int:
    result = qp_benchmark(count=args.count, seed=args.seed)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    with open(outdir / "qp_bench.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("gap,kkt_residual,iterations,status\n")
        for gap, res, it, status in zip(
            result["gaps"], result["residuals"], result["iterations"], result["statuses"]
        ):
            fh.write(f"{gap:.12g},{res:.12g},{it},{status.value}\n")

    from .report import render_qp_bench

    figures = render_qp_bench(outdir, result["gaps"], result["residuals"])

    worst_gap = float(np.max(np.abs(result["gaps"])))
    worst_res = float(np.max(result["residuals"]))
    all_opt = all(s == QpStatus.OPTIMAL for s in result["statuses"])
    ok = worst_gap <= 1e-6 and worst_res <= 1e-8 and all_opt
    print(
        f"qp benchmark: {args.count} problems in {result['solver_seconds']:.2f} s, "
        f"max |gap| {worst_gap:.2e}, max residual {worst_res:.2e}, "
        f"all optimal: {all_opt}"
    )
    names = ["qp_bench.csv"] + [p.name for p in figures]
    print(f"outputs in {outdir}: " + " ".join(names))
    if not ok:
        print("qp benchmark FAILED its thresholds", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "estimate-bench": _cmd_estimate_bench,
    "qp-bench": _cmd_qp_bench,
}


def main(argv=None) -> int:
    _configure_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage errors; fold the latter
        # into our usage code
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ColiftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
