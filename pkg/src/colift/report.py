"""Figure rendering for scenario runs and benchmarks.

Every renderer takes an output directory and writes PNG files next to the
delimited logs, returning the paths it created.  Uses the Agg backend so
headless runs work.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .simulator import SimLog  # noqa: E402

_DPI = 110
_FORCE_LABELS = ("fx", "fy", "fz")
_TORQUE_LABELS = ("tx", "ty", "tz")


def _phase_lines(ax, simlog: SimLog) -> None:
    t = simlog.column("t")
    phase = simlog.column("phase")
    for k in np.nonzero(np.diff(phase) != 0)[0]:
        ax.axvline(t[k + 1], color="0.82", lw=0.8, zorder=0)


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def render_run(outdir, simlog: SimLog, cfg, summary: dict) -> list:
    """Render the four standard figures for one scenario run."""
    outdir = Path(outdir)
    t = simlog.column("t")
    paths = []

    # -- estimate convergence ------------------------------------------
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    eff = cfg.object_spec.effective_params()
    ax0.plot(t, simlog.column("phi_m"), label="estimated mass")
    ax0.axhline(eff.mass, color="k", ls="--", lw=0.8, label="effective mass")
    ax0.set_ylabel("mass [kg]")
    ax0.legend(loc="lower right", fontsize=8)
    phi_m = simlog.column("phi_m")
    com = np.full((len(simlog), 3), np.nan)
    ok = np.abs(phi_m) > 1e-6
    com[ok] = simlog.columns("phi_hx", "phi_hy", "phi_hz")[ok] / phi_m[ok, None]
    com_err = np.linalg.norm(com - eff.com, axis=1)
    ax1.semilogy(t, np.maximum(com_err, 1e-6))
    ax1.set_ylabel("CoM error [m]")
    ax1.set_xlabel("t [s]")
    for ax in (ax0, ax1):
        _phase_lines(ax, simlog)
    fig.suptitle("inertial estimate", fontsize=10)
    paths.append(_save(fig, outdir / "fig_estimate.png"))

    # -- measured wrench -------------------------------------------------
    fig, axes = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    for name in _FORCE_LABELS:
        axes[0].plot(t, simlog.column(f"fext_{name}"), lw=0.7, label=name)
    for name in _TORQUE_LABELS:
        axes[1].plot(t, simlog.column(f"fext_{name}"), lw=0.7, label=name)
    axes[0].set_ylabel("force [N]")
    axes[1].set_ylabel("torque [N m]")
    axes[1].set_xlabel("t [s]")
    for ax in axes:
        _phase_lines(ax, simlog)
        ax.legend(loc="upper right", fontsize=8, ncol=3)
    fig.suptitle("measured interaction wrench (EE frame)", fontsize=10)
    paths.append(_save(fig, outdir / "fig_wrench.png"))

    # -- partner wrench estimate -----------------------------------------
    fig, axes = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    for name in _FORCE_LABELS:
        axes[0].plot(t, simlog.column(f"fhat_{name}"), lw=0.7, label=name)
    for name in _TORQUE_LABELS:
        axes[1].plot(t, simlog.column(f"fhat_{name}"), lw=0.7, label=name)
    axes[0].set_ylabel("force [N]")
    axes[1].set_ylabel("torque [N m]")
    axes[1].set_xlabel("t [s]")
    for ax in axes:
        _phase_lines(ax, simlog)
        ax.legend(loc="upper right", fontsize=8, ncol=3)
    fig.suptitle("estimated partner wrench at the hand", fontsize=10)
    paths.append(_save(fig, outdir / "fig_partner.png"))

    # -- tracking ----------------------------------------------------------
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    for i, name in enumerate(("x", "y", "z")):
        ax0.plot(t, simlog.column(f"ee_p{name}"), lw=0.9, label=f"ee {name}")
        ax0.plot(t, simlog.column(f"des_p{name}"), lw=0.8, ls="--", color=f"C{i}")
    ax0.set_ylabel("position [m]")
    ax0.legend(loc="upper left", fontsize=8, ncol=3)
    hand = np.linalg.norm(simlog.columns("hand_vx", "hand_vy", "hand_vz"), axis=1)
    ax1.plot(t, hand, lw=0.8)
    ax1.set_ylabel("hand speed [m/s]")
    ax1.set_xlabel("t [s]")
    for ax in (ax0, ax1):
        _phase_lines(ax, simlog)
    fig.suptitle("tracking (solid actual, dashed desired)", fontsize=10)
    paths.append(_save(fig, outdir / "fig_tracking.png"))
    return paths


def render_estimation_bench(outdir, result) -> list:
    """Error-convergence figure for the kinematic estimation benchmark."""
    outdir = Path(outdir)
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    ax0.semilogy(result.t, np.maximum(result.mass_error, 1e-9))
    ax0.axhline(0.05, color="k", ls=":", lw=0.8)
    ax0.set_ylabel("mass error [kg]")
    finite = np.where(np.isfinite(result.com_error), result.com_error, np.nan)
    ax1.semilogy(result.t, np.maximum(finite, 1e-9))
    ax1.axhline(0.015, color="k", ls=":", lw=0.8)
    ax1.set_ylabel("CoM error [m]")
    ax1.set_xlabel("t [s]")
    fig.suptitle("estimation benchmark convergence", fontsize=10)
    return [_save(fig, outdir / "fig_convergence.png")]


def render_qp_bench(outdir, gaps, residuals) -> list:
    """Solver-vs-oracle gap scatter for the QP benchmark."""
    outdir = Path(outdir)
    gaps = np.asarray(gaps, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(8, 3.5))
    ax0.semilogy(np.maximum(np.abs(gaps), 1e-18), ".", ms=3)
    ax0.axhline(1e-6, color="k", ls=":", lw=0.8)
    ax0.set_xlabel("problem")
    ax0.set_ylabel("|objective gap|")
    ax1.semilogy(np.maximum(residuals, 1e-18), ".", ms=3)
    ax1.axhline(1e-8, color="k", ls=":", lw=0.8)
    ax1.set_xlabel("problem")
    ax1.set_ylabel("KKT residual")
    fig.suptitle("active-set solver vs enumeration oracle", fontsize=10)
    return [_save(fig, outdir / "fig_qp.png")]
