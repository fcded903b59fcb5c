"""Online estimation of the payload's effective inertial parameters.

The measured wrist wrench of a rigidly grasped payload is linear in the
10 inertial parameters, so a Kalman filter with a constant-parameter
process model recovers them online.  "Effective" parameters are what the
robot-side sensor actually sees while a partner carries their share of the
load; they are the quantity the impedance controller needs, and they differ
from the full object parameters whenever the partner supports part of it.

:class:`InertialParamEkf` is the online filter.  :func:`wls_map_estimate`
solves the same problem in one shot as a regularized least-squares batch;
with zero process noise the two must agree to machine precision, which the
tests exploit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .object_dynamics import regressor

#: filter tuning used by the default scenario (units follow the parameter
#: vector: kg, kg*m, kg*m^2)
DEFAULT_P0 = np.eye(10)
DEFAULT_Q = 1e-5 * np.diag([1.0, 0.01, 1.0, 0.001, 0, 0, 0, 0, 0, 0])
DEFAULT_R = np.diag([200.0, 1000.0, 1000.0, 1000.0, 1000.0, 50.0])


@dataclass
class EkfTuning:
    """Initial state/covariance and noise covariances for the filter."""

    phi0: np.ndarray = field(default_factory=lambda: np.zeros(10))
    P0: np.ndarray = field(default_factory=lambda: DEFAULT_P0.copy())
    Q: np.ndarray = field(default_factory=lambda: DEFAULT_Q.copy())
    R: np.ndarray = field(default_factory=lambda: DEFAULT_R.copy())

    def __post_init__(self):
        self.phi0 = np.asarray(self.phi0, dtype=float).reshape(10)
        self.P0 = np.asarray(self.P0, dtype=float).reshape(10, 10)
        self.Q = np.asarray(self.Q, dtype=float).reshape(10, 10)
        self.R = np.asarray(self.R, dtype=float).reshape(6, 6)


class InertialParamEkf:
    """Kalman filter over the 10 inertial parameters.

    The process model is a random walk (parameters are constant up to the
    process noise ``Q``), and the measurement model is the wrench regressor,
    which is exactly linear in the state -- so the "extended" part of the
    filter reduces to evaluating the regressor at the current motion.
    """

    def __init__(self, tuning: EkfTuning | None = None):
        self.tuning = tuning or EkfTuning()
        self.reset()

    def reset(self) -> None:
        self.phi = self.tuning.phi0.copy()
        self.P = self.tuning.P0.copy()
        self.innovation = np.zeros(6)
        self.steps = 0

    def predict(self) -> None:
        self.P = self.P + self.tuning.Q

    def update(self, H: np.ndarray, wrench_meas: np.ndarray) -> np.ndarray:
        """Correct the estimate with one wrench sample; returns the innovation."""
        H = np.asarray(H, dtype=float).reshape(6, 10)
        y = np.asarray(wrench_meas, dtype=float).reshape(6)
        S = H @ self.P @ H.T + self.tuning.R
        if np.linalg.cond(S) > 1e12:
            raise NumericalError(
                "innovation covariance is numerically singular "
                f"(condition {np.linalg.cond(S):.3g})"
            )
        K = np.linalg.solve(S, H @ self.P).T
        self.innovation = y - H @ self.phi
        self.phi = self.phi + K @ self.innovation
        P = (np.eye(10) - K @ H) @ self.P
        self.P = 0.5 * (P + P.T)
        if not np.all(np.isfinite(self.phi)):
            raise NumericalError("parameter estimate diverged to non-finite values")
        self.steps += 1
        return self.innovation

    def step(
        self,
        a_lin: np.ndarray,
        domega: np.ndarray,
        omega: np.ndarray,
        wrench_meas: np.ndarray,
        g: np.ndarray | None = None,
    ) -> np.ndarray:
        """Predict + update from one motion/wrench sample."""
        kwargs = {} if g is None else {"g": g}
        H = regressor(a_lin, domega, omega, **kwargs)
        self.predict()
        return self.update(H, wrench_meas)


def wls_map_estimate(
    H_list,
    y_list,
    R: np.ndarray,
    phi0: np.ndarray | None = None,
    P0: np.ndarray | None = None,
) -> np.ndarray:
    """Batch maximum-a-posteriori estimate from stacked wrench samples.

    Solves ``(P0^-1 + sum H' R^-1 H) phi = P0^-1 phi0 + sum H' R^-1 y``.
    This is the exact posterior mean of the linear-Gaussian model, i.e.
    what the Kalman filter converges to with zero process noise.  Written
    against the normal equations rather than a filter recursion so it can
    serve as an independent reference in tests.
    """
    R = np.asarray(R, dtype=float).reshape(6, 6)
    Rinv = np.linalg.inv(R)
    if phi0 is None:
        phi0 = np.zeros(10)
    if P0 is None:
        P0 = np.eye(10)
    info = np.linalg.inv(np.asarray(P0, dtype=float))
    rhs = info @ np.asarray(phi0, dtype=float).reshape(10)
    for H, y in zip(H_list, y_list):
        H = np.asarray(H, dtype=float).reshape(6, 10)
        y = np.asarray(y, dtype=float).reshape(6)
        info = info + H.T @ Rinv @ H
        rhs = rhs + H.T @ Rinv @ y
    return np.linalg.solve(info, rhs)


def excitation_metric(H_list, columns=None) -> dict:
    """Observability summary of a batch of regressor samples.

    Returns the smallest singular value and condition number of the stacked
    regressor.  A tiny smallest singular value flags parameter directions
    the motion never excites (their estimates stay at the prior).  Pass
    ``columns`` to restrict the metric to the parameters actually being
    tracked (e.g. the ones given nonzero process noise); including columns
    the filter has frozen would make the metric uselessly pessimistic.
    """
    stacked = np.vstack([np.asarray(H, dtype=float).reshape(6, 10) for H in H_list])
    if columns is not None:
        stacked = stacked[:, list(columns)]
    svals = np.linalg.svd(stacked, compute_uv=False)
    smin = float(svals[-1])
    smax = float(svals[0])
    return {
        "sigma_min": smin,
        "sigma_max": smax,
        "condition": smax / smin if smin > 0.0 else np.inf,
    }


@dataclass
class EstimationBenchResult:
    """Error trajectories of one kinematic estimation run."""

    t: np.ndarray
    mass_error: np.ndarray
    com_error: np.ndarray
    hand_speed: np.ndarray
    phi_final: np.ndarray
    phi_true: np.ndarray
    metric: dict

    def at(self, time: float) -> dict:
        """Mass/CoM error at the last sample not after ``time``."""
        idx = int(np.searchsorted(self.t, time + 1e-12)) - 1
        idx = max(0, min(idx, len(self.t) - 1))
        return {
            "t": float(self.t[idx]),
            "mass_error": float(self.mass_error[idx]),
            "com_error": float(self.com_error[idx]),
        }


def run_estimation_benchmark(
    params_true,
    duration: float = 10.0,
    rate: float = 1000.0,
    noise_scale: float = 0.0,
    seed: int = 0,
    amplitude: float = 0.2,
    frequency: float = 0.4,
    hand_offset=(0.0, -1.5, 0.0),
    ee_start=(0.0, 0.0, 0.8),
    tuning: EkfTuning | None = None,
) -> EstimationBenchResult:
    """Run the filter on an ideal pivot-excitation trajectory.

    This is the estimation pipeline with the robot taken out: the
    end-effector follows the pivot motion exactly, the measured wrench is
    the regressor applied to the true effective parameters plus optional
    sensor noise (``noise_scale`` scales the per-channel standard
    deviations ``sqrt(diag(R))``), and the filter consumes body-frame
    kinematics.  Used by the ``estimate-bench`` CLI command and by the
    convergence tests, where the closed loop would only obscure whether
    the filter itself meets its error budget.
    """
    from .excitation import PivotExcitation
    from .spatial import quat_to_rot

    params_true = np.asarray(
        params_true.as_vector() if hasattr(params_true, "as_vector") else params_true,
        dtype=float,
    ).reshape(10)
    hand_point = np.asarray(ee_start, dtype=float) + np.asarray(hand_offset, dtype=float)
    pivot = PivotExcitation(
        np.asarray(ee_start, dtype=float), hand_point,
        amplitude=amplitude, frequency=frequency,
    )
    ekf = InertialParamEkf(tuning or EkfTuning())
    rng = np.random.default_rng(seed)
    sigma = noise_scale * np.sqrt(np.diag(ekf.tuning.R))

    dt = 1.0 / float(rate)
    n = int(round(duration * rate))
    t = np.zeros(n)
    mass_error = np.zeros(n)
    com_error = np.zeros(n)
    hand_speed = np.zeros(n)
    H_batch = []

    m_true = params_true[0]
    com_true = params_true[1:4] / m_true
    gravity = np.array([0.0, 0.0, -9.81])

    for k in range(n):
        tk = (k + 1) * dt
        s = pivot.sample(tk)
        R = quat_to_rot(s.quaternion)
        a_b = R.T @ s.linear_accel
        w_b = R.T @ s.angular_velocity
        dw_b = R.T @ s.angular_accel
        g_b = R.T @ gravity
        H = regressor(a_b, dw_b, w_b, g=g_b)
        wrench = H @ params_true
        if noise_scale > 0.0:
            wrench = wrench + sigma * rng.standard_normal(6)
        ekf.predict()
        ekf.update(H, wrench)
        H_batch.append(H)

        t[k] = tk
        mass_error[k] = abs(ekf.phi[0] - m_true)
        if abs(ekf.phi[0]) > 1e-6:
            com_error[k] = np.linalg.norm(ekf.phi[1:4] / ekf.phi[0] - com_true)
        else:
            com_error[k] = np.inf
        v_hand = s.linear_velocity + np.cross(
            s.angular_velocity, hand_point - s.position
        )
        hand_speed[k] = np.linalg.norm(v_hand)

    tracked = [i for i in range(10) if ekf.tuning.Q[i, i] > 0.0]
    metric = excitation_metric(H_batch, columns=tracked or None)
    return EstimationBenchResult(
        t=t,
        mass_error=mass_error,
        com_error=com_error,
        hand_speed=hand_speed,
        phi_final=ekf.phi.copy(),
        phi_true=params_true,
        metric=metric,
    )
