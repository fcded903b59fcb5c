"""Task-priority resolution as a small dense QP, plus torque assembly.

The whole-body controller turns task accelerations into joint-space
accelerations with one strictly convex QP per control tick::

    min_x  w_j ||x - etadot_d1||^2 + w_t ||xdd_d1 - J1 x - J1dot eta||^2
    s.t.   priority-0 tasks as hard equalities
           lb <= x <= ub

Priority-0 tasks (a joint target, a Cartesian task, or both) enter as
equalities, priority-1 tasks through the cost.  The solver is a dense
primal active-set method on the bound constraints; problems here are tiny
(n around 9, a handful of equalities), so robustness and determinism
matter more than speed.  A brute-force enumeration oracle
(:func:`solve_by_enumeration`) certifies the solver in the tests and in
the ``qp-bench`` CLI path.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError

_FEAS_TOL = 1e-8
_DUAL_TOL = 1e-10

#: priority-1 weights; chosen, not taken from any reference
DEFAULT_POSTURE_WEIGHT = 1.0
DEFAULT_TASK_WEIGHT = 10.0


class QpStatus(enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"


@dataclass
class QpProblem:
    """min 1/2 x'Hx + f'x  s.t.  A_eq x = b_eq, lb <= x <= ub."""

    H: np.ndarray
    f: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.f = np.asarray(self.f, dtype=float).reshape(-1)
        n = self.f.shape[0]
        if self.H.shape != (n, n):
            raise SolverError(QpStatus.INFEASIBLE.value, "H and f dimensions disagree")
        if self.A_eq is not None:
            self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
            self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(self.A_eq.shape[0])
        if self.lb is None:
            self.lb = np.full(n, -np.inf)
        else:
            self.lb = np.asarray(self.lb, dtype=float).reshape(n)
        if self.ub is None:
            self.ub = np.full(n, np.inf)
        else:
            self.ub = np.asarray(self.ub, dtype=float).reshape(n)

    @property
    def n(self) -> int:
        return self.f.shape[0]


@dataclass
class QpSolution:
    x: np.ndarray
    status: QpStatus
    iterations: int
    active_set: tuple = ()
    objective: float = np.nan
    kkt_residual: float = np.nan


def _objective(problem: QpProblem, x: np.ndarray) -> float:
    return float(0.5 * x @ problem.H @ x + problem.f @ x)


def _kkt_residual(problem: QpProblem, x: np.ndarray) -> float:
    """Primal feasibility measure: equality residual plus bound violation."""
    res = 0.0
    if problem.A_eq is not None and problem.A_eq.shape[0]:
        res = float(np.max(np.abs(problem.A_eq @ x - problem.b_eq)))
    viol_ub = np.max(np.maximum(x - problem.ub, 0.0), initial=0.0)
    viol_lb = np.max(np.maximum(problem.lb - x, 0.0), initial=0.0)
    return max(res, float(viol_ub), float(viol_lb))


def _solve_working_set(problem: QpProblem, working: tuple):
    """Equality-solve with the given bounds clamped; None when inconsistent.

    ``working`` holds (index, side) pairs, side +1 for the upper bound and
    -1 for the lower.  Returns (x, nu) with the bound multipliers in the
    working-set order.
    """
    n = problem.n
    m_eq = 0 if problem.A_eq is None else problem.A_eq.shape[0]
    k = len(working)
    E = np.zeros((k, n))
    bounds = np.zeros(k)
    for row, (idx, side) in enumerate(working):
        E[row, idx] = 1.0
        bounds[row] = problem.ub[idx] if side > 0 else problem.lb[idx]
    top = [problem.H]
    if m_eq:
        top.append(problem.A_eq.T)
    if k:
        top.append(E.T)
    rows = [np.hstack(top)]
    rhs = [-problem.f]
    if m_eq:
        rows.append(np.hstack([problem.A_eq, np.zeros((m_eq, m_eq + k))]))
        rhs.append(problem.b_eq)
    if k:
        rows.append(np.hstack([E, np.zeros((k, m_eq + k))]))
        rhs.append(bounds)
    KKT = np.vstack(rows)
    target = np.concatenate(rhs)
    try:
        sol = np.linalg.solve(KKT, target)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(KKT, target, rcond=None)
        if not np.allclose(KKT @ sol, target, atol=1e-7):
            return None
    x = sol[:n]
    nu = sol[n + m_eq:]
    return x, nu


def _equalities_consistent(problem: QpProblem) -> bool:
    if problem.A_eq is None or problem.A_eq.shape[0] == 0:
        return True
    A, b = problem.A_eq, problem.b_eq
    return np.linalg.matrix_rank(np.hstack([A, b[:, None]])) == np.linalg.matrix_rank(A)


class ActiveSetQp:
    """Primal active-set solver over the box bounds, with warm starting.

    One instance per control loop: the working set that solved the last
    tick seeds the next solve, which usually terminates in one iteration
    during steady motion.
    """

    def __init__(self, max_iterations: int = 200):
        self.max_iterations = int(max_iterations)
        self._last_working: tuple = ()

    def solve(self, problem: QpProblem, warm_start: bool = True) -> QpSolution:
        n = problem.n
        if np.any(problem.lb > problem.ub + _FEAS_TOL):
            return QpSolution(np.zeros(n), QpStatus.INFEASIBLE, 0)
        if not _equalities_consistent(problem):
            return QpSolution(np.zeros(n), QpStatus.INFEASIBLE, 0)

        working = tuple(
            (i, s) for (i, s) in (self._last_working if warm_start else ())
            if i < n
            and np.isfinite(problem.ub[i] if s > 0 else problem.lb[i])
        )
        sol = self._iterate(problem, working)
        if sol.status is not QpStatus.OPTIMAL and working:
            # a stale warm start can make the add/drop sequence cycle;
            # a cold start of the same problem is loop-free in practice
            sol = self._iterate(problem, ())
        return sol

    def _iterate(self, problem: QpProblem, working: tuple) -> QpSolution:
        n = problem.n
        x = np.zeros(n)
        for it in range(1, self.max_iterations + 1):
            solved = _solve_working_set(problem, working)
            if solved is None:
                # degenerate working set; drop its newest member and retry
                if not working:
                    return QpSolution(x, QpStatus.INFEASIBLE, it)
                working = working[:-1]
                continue
            x, nu = solved

            # most violated bound not yet in the working set
            viol_idx, viol_side, viol_amount = -1, 0, _FEAS_TOL
            in_set = {idx for idx, _ in working}
            for i in range(n):
                if i in in_set:
                    continue
                over = x[i] - problem.ub[i]
                under = problem.lb[i] - x[i]
                if over > viol_amount:
                    viol_idx, viol_side, viol_amount = i, 1, over
                if under > viol_amount:
                    viol_idx, viol_side, viol_amount = i, -1, under
            if viol_idx >= 0:
                working = tuple(sorted(working + ((viol_idx, viol_side),)))
                continue

            # all bounds satisfied; check dual feasibility of the clamps
            worst_row, worst_val = -1, -_DUAL_TOL
            for row, (idx, side) in enumerate(working):
                signed = side * nu[row]
                if signed < worst_val:
                    worst_row, worst_val = row, signed
            if worst_row >= 0:
                working = tuple(w for r, w in enumerate(working) if r != worst_row)
                continue

            self._last_working = working
            return QpSolution(
                x, QpStatus.OPTIMAL, it,
                active_set=working,
                objective=_objective(problem, x),
                kkt_residual=_kkt_residual(problem, x),
            )
        return QpSolution(x, QpStatus.MAX_ITER, self.max_iterations)


def solve_by_enumeration(problem: QpProblem) -> QpSolution:
    """Certified solve by trying working sets in order of size.

    For a strictly convex QP the optimum is unique, so the first working
    set whose equality solve passes the complete KKT test (primal bounds,
    dual signs, stationarity by construction) is the answer.  Exponential
    in the worst case -- a test oracle, not a production path.
    """
    n = problem.n
    if np.any(problem.lb > problem.ub + _FEAS_TOL):
        return QpSolution(np.zeros(n), QpStatus.INFEASIBLE, 0)
    if not _equalities_consistent(problem):
        return QpSolution(np.zeros(n), QpStatus.INFEASIBLE, 0)

    finite_bounds = []
    for i in range(n):
        if np.isfinite(problem.ub[i]):
            finite_bounds.append((i, 1))
        if np.isfinite(problem.lb[i]):
            finite_bounds.append((i, -1))

    tried = 0
    for k in range(0, len(finite_bounds) + 1):
        for combo in itertools.combinations(finite_bounds, k):
            indices = [idx for idx, _ in combo]
            if len(set(indices)) != len(indices):
                continue  # cannot clamp one variable at both bounds
            tried += 1
            solved = _solve_working_set(problem, combo)
            if solved is None:
                continue
            x, nu = solved
            if np.any(x > problem.ub + _FEAS_TOL) or np.any(x < problem.lb - _FEAS_TOL):
                continue
            if any(side * nu[row] < -_FEAS_TOL for row, (_, side) in enumerate(combo)):
                continue
            return QpSolution(
                x, QpStatus.OPTIMAL, tried,
                active_set=tuple(combo),
                objective=_objective(problem, x),
                kkt_residual=_kkt_residual(problem, x),
            )
    return QpSolution(np.zeros(n), QpStatus.INFEASIBLE, tried)


# ---------------------------------------------------------------------------
# task construction
# ---------------------------------------------------------------------------

@dataclass
class TaskSet:
    """Everything one control tick asks of the QP.

    Priority-0 entries become hard equalities; priority-1 entries weighted
    cost terms.  Cartesian tasks are given at the acceleration level as
    ``(J, Jdot_eta, xdd_des)`` so the equality reads
    ``J etadot = xdd_des - Jdot_eta``.
    """

    n: int
    p0_joint: np.ndarray | None = None
    p0_cartesian: tuple | None = None
    p1_joint: np.ndarray | None = None
    p1_cartesian: tuple | None = None
    posture_weight: float = DEFAULT_POSTURE_WEIGHT
    task_weight: float = DEFAULT_TASK_WEIGHT
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    regularization: float = 1e-10

    def to_problem(self) -> QpProblem:
        n = self.n
        H = np.zeros((n, n))
        f = np.zeros(n)
        if self.p1_joint is not None:
            H += 2.0 * self.posture_weight * np.eye(n)
            f += -2.0 * self.posture_weight * np.asarray(self.p1_joint, dtype=float).reshape(n)
        if self.p1_cartesian is not None:
            J1, J1dot_eta, xdd = self.p1_cartesian
            J1 = np.asarray(J1, dtype=float)
            target = np.asarray(xdd, dtype=float) - np.asarray(J1dot_eta, dtype=float)
            H += 2.0 * self.task_weight * J1.T @ J1
            f += -2.0 * self.task_weight * J1.T @ target
        # keep the problem strictly convex even with a rank-deficient cost
        H += 2.0 * self.regularization * np.eye(n)

        eq_rows, eq_rhs = [], []
        if self.p0_joint is not None:
            eq_rows.append(np.eye(n))
            eq_rhs.append(np.asarray(self.p0_joint, dtype=float).reshape(n))
        if self.p0_cartesian is not None:
            J0, J0dot_eta, xdd0 = self.p0_cartesian
            eq_rows.append(np.asarray(J0, dtype=float))
            eq_rhs.append(
                np.asarray(xdd0, dtype=float) - np.asarray(J0dot_eta, dtype=float)
            )
        A_eq = np.vstack(eq_rows) if eq_rows else None
        b_eq = np.concatenate(eq_rhs) if eq_rows else None
        return QpProblem(H, f, A_eq, b_eq, self.lb, self.ub)


def joint_pd_task(q, q_des, qd, qd_des, kp, kd, qdd_des=None) -> np.ndarray:
    """Joint-space PD acceleration target (all arrays elementwise)."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    out = -np.asarray(kp, dtype=float) * (q - np.asarray(q_des, dtype=float))
    out -= np.asarray(kd, dtype=float) * (qd - np.asarray(qd_des, dtype=float))
    if qdd_des is not None:
        out = out + np.asarray(qdd_des, dtype=float)
    return out


def cartesian_pd_task(pose_err, twist_err, accel_des, kp, kd) -> np.ndarray:
    """Cartesian PD acceleration: ``xdd_d - Kp e - Kd edot``.

    ``pose_err`` uses the quaternion-log orientation error convention of
    the spatial helpers.
    """
    return (
        np.asarray(accel_des, dtype=float)
        - np.asarray(kp, dtype=float) @ np.asarray(pose_err, dtype=float)
        - np.asarray(kd, dtype=float) @ np.asarray(twist_err, dtype=float)
    )


def feedback_linearize(
    M: np.ndarray,
    bias: np.ndarray,
    gravity: np.ndarray,
    etadot_cmd: np.ndarray,
    tau_ext: np.ndarray | None = None,
) -> np.ndarray:
    """Joint torques realizing a commanded acceleration.

    Inverts the reduced equation of motion; ``tau_ext`` is the modeled
    generalized force of external wrenches on the plant, subtracted so the
    plant (which feels the real thing) lands on ``etadot_cmd``.
    """
    tau = (
        np.asarray(M, dtype=float) @ np.asarray(etadot_cmd, dtype=float)
        + np.asarray(bias, dtype=float)
        + np.asarray(gravity, dtype=float)
    )
    if tau_ext is not None:
        tau = tau - np.asarray(tau_ext, dtype=float)
    return tau


def clamp_torque(tau: np.ndarray, limits: np.ndarray) -> tuple:
    """Saturate torques to symmetric limits; reports whether any clamped."""
    tau = np.asarray(tau, dtype=float)
    limits = np.asarray(limits, dtype=float)
    clamped = np.clip(tau, -limits, limits)
    return clamped, bool(np.any(clamped != tau))


def random_problem(rng, n: int = 9) -> QpProblem:
    """One random strictly convex box-QP, optionally with equality rows.

    The family is sized so the enumeration oracle stays tractable: bounds
    are finite with moderate probability and tight enough that several of
    them are active at the optimum.
    """
    A = rng.standard_normal((n, n))
    H = A @ A.T + 0.5 * np.eye(n)
    f = rng.standard_normal(n)
    A_eq = b_eq = None
    m = int(rng.integers(0, 4))
    if m:
        A_eq = rng.standard_normal((m, n))
        b_eq = 0.3 * rng.standard_normal(m)
    lb = np.where(rng.random(n) < 0.4, -(0.05 + 0.3 * rng.random(n)), -np.inf)
    ub = np.where(rng.random(n) < 0.4, 0.05 + 0.3 * rng.random(n), np.inf)
    return QpProblem(H, f, A_eq=A_eq, b_eq=b_eq, lb=lb, ub=ub)


def qp_benchmark(count: int = 500, seed: int = 0) -> dict:
    """Solve ``count`` random QPs and compare against the enumeration oracle.

    Returns per-problem objective gaps, KKT residuals, iteration counts,
    statuses, and the solver-only wall time (oracle time excluded).
    """
    import time

    rng = np.random.default_rng(seed)
    problems = [random_problem(rng) for _ in range(count)]

    solver = ActiveSetQp()
    solutions = []
    t0 = time.perf_counter()
    for prob in problems:
        solutions.append(solver.solve(prob))
    elapsed = time.perf_counter() - t0

    gaps = np.empty(count)
    residuals = np.empty(count)
    iterations = np.empty(count, dtype=int)
    statuses = []
    for i, (prob, sol) in enumerate(zip(problems, solutions)):
        oracle = solve_by_enumeration(prob)
        gaps[i] = sol.objective - oracle.objective
        residuals[i] = sol.kkt_residual
        iterations[i] = sol.iterations
        statuses.append(sol.status)
    return {
        "gaps": gaps,
        "residuals": residuals,
        "iterations": iterations,
        "statuses": statuses,
        "solver_seconds": elapsed,
    }
