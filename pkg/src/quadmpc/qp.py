"""Dense active-set solver for strictly convex quadratic programs.

Solves   min 0.5 x'Hx + g'x   s.t.  C x <= d,  E x = f

with H positive definite on the feasible manifold. The solver iterates on a
working set of inequality rows: it solves the equality-constrained KKT
system for the current set, drops rows with negative multipliers, and adds
the most violated row, until the KKT conditions hold. Problem sizes here
are a few hundred variables, so each KKT system is re-solved densely.

Warm starting passes the previous working set; on receding-horizon
problems this typically converges in a handful of iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class SolverStatus(Enum):
    OPTIMAL = "optimal"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"


@dataclass
class DenseQp:
    H: np.ndarray
    g: np.ndarray
    C: np.ndarray | None = None
    d: np.ndarray | None = None
    E: np.ndarray | None = None
    f: np.ndarray | None = None

    def __post_init__(self):
        n = self.g.shape[0] if self.g.ndim else 0
        if self.C is None:
            self.C = np.zeros((0, n))
            self.d = np.zeros(0)
        if self.E is None:
            self.E = np.zeros((0, n))
            self.f = np.zeros(0)

    @property
    def n(self) -> int:
        return self.g.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x)


@dataclass
class QpResult:
    x: np.ndarray
    status: SolverStatus
    iterations: int
    objective: float
    active_set: list[int] = field(default_factory=list)
    lam: np.ndarray | None = None  # multipliers of active inequality rows
    nu: np.ndarray | None = None  # equality multipliers


# Feasibility slack treated as "satisfied"; well below the 1e-8 budget the
# returned inputs must meet.
FEAS_TOL = 1e-9
DUAL_TOL = 1e-9
EQ_RESIDUAL_FLOOR = 1e-8


def _kkt_solve(qp: DenseQp, work: list[int]):
    """Solve the KKT system for equalities plus the working inequality rows.

    Returns (x, nu, lam). Falls back to least squares when the system is
    singular (degenerate working sets)."""
    n = qp.n
    A = np.vstack([qp.E, qp.C[work]]) if work else qp.E
    m = A.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = qp.H
    if m:
        K[:n, n:] = A.T
        K[n:, :n] = A
    rhs = np.concatenate([-qp.g, qp.f, qp.d[work]])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    x = sol[:n]
    mults = sol[n:]
    p = qp.E.shape[0]
    return x, mults[:p], mults[p:]


def solve_qp(
    qp: DenseQp,
    warm_active: list[int] | None = None,
    max_iter: int = 200,
) -> QpResult:
    """Active-set solve of the QP; see module docstring for the method."""
    n = qp.n
    if n == 0:
        return QpResult(np.zeros(0), SolverStatus.OPTIMAL, 0, 0.0)

    # Inconsistent equality systems are unsolvable regardless of the
    # inequalities; detect via the least-squares residual floor.
    if qp.E.shape[0]:
        x_eq, res, _, _ = np.linalg.lstsq(qp.E, qp.f, rcond=None)
        residual = np.linalg.norm(qp.E @ x_eq - qp.f, np.inf)
        if residual > EQ_RESIDUAL_FLOOR * max(1.0, np.linalg.norm(qp.f, np.inf)):
            return QpResult(
                np.zeros(n), SolverStatus.INFEASIBLE, 0, float("nan")
            )

    m_ineq = qp.C.shape[0]
    work: list[int] = []
    if warm_active:
        work = sorted({i for i in warm_active if 0 <= i < m_ineq})

    x = np.zeros(n)
    nu = lam = None
    for it in range(1, max_iter + 1):
        x, nu, lam = _kkt_solve(qp, work)

        if work and lam.size and np.min(lam) < -DUAL_TOL:
            # Blocking multiplier: this row should not be active.
            drop = int(np.argmin(lam))
            work.pop(drop)
            continue

        if m_ineq:
            violation = qp.C @ x - qp.d
            worst = int(np.argmax(violation))
            if violation[worst] > FEAS_TOL:
                if worst in work:
                    # Numerically stuck on a degenerate face; accept the
                    # least-squares iterate rather than cycling.
                    break
                work.append(worst)
                work.sort()
                continue

        return QpResult(
            x, SolverStatus.OPTIMAL, it, qp.objective(x), list(work), lam, nu
        )

    return QpResult(
        x, SolverStatus.MAX_ITER, max_iter, qp.objective(x), list(work), lam, nu
    )
