"""Receding-horizon ground-reaction-force controller.

Each control step runs a few rounds of sequential linearization: the
one-step dynamics (nominal rigid body plus the current residual-wrench
model) are expanded to first order around the incumbent trajectory, the
resulting multistage problem is condensed into a dense strictly convex QP
over the stance-foot forces, and the QP is solved with the active-set
solver. Swing-leg forces are eliminated structurally, so they are zero by
construction. The first input of the final round is applied.

Rigid-body Jacobians are closed-form; the residual term is differentiated
by central finite differences so any wrench model (learned, constant, or
the true scenario wrench) can be plugged in.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
import numpy as np

from .errors import DimensionMismatch, GimbalLock
from .features import ResidualModel
from .qp import DenseQp, QpResult, SolverStatus, solve_qp
from .rigid_body import (
    INPUT_DIM,
    NUM_LEGS,
    STATE_DIM,
    WRENCH_DIM,
    BodyParams,
    BodyState,
    FootForces,
    StanceGeometry,
    cross_rows,
    rotation_matrices,
    rotation_matrix,
    skew_rows,
)

FD_STEP = 1e-6


def default_cost_weights() -> "CostWeights":
    return CostWeights(
        q_p=np.full(3, 12.5),
        q_theta=np.array([0.5, 0.5, 2.5]),
        q_v=np.array([0.2, 0.2, 0.4]),
        q_omega=np.array([0.1, 0.1, 0.4]),
        r_u=np.full(INPUT_DIM, 5e-5),
    )


@dataclass(frozen=True)
class CostWeights:
    """Diagonal quadratic stage-cost weights."""

    q_p: np.ndarray
    q_theta: np.ndarray
    q_v: np.ndarray
    q_omega: np.ndarray
    r_u: np.ndarray

    def __post_init__(self):
        for name, size in (
            ("q_p", 3),
            ("q_theta", 3),
            ("q_v", 3),
            ("q_omega", 3),
            ("r_u", INPUT_DIM),
        ):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(size)
            if np.any(arr < 0):
                raise ValueError(f"{name} entries must be >= 0")
            object.__setattr__(self, name, arr)
        if np.any(self.r_u <= 0):
            raise ValueError("r_u entries must be > 0")

    @property
    def state_diag(self) -> np.ndarray:
        return np.concatenate([self.q_p, self.q_theta, self.q_v, self.q_omega])

    @property
    def input_diag(self) -> np.ndarray:
        return self.r_u


@dataclass(frozen=True)
class InputConstraintSet:
    """Friction-pyramid and normal-force bounds on stance-foot forces.

    The pyramid acts on body-frame forces: |f_x| <= mu f_z, |f_y| <= mu f_z,
    f_z_min <= f_z <= f_z_max. Swing legs are force-free by elimination.
    contact_flags, when present, records the per-stage stance pattern the
    problem was assembled with.
    """

    mu: float = 0.6
    f_z_min: float = 0.0
    f_z_max: float = 250.0
    contact_flags: np.ndarray | None = None

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be > 0")
        if self.f_z_min < 0 or self.f_z_max < self.f_z_min:
            raise ValueError("need 0 <= f_z_min <= f_z_max")


@dataclass
class MpcProblem:
    horizon: int
    dt: float
    reference: list[BodyState]  # length horizon + 1
    weights: CostWeights
    constraints: InputConstraintSet
    residual_model: ResidualModel
    geometry: list[StanceGeometry]  # length horizon
    params: BodyParams
    t0: float = 0.0
    u_ref: np.ndarray | None = None  # (horizon, 12); default gravity split

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if len(self.reference) != self.horizon + 1:
            raise ValueError("reference must have horizon + 1 entries")
        if len(self.geometry) != self.horizon:
            raise ValueError("geometry must have horizon entries")
        if self.u_ref is None:
            self.u_ref = compensated_reference_input(
                self.reference, self.geometry, self.params, self.residual_model,
                self.dt, self.t0,
            )


@dataclass
class MpcSolution:
    inputs: list[FootForces]
    predicted_states: list[BodyState]
    objective: float
    solver_status: SolverStatus
    iterations: int
    solve_time: float


def reference_input(geom: StanceGeometry, params: BodyParams, theta) -> np.ndarray:
    """Gravity-compensating force distribution split over the stance feet.

    Used as the input-cost reference and the cold-start guess; it makes the
    reference trajectory an exact fixed point of the model at equilibrium.
    """
    u = np.zeros(INPUT_DIM)
    n_stance = int(np.count_nonzero(geom.stance))
    if n_stance == 0:
        return u
    total_body = -params.mass * rotation_matrix(theta).T @ params.gravity
    per_foot = total_body / n_stance
    for i in range(NUM_LEGS):
        if geom.stance[i]:
            u[3 * i : 3 * i + 3] = per_foot
    return u


def compensated_reference_input(
    reference: list[BodyState],
    geometry: list[StanceGeometry],
    params: BodyParams,
    model: ResidualModel,
    dt: float,
    t0: float,
) -> np.ndarray:
    """Per-stage input reference including the model's wrench compensation.

    Starts from the gravity split and recenters it once on the force that
    also cancels the predicted residual (evaluated at the gravity split):
    the input cost then pulls toward the distribution that actually holds
    the reference under the modeled dynamics, so a disturbance known to the
    model is compensated without a cost-balance offset. With a zero model
    this is exactly the gravity split. The wrench's torque part is ignored
    in the split (equal distribution over stance feet).
    """
    n = len(geometry)
    u_ref = np.stack(
        [
            reference_input(geometry[k], params, reference[k].theta)
            for k in range(n)
        ]
    )
    X = np.stack([reference[k].as_vector() for k in range(n)])
    feet = np.stack([g.foot_positions_body for g in geometry])
    ts = t0 + dt * np.arange(n)
    wrench = model.wrench_rows(X, u_ref, feet, ts)
    out = np.zeros_like(u_ref)
    for k in range(n):
        stance = geometry[k].stance
        n_stance = int(np.count_nonzero(stance))
        if n_stance == 0:
            continue
        R = rotation_matrix(reference[k].theta)
        total_body = -R.T @ (params.mass * params.gravity + wrench[k, 0:3])
        per_foot = total_body / n_stance
        for i in range(NUM_LEGS):
            if stance[i]:
                out[k, 3 * i : 3 * i + 3] = per_foot
    return out


def _batched_rotation_jacobians(thetas: np.ndarray) -> np.ndarray:
    """dR/d(roll, pitch, yaw) for a batch of attitudes, (N,3,3,3)."""
    n = thetas.shape[0]
    cr, sr = np.cos(thetas[:, 0]), np.sin(thetas[:, 0])
    cp, sp = np.cos(thetas[:, 1]), np.sin(thetas[:, 1])
    cy, sy = np.cos(thetas[:, 2]), np.sin(thetas[:, 2])
    Rx = np.zeros((n, 3, 3))
    Rx[:, 0, 0] = 1
    Rx[:, 1, 1] = cr
    Rx[:, 1, 2] = -sr
    Rx[:, 2, 1] = sr
    Rx[:, 2, 2] = cr
    Ry = np.zeros((n, 3, 3))
    Ry[:, 0, 0] = cp
    Ry[:, 0, 2] = sp
    Ry[:, 1, 1] = 1
    Ry[:, 2, 0] = -sp
    Ry[:, 2, 2] = cp
    Rz = np.zeros((n, 3, 3))
    Rz[:, 0, 0] = cy
    Rz[:, 0, 1] = -sy
    Rz[:, 1, 0] = sy
    Rz[:, 1, 1] = cy
    Rz[:, 2, 2] = 1
    dRx = np.zeros((n, 3, 3))
    dRx[:, 1, 1] = -sr
    dRx[:, 1, 2] = -cr
    dRx[:, 2, 1] = cr
    dRx[:, 2, 2] = -sr
    dRy = np.zeros((n, 3, 3))
    dRy[:, 0, 0] = -sp
    dRy[:, 0, 2] = cp
    dRy[:, 2, 0] = -cp
    dRy[:, 2, 2] = -sp
    dRz = np.zeros((n, 3, 3))
    dRz[:, 0, 0] = -sy
    dRz[:, 0, 1] = -cy
    dRz[:, 1, 0] = cy
    dRz[:, 1, 1] = -sy
    out = np.empty((n, 3, 3, 3))
    RzRy = Rz @ Ry
    out[:, 0] = RzRy @ dRx
    out[:, 1] = Rz @ dRy @ Rx
    out[:, 2] = dRz @ Ry @ Rx
    return out


def linearize_horizon(
    states: np.ndarray,
    inputs: np.ndarray,
    geometry: list[StanceGeometry],
    params: BodyParams,
    model: ResidualModel,
    dt: float,
    t0: float = 0.0,
    fd_step: float = FD_STEP,
    differentiate_input_features: bool = True,
) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """First-order expansions of the one-step model along a trajectory.

    states (N,12) and inputs (N,12) are the expansion points, one per
    stage. Returns per-stage (A, B, c) with x_next ~= A x + B u + c, exact
    at the expansion point. Rigid-body terms are differentiated in closed
    form; the residual wrench term by central finite differences in one
    batched model evaluation. With differentiate_input_features=False the
    input dependence of the residual is frozen at the expansion point.
    """
    X = np.asarray(states, dtype=float).reshape(-1, STATE_DIM)
    U = np.asarray(inputs, dtype=float).reshape(-1, INPUT_DIM)
    n = X.shape[0]
    thetas = X[:, 3:6]
    omegas = X[:, 9:12]
    if np.any(np.abs(thetas[:, 1]) >= np.pi / 2 - 1e-3):
        raise GimbalLock("pitch too close to +-pi/2 along the horizon")
    m = params.mass
    J = params.inertia
    Jinv = params.inertia_inv
    feet = np.stack([g.foot_positions_body for g in geometry])  # (N,4,3)
    forces = U.reshape(n, NUM_LEGS, 3)
    f_sum = forces.sum(axis=1)
    torque_sum = cross_rows(feet, forces).sum(axis=1)

    cr, sr = np.cos(thetas[:, 0]), np.sin(thetas[:, 0])
    cp, tp = np.cos(thetas[:, 1]), np.tan(thetas[:, 1])
    T = np.zeros((n, 3, 3))
    T[:, 0, 0] = 1.0
    T[:, 0, 1] = sr * tp
    T[:, 0, 2] = cr * tp
    T[:, 1, 1] = cr
    T[:, 1, 2] = -sr
    T[:, 2, 1] = sr / cp
    T[:, 2, 2] = cr / cp
    w1, w2 = omegas[:, 1], omegas[:, 2]
    sec2 = 1.0 / cp**2
    dT_roll_w = np.stack(
        [cr * tp * w1 - sr * tp * w2, -sr * w1 - cr * w2, (cr * w1 - sr * w2) / cp],
        axis=1,
    )
    dT_pitch_w = np.stack(
        [sec2 * (sr * w1 + cr * w2), np.zeros(n), tp / cp * (sr * w1 + cr * w2)],
        axis=1,
    )

    R = rotation_matrices(thetas)
    dR = _batched_rotation_jacobians(thetas)

    Fx = np.zeros((n, STATE_DIM, STATE_DIM))
    Fu = np.zeros((n, STATE_DIM, INPUT_DIM))
    Fx[:, 0:3, 6:9] = np.eye(3)
    Fx[:, 3:6, 3] = dT_roll_w
    Fx[:, 3:6, 4] = dT_pitch_w
    Fx[:, 3:6, 9:12] = T
    for k in range(3):
        Fx[:, 6:9, 3 + k] = np.einsum("nij,nj->ni", dR[:, k], f_sum) / m
    J_omega = omegas @ J.T
    gyro_jac = skew_rows(J_omega) - skew_rows(omegas) @ J
    Fx[:, 9:12, 9:12] = np.einsum("ab,nbc->nac", Jinv, gyro_jac)
    for i in range(NUM_LEGS):
        cols = slice(3 * i, 3 * i + 3)
        Fu[:, 6:9, cols] = R / m
        Fu[:, 9:12, cols] = np.einsum("ab,nbc->nac", Jinv, skew_rows(feet[:, i]))

    # Residual wrench term: central differences, one batched evaluation.
    n_pert = 2 * STATE_DIM + (2 * INPUT_DIM if differentiate_input_features else 0)
    rows = n_pert + 1  # final row is the unperturbed point
    Px = np.zeros((rows, STATE_DIM))
    Pu = np.zeros((rows, INPUT_DIM))
    for i in range(STATE_DIM):
        Px[2 * i, i] = fd_step
        Px[2 * i + 1, i] = -fd_step
    if differentiate_input_features:
        for j in range(INPUT_DIM):
            Pu[2 * STATE_DIM + 2 * j, j] = fd_step
            Pu[2 * STATE_DIM + 2 * j + 1, j] = -fd_step
    Xb = (X[:, None, :] + Px[None, :, :]).reshape(-1, STATE_DIM)
    Ub = (U[:, None, :] + Pu[None, :, :]).reshape(-1, INPUT_DIM)
    feet_rows = np.repeat(feet, rows, axis=0)
    ts = np.repeat(t0 + dt * np.arange(n), rows)
    Wb = model.wrench_rows(Xb, Ub, feet_rows, ts).reshape(n, rows, WRENCH_DIM)
    h0 = Wb[:, -1]
    dHx = (Wb[:, 0 : 2 * STATE_DIM : 2] - Wb[:, 1 : 2 * STATE_DIM : 2]) / (2 * fd_step)
    dHx = dHx.transpose(0, 2, 1)  # (n, 6, 12)
    Fx[:, 6:9, :] += dHx[:, 0:3, :] / m
    Fx[:, 9:12, :] += np.einsum("ab,nbc->nac", Jinv, dHx[:, 3:6, :])
    if differentiate_input_features:
        blk = Wb[:, 2 * STATE_DIM : 2 * STATE_DIM + 2 * INPUT_DIM]
        dHu = (blk[:, 0::2] - blk[:, 1::2]).transpose(0, 2, 1) / (2 * fd_step)
        Fu[:, 6:9, :] += dHu[:, 0:3, :] / m
        Fu[:, 9:12, :] += np.einsum("ab,nbc->nac", Jinv, dHu[:, 3:6, :])

    xdot = np.empty((n, STATE_DIM))
    xdot[:, 0:3] = X[:, 6:9]
    xdot[:, 3:6] = np.einsum("nij,nj->ni", T, omegas)
    xdot[:, 6:9] = params.gravity + (
        np.einsum("nij,nj->ni", R, f_sum) + h0[:, 0:3]
    ) / m
    xdot[:, 9:12] = (
        -cross_rows(omegas, J_omega) + torque_sum + h0[:, 3:6]
    ) @ Jinv.T
    A = np.broadcast_to(np.eye(STATE_DIM), (n, STATE_DIM, STATE_DIM)) + dt * Fx
    B = dt * Fu
    c = X + dt * xdot - np.einsum("nij,nj->ni", A, X) - np.einsum("nij,nj->ni", B, U)
    return [(A[k], B[k], c[k]) for k in range(n)]


def linearize_dynamics(
    x_ref: BodyState,
    u_ref: np.ndarray,
    geom: StanceGeometry,
    params: BodyParams,
    model: ResidualModel,
    dt: float,
    t: float = 0.0,
    fd_step: float = FD_STEP,
    differentiate_input_features: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Single-stage expansion; see linearize_horizon."""
    return linearize_horizon(
        x_ref.as_vector()[None, :],
        np.asarray(u_ref, dtype=float).reshape(1, INPUT_DIM),
        [geom],
        params,
        model,
        dt,
        t0=t,
        fd_step=fd_step,
        differentiate_input_features=differentiate_input_features,
    )[0]


_PYRAMID = np.array(
    [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ]
)


def _foot_constraint_rows(cs: InputConstraintSet) -> tuple[np.ndarray, np.ndarray]:
    rows = _PYRAMID.copy()
    rows[0:4, 2] = -cs.mu
    rhs = np.array([0.0, 0.0, 0.0, 0.0, cs.f_z_max, -cs.f_z_min])
    return rows, rhs


@dataclass
class CondensedQp:
    """Dense QP over stacked stance-foot forces plus unpacking metadata."""

    qp: DenseQp
    active_cols: list[np.ndarray]  # per stage: indices into the 12 input dims
    var_slices: list[slice]
    const_states: np.ndarray  # (N+1, 12): trajectory at u == 0
    S: np.ndarray  # (N*12, n_vars): d(states 1..N)/d(vars)
    layout_sig: tuple


_layout_cache: dict = {}


def _stage_layout(sig: tuple, constraints: InputConstraintSet):
    """Variable layout and constraint block for a stance-pattern sequence.

    Both depend only on the pattern and the constraint parameters, so they
    are cached across control steps (patterns repeat with the gait).
    """
    key = (sig, constraints.mu, constraints.f_z_min, constraints.f_z_max)
    hit = _layout_cache.get(key)
    if hit is not None:
        return hit
    active_cols = []
    var_slices = []
    n_vars = 0
    for stance in sig:
        idx = np.flatnonzero(np.repeat(np.asarray(stance, dtype=bool), 3))
        active_cols.append(idx)
        var_slices.append(slice(n_vars, n_vars + idx.size))
        n_vars += idx.size

    rows, rhs = _foot_constraint_rows(constraints)
    n_cons = sum(idx.size // 3 for idx in active_cols) * 6
    C = np.zeros((n_cons, n_vars))
    d = np.zeros(n_cons)
    row = 0
    for k in range(len(sig)):
        base = var_slices[k].start
        for foot in range(active_cols[k].size // 3):
            cols = slice(base + 3 * foot, base + 3 * foot + 3)
            C[row : row + 6, cols] = rows
            d[row : row + 6] = rhs
            row += 6
    entry = (active_cols, var_slices, n_vars, C, d)
    if len(_layout_cache) > 256:
        _layout_cache.clear()
    _layout_cache[key] = entry
    return entry


def assemble_qp(
    problem: MpcProblem, linearizations: list[tuple], x0: np.ndarray
) -> CondensedQp:
    """Condense the linearized multistage problem into a dense QP.

    Cost: sum_k (x_k - r_k)' Q (x_k - r_k), k = 1..N, plus
    (u_k - u_ref_k)' R (u_k - u_ref_k), k = 0..N-1, over stance dims only.
    """
    N = problem.horizon
    if len(linearizations) != N:
        raise DimensionMismatch(
            f"{len(linearizations)} linearizations for horizon {N}"
        )
    x0 = np.asarray(x0, dtype=float).reshape(STATE_DIM)

    sig = tuple(tuple(problem.geometry[k].stance) for k in range(N))
    active_cols, var_slices, n_vars, C, d = _stage_layout(sig, problem.constraints)

    const = np.zeros((N + 1, STATE_DIM))
    const[0] = x0
    M = np.zeros((STATE_DIM, n_vars))
    S = np.empty((N * STATE_DIM, n_vars))
    for k in range(N):
        A, B, c = linearizations[k]
        const[k + 1] = A @ const[k] + c
        M = A @ M
        M[:, var_slices[k]] += B[:, active_cols[k]]
        S[k * STATE_DIM : (k + 1) * STATE_DIM] = M

    q_diag = np.tile(problem.weights.state_diag, N)
    refs = np.concatenate([problem.reference[k].as_vector() for k in range(1, N + 1)])
    err0 = const[1:].reshape(-1) - refs

    r_diag = np.concatenate(
        [problem.weights.input_diag[active_cols[k]] for k in range(N)]
    )
    u_ref_active = np.concatenate(
        [problem.u_ref[k][active_cols[k]] for k in range(N)]
    )

    SQ = S * q_diag[:, None]
    H = 2.0 * (S.T @ SQ + np.diag(r_diag))
    H = 0.5 * (H + H.T)
    g = 2.0 * (SQ.T @ err0) - 2.0 * r_diag * u_ref_active

    return CondensedQp(
        qp=DenseQp(H=H, g=g, C=C, d=d),
        active_cols=active_cols,
        var_slices=var_slices,
        const_states=const,
        S=S,
        layout_sig=sig,
    )


def _unpack(cqp: CondensedQp, problem: MpcProblem, u: np.ndarray):
    N = problem.horizon
    states = cqp.const_states.copy()
    states[1:] += (cqp.S @ u).reshape(N, STATE_DIM)
    inputs = np.zeros((N, INPUT_DIM))
    for k in range(N):
        inputs[k, cqp.active_cols[k]] = u[cqp.var_slices[k]]
    return states, inputs


def stage_cost(
    x_vec: np.ndarray,
    u_vec: np.ndarray,
    x_ref_vec: np.ndarray,
    u_ref_vec: np.ndarray,
    weights: CostWeights,
) -> float:
    """Quadratic tracking cost of one (state, input) pair."""
    dx = np.asarray(x_vec) - np.asarray(x_ref_vec)
    du = np.asarray(u_vec) - np.asarray(u_ref_vec)
    return float(dx @ (weights.state_diag * dx) + du @ (weights.input_diag * du))


def trajectory_cost(problem: MpcProblem, states: np.ndarray, inputs: np.ndarray) -> float:
    total = 0.0
    for k in range(problem.horizon):
        total += stage_cost(
            states[k + 1],
            inputs[k],
            problem.reference[k + 1].as_vector(),
            problem.u_ref[k],
            problem.weights,
        )
    return total


def pyramid_violation(u_vec: np.ndarray, stance, cs: InputConstraintSet) -> float:
    """Worst constraint violation of a 12-dim force command (swing included)."""
    forces = np.asarray(u_vec, dtype=float).reshape(NUM_LEGS, 3)
    worst = 0.0
    for i in range(NUM_LEGS):
        fx, fy, fz = forces[i]
        if stance[i]:
            worst = max(
                worst,
                abs(fx) - cs.mu * fz,
                abs(fy) - cs.mu * fz,
                fz - cs.f_z_max,
                cs.f_z_min - fz,
            )
        else:
            worst = max(worst, np.abs(forces[i]).max())
    return worst


def project_to_pyramid(u_vec: np.ndarray, stance, cs: InputConstraintSet) -> np.ndarray:
    """Clamp a force command into the pyramid; swing legs to exact zero."""
    forces = np.asarray(u_vec, dtype=float).reshape(NUM_LEGS, 3).copy()
    for i in range(NUM_LEGS):
        if not stance[i]:
            forces[i] = 0.0
            continue
        fz = np.clip(forces[i, 2], cs.f_z_min, cs.f_z_max)
        forces[i, 2] = fz
        forces[i, 0] = np.clip(forces[i, 0], -cs.mu * fz, cs.mu * fz)
        forces[i, 1] = np.clip(forces[i, 1], -cs.mu * fz, cs.mu * fz)
    return forces.reshape(INPUT_DIM)


@dataclass
class MpcWarmStart:
    states: np.ndarray  # (N+1, 12)
    inputs: np.ndarray  # (N, 12)
    active_set: list[int] = field(default_factory=list)
    layout_sig: tuple = ()
    t: float = 0.0


def control_step(
    x_t: BodyState,
    problem: MpcProblem,
    sqp_iters: int = 2,
    warm: MpcWarmStart | None = None,
    fallback_input: np.ndarray | None = None,
) -> tuple[FootForces, MpcSolution, MpcWarmStart]:
    """Linearize / assemble / solve rounds; returns the first input.

    Warm starts linearize about the previous solution; cold starts use the
    reference trajectory with the gravity-split input. On an infeasible QP
    the previous input (or the stage-0 reference input) is returned
    unchanged with the status flagged.
    """
    t_start = time.perf_counter()
    N = problem.horizon
    x0 = x_t.as_vector()

    if warm is not None and warm.states.shape == (N + 1, STATE_DIM):
        guess_states = warm.states.copy()
        guess_inputs = warm.inputs.copy()
        warm_active = list(warm.active_set)
        warm_sig = warm.layout_sig
    else:
        guess_states = np.stack([s.as_vector() for s in problem.reference])
        guess_inputs = problem.u_ref.copy()
        warm_active = []
        warm_sig = ()
    guess_states[0] = x0

    result: QpResult | None = None
    total_iters = 0
    cqp = None
    for _ in range(max(1, sqp_iters)):
        lins = linearize_horizon(
            guess_states[:N],
            guess_inputs,
            problem.geometry,
            problem.params,
            problem.residual_model,
            problem.dt,
            t0=problem.t0,
        )
        cqp = assemble_qp(problem, lins, x0)
        if cqp.layout_sig != warm_sig:
            warm_active = []
        result = solve_qp(cqp.qp, warm_active)
        total_iters += result.iterations
        if result.status == SolverStatus.INFEASIBLE:
            u_prev = fallback_input if fallback_input is not None else problem.u_ref[0]
            solution = MpcSolution(
                inputs=[FootForces.from_vector(u_prev)],
                predicted_states=[x_t],
                objective=float("nan"),
                solver_status=SolverStatus.INFEASIBLE,
                iterations=total_iters,
                solve_time=time.perf_counter() - t_start,
            )
            keep = warm if warm is not None else MpcWarmStart(
                guess_states, guess_inputs, [], cqp.layout_sig, problem.t0
            )
            return FootForces.from_vector(u_prev), solution, keep
        guess_states, guess_inputs = _unpack(cqp, problem, result.x)
        warm_active = result.active_set
        warm_sig = cqp.layout_sig

    u0 = guess_inputs[0]
    stance0 = problem.geometry[0].stance
    if pyramid_violation(u0, stance0, problem.constraints) > 1e-8:
        u0 = project_to_pyramid(u0, stance0, problem.constraints)
        guess_inputs[0] = u0

    solution = MpcSolution(
        inputs=[FootForces.from_vector(guess_inputs[k]) for k in range(N)],
        predicted_states=[BodyState.from_vector(guess_states[k]) for k in range(N + 1)],
        objective=trajectory_cost(problem, guess_states, guess_inputs),
        solver_status=result.status,
        iterations=total_iters,
        solve_time=time.perf_counter() - t_start,
    )
    new_warm = MpcWarmStart(
        states=guess_states,
        inputs=guess_inputs,
        active_set=list(result.active_set),
        layout_sig=cqp.layout_sig,
        t=problem.t0,
    )
    return FootForces.from_vector(u0), solution, new_warm


class MpcController:
    """Stateful wrapper owning the warm start and the residual model slot.

    The controller variants (nominal, constant-estimate, learned,
    clairvoyant) differ only in the model object installed here; the solve
    path is shared.
    """

    def __init__(
        self,
        params: BodyParams,
        weights: CostWeights,
        constraints: InputConstraintSet,
        horizon: int,
        dt: float,
        residual_model: ResidualModel | None = None,
        sqp_iters: int = 2,
    ):
        self.params = params
        self.weights = weights
        self.constraints = constraints
        self.horizon = horizon
        self.dt = dt
        self.model = residual_model if residual_model is not None else ResidualModel.zero()
        self.sqp_iters = sqp_iters
        self._warm: MpcWarmStart | None = None
        self._last_u: np.ndarray | None = None

    def reset(self):
        self._warm = None
        self._last_u = None

    def _shifted_warm(self, t: float) -> MpcWarmStart | None:
        if self._warm is None:
            return None
        shift = int(round((t - self._warm.t) / self.dt))
        if shift <= 0:
            return self._warm
        w = self._warm
        N = self.horizon
        if shift >= N:
            return None
        states = np.vstack([w.states[shift:], np.tile(w.states[-1], (shift, 1))])
        inputs = np.vstack([w.inputs[shift:], np.tile(w.inputs[-1], (shift, 1))])
        return MpcWarmStart(states, inputs, [], (), t)

    def step(
        self,
        x_t: BodyState,
        reference: list[BodyState],
        geometry: list[StanceGeometry],
        t: float = 0.0,
    ) -> tuple[FootForces, MpcSolution]:
        problem = MpcProblem(
            horizon=self.horizon,
            dt=self.dt,
            reference=reference,
            weights=self.weights,
            constraints=self.constraints,
            residual_model=self.model,
            geometry=geometry,
            params=self.params,
            t0=t,
        )
        u, solution, warm = control_step(
            x_t,
            problem,
            sqp_iters=self.sqp_iters,
            warm=self._shifted_warm(t),
            fallback_input=self._last_u,
        )
        warm.t = t
        self._warm = warm
        self._last_u = u.as_vector()
        return u, solution
