"""Single-rigid-body dynamics of a quadruped on point feet.

Conventions (fixed repo-wide):
- State x = [p, theta, v, omega]: position p and linear velocity v in the
  inertial frame, Euler angles theta = [roll, pitch, yaw] (ZYX convention,
  R = Rz(yaw) @ Ry(pitch) @ Rx(roll) maps body to inertial), body-frame
  angular rate omega.
- Foot forces f_i are expressed in the body frame and enter the linear
  equation rotated by R; foot lever arms r_i are body-frame, so contact
  torques r_i x f_i live in the body frame.
- The residual wrench h = [f_u, tau_u] has its force part in the inertial
  frame and its torque part in the body frame.

All functions are pure and operate on value types; no shared mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GimbalLock

NUM_LEGS = 4
STATE_DIM = 12
INPUT_DIM = 12
WRENCH_DIM = 6

GIMBAL_MARGIN = 1e-3


def _as_vec3(x) -> np.ndarray:
    a = np.asarray(x, dtype=float).reshape(3)
    return a


@dataclass(frozen=True)
class BodyState:
    """12-dimensional rigid-body state [p, theta, v, omega]."""

    p: np.ndarray
    theta: np.ndarray
    v: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        for name in ("p", "theta", "v", "omega"):
            object.__setattr__(self, name, _as_vec3(getattr(self, name)))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.theta, self.v, self.omega])

    @staticmethod
    def from_vector(x) -> "BodyState":
        x = np.asarray(x, dtype=float).reshape(STATE_DIM)
        return BodyState(x[0:3], x[3:6], x[6:9], x[9:12])

    @staticmethod
    def zero() -> "BodyState":
        return BodyState(np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3))


@dataclass(frozen=True)
class BodyParams:
    """Mass, body-frame inertia and gravity of the rigid body."""

    mass: float
    inertia: np.ndarray
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))

    def __post_init__(self):
        inertia = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        gravity = _as_vec3(self.gravity)
        if not self.mass > 0.0:
            raise ValueError(f"mass must be > 0, got {self.mass}")
        if not np.allclose(inertia, inertia.T, atol=1e-9):
            raise ValueError("inertia must be symmetric")
        eigvals = np.linalg.eigvalsh(inertia)
        if np.min(eigvals) <= 1e-9:
            raise ValueError("inertia must be positive definite")
        object.__setattr__(self, "inertia", inertia)
        object.__setattr__(self, "gravity", gravity)
        object.__setattr__(self, "inertia_inv", np.linalg.inv(inertia))

    inertia_inv: np.ndarray = field(init=False, repr=False, default=None)


@dataclass(frozen=True)
class StanceGeometry:
    """Body-frame foot positions and the per-leg stance mask."""

    foot_positions_body: np.ndarray  # (4, 3)
    stance: np.ndarray = field(default_factory=lambda: np.ones(NUM_LEGS, dtype=bool))

    def __post_init__(self):
        pos = np.asarray(self.foot_positions_body, dtype=float).reshape(NUM_LEGS, 3)
        stance = np.asarray(self.stance, dtype=bool).reshape(NUM_LEGS)
        object.__setattr__(self, "foot_positions_body", pos)
        object.__setattr__(self, "stance", stance)


@dataclass(frozen=True)
class FootForces:
    """Per-leg ground-reaction force command, body frame, Newtons."""

    forces: np.ndarray  # (4, 3)

    def __post_init__(self):
        object.__setattr__(
            self, "forces", np.asarray(self.forces, dtype=float).reshape(NUM_LEGS, 3)
        )

    def as_vector(self) -> np.ndarray:
        return self.forces.reshape(INPUT_DIM).copy()

    @staticmethod
    def from_vector(u) -> "FootForces":
        return FootForces(np.asarray(u, dtype=float).reshape(NUM_LEGS, 3))

    @staticmethod
    def zero() -> "FootForces":
        return FootForces(np.zeros((NUM_LEGS, 3)))


@dataclass(frozen=True)
class ResidualWrench:
    """Disturbance wrench: inertial-frame force, body-frame torque."""

    force: np.ndarray
    torque: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "force", _as_vec3(self.force))
        object.__setattr__(self, "torque", _as_vec3(self.torque))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])

    @staticmethod
    def from_vector(w) -> "ResidualWrench":
        w = np.asarray(w, dtype=float).reshape(WRENCH_DIM)
        return ResidualWrench(w[0:3], w[3:6])

    @staticmethod
    def zero() -> "ResidualWrench":
        return ResidualWrench(np.zeros(3), np.zeros(3))


def skew(a) -> np.ndarray:
    """Cross-product matrix: skew(a) @ b == a x b."""
    a = _as_vec3(a)
    return np.array(
        [
            [0.0, -a[2], a[1]],
            [a[2], 0.0, -a[0]],
            [-a[1], a[0], 0.0],
        ]
    )


def cross_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cross product over (..., 3) arrays.

    Same result as np.cross, without its axis-juggling overhead; this sits
    on hot paths (batched torque sums in the linearizer and plant).
    """
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def skew_rows(a: np.ndarray) -> np.ndarray:
    """Batched skew matrices, (B, 3) -> (B, 3, 3)."""
    a = np.asarray(a, dtype=float)
    out = np.zeros(a.shape[:-1] + (3, 3))
    out[..., 0, 1] = -a[..., 2]
    out[..., 0, 2] = a[..., 1]
    out[..., 1, 0] = a[..., 2]
    out[..., 1, 2] = -a[..., 0]
    out[..., 2, 0] = -a[..., 1]
    out[..., 2, 1] = a[..., 0]
    return out


def rotation_matrix(theta) -> np.ndarray:
    """Body-to-inertial rotation for ZYX Euler angles [roll, pitch, yaw]."""
    roll, pitch, yaw = np.asarray(theta, dtype=float).reshape(3)
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def rotation_matrices(thetas: np.ndarray) -> np.ndarray:
    """Vectorized rotation_matrix over a batch of Euler angles, (B,3) -> (B,3,3)."""
    thetas = np.asarray(thetas, dtype=float).reshape(-1, 3)
    cr, sr = np.cos(thetas[:, 0]), np.sin(thetas[:, 0])
    cp, sp = np.cos(thetas[:, 1]), np.sin(thetas[:, 1])
    cy, sy = np.cos(thetas[:, 2]), np.sin(thetas[:, 2])
    R = np.empty((thetas.shape[0], 3, 3))
    R[:, 0, 0] = cy * cp
    R[:, 0, 1] = cy * sp * sr - sy * cr
    R[:, 0, 2] = cy * sp * cr + sy * sr
    R[:, 1, 0] = sy * cp
    R[:, 1, 1] = sy * sp * sr + cy * cr
    R[:, 1, 2] = sy * sp * cr - cy * sr
    R[:, 2, 0] = -sp
    R[:, 2, 1] = cp * sr
    R[:, 2, 2] = cp * cr
    return R


def euler_rate_matrix(theta) -> np.ndarray:
    """Matrix T with theta_dot = T(theta) @ omega (omega body-frame, ZYX).

    Raises GimbalLock when pitch is within 1e-3 rad of +-pi/2, where the
    map is singular.
    """
    roll, pitch, _ = np.asarray(theta, dtype=float).reshape(3)
    if abs(pitch) >= np.pi / 2 - GIMBAL_MARGIN:
        raise GimbalLock(f"pitch {pitch:.6f} rad too close to +-pi/2")
    cr, sr = np.cos(roll), np.sin(roll)
    cp, tp = np.cos(pitch), np.tan(pitch)
    return np.array(
        [
            [1.0, sr * tp, cr * tp],
            [0.0, cr, -sr],
            [0.0, sr / cp, cr / cp],
        ]
    )


def contact_wrench_map(x: BodyState, geom: StanceGeometry) -> np.ndarray:
    """6x12 map from stacked foot forces to the net contact wrench.

    Rows 0:3 give the inertial-frame force sum R @ sum(f_i); rows 3:6 give
    the body-frame torque sum r_i x f_i. Columns follow the leg ordering of
    FootForces. Swing-leg columns are not zeroed here; callers that need a
    stance-only map mask the columns themselves.
    """
    R = rotation_matrix(x.theta)
    G = np.zeros((WRENCH_DIM, INPUT_DIM))
    for i in range(NUM_LEGS):
        cols = slice(3 * i, 3 * i + 3)
        G[0:3, cols] = R
        G[3:6, cols] = skew(geom.foot_positions_body[i])
    return G


def continuous_dynamics(
    x: BodyState,
    u: FootForces,
    geom: StanceGeometry,
    params: BodyParams,
    h: ResidualWrench,
) -> np.ndarray:
    """Time derivative of the 12-state under forces u and residual wrench h.

    Returns [v, T(theta) omega, g + (R sum f_i + f_u)/m,
    Jinv (-omega x J omega + sum r_i x f_i + tau_u)].
    """
    R = rotation_matrix(x.theta)
    T = euler_rate_matrix(x.theta)

    force_body = u.forces.sum(axis=0)
    torque_body = cross_rows(geom.foot_positions_body, u.forces).sum(axis=0)

    v_dot = params.gravity + (R @ force_body + h.force) / params.mass
    J_omega = params.inertia @ x.omega
    omega_dot = params.inertia_inv @ (
        -cross_rows(x.omega, J_omega) + torque_body + h.torque
    )
    return np.concatenate([x.v, T @ x.omega, v_dot, omega_dot])


def discrete_step(
    x: BodyState,
    u: FootForces,
    geom: StanceGeometry,
    params: BodyParams,
    h: ResidualWrench,
    dt: float,
) -> BodyState:
    """One forward-Euler step x + dt * xdot.

    Exactly one step, no sub-stepping: the residual extractor relies on
    inverting this map in closed form.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    xdot = continuous_dynamics(x, u, geom, params, h)
    return BodyState.from_vector(x.as_vector() + dt * xdot)
