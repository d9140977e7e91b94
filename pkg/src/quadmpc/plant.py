"""Ground-truth plant: integrates the disturbed dynamics under a scenario.

The controller never sees scenario internals; it reads measured states
only. Disturbances are realized three ways, matching their physics:

- external forces (constant or time-varying) enter as a wrench;
- payloads augment the plant's true mass and inertia, so the controller
  faces the full state-dependent mismatch;
- friction limits clip the applied stance forces to the true cone in the
  surface frame (slip), with events counted.

Each controller period is integrated with n_sub forward-Euler sub-steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalBlowup
from .rigid_body import (
    NUM_LEGS,
    BodyParams,
    BodyState,
    FootForces,
    ResidualWrench,
    StanceGeometry,
    continuous_dynamics,
    rotation_matrix,
)

GRAVITY_ACCEL = 9.81
BLOWUP_NORM = 1e6


# ---------------------------------------------------------------------------
# Disturbance scenarios
# ---------------------------------------------------------------------------


class DisturbanceScenario:
    """Base scenario: no disturbance, nominal parameters, default friction."""

    kind = "none"

    def wrench(self, x: BodyState, u: FootForces, t: float, params: BodyParams) -> np.ndarray:
        return np.zeros(6)

    def wrench_batch(self, X: np.ndarray, U: np.ndarray, ts, params: BodyParams) -> np.ndarray:
        """Vectorized wrench over rows of X (B,12), U (B,12); ts scalar or (B,)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = np.atleast_2d(np.asarray(U, dtype=float))
        ts = np.broadcast_to(np.asarray(ts, dtype=float), (X.shape[0],))
        return np.stack(
            [
                self.wrench(
                    BodyState.from_vector(X[i]),
                    FootForces.from_vector(U[i]),
                    float(ts[i]),
                    params,
                )
                for i in range(X.shape[0])
            ]
        )

    def mass_offset(self) -> float:
        return 0.0

    def inertia_offset(self) -> np.ndarray:
        return np.zeros((3, 3))

    def friction(self, t: float, default: float) -> float:
        return default


@dataclass
class ConstantForce(DisturbanceScenario):
    """Fixed external force (N, inertial frame) applied at the center of mass.

    `from_kg_equivalent(k)` builds the force k * 9.81 N along the gravity
    direction; `from_g_units(vec)` scales a vector given in multiples of
    ||g||. With scale_by_mass the force is additionally multiplied by the
    body mass (alternative reading of "k times gravity"; off by default).
    """

    force_n: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale_by_mass: bool = False
    kind = "constant_force"

    def __post_init__(self):
        self.force_n = np.asarray(self.force_n, dtype=float).reshape(3)

    @staticmethod
    def from_kg_equivalent(k: float, scale_by_mass: bool = False) -> "ConstantForce":
        return ConstantForce(
            np.array([0.0, 0.0, -GRAVITY_ACCEL * k]), scale_by_mass=scale_by_mass
        )

    @staticmethod
    def from_g_units(vec, scale_by_mass: bool = False) -> "ConstantForce":
        vec = np.asarray(vec, dtype=float).reshape(3)
        return ConstantForce(GRAVITY_ACCEL * vec, scale_by_mass=scale_by_mass)

    def wrench(self, x, u, t, params) -> np.ndarray:
        force = self.force_n * (params.mass if self.scale_by_mass else 1.0)
        return np.concatenate([force, np.zeros(3)])

    def wrench_batch(self, X, U, ts, params) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.zeros((X.shape[0], 6))
        out[:, 0:3] = self.force_n * (params.mass if self.scale_by_mass else 1.0)
        return out


@dataclass
class TimeVaryingForce(DisturbanceScenario):
    """Piecewise-constant force timeline: force_n[i] applies from times_s[i]."""

    times_s: np.ndarray
    forces_n: np.ndarray  # (K, 3)
    kind = "time_varying_force"

    def __post_init__(self):
        self.times_s = np.asarray(self.times_s, dtype=float).reshape(-1)
        self.forces_n = np.asarray(self.forces_n, dtype=float).reshape(-1, 3)
        if self.times_s.size != self.forces_n.shape[0]:
            raise ValueError("times_s and forces_n must have equal length")
        if np.any(np.diff(self.times_s) <= 0):
            raise ValueError("times_s must be strictly increasing")

    def wrench(self, x, u, t, params) -> np.ndarray:
        idx = int(np.searchsorted(self.times_s, t, side="right")) - 1
        force = self.forces_n[idx] if idx >= 0 else np.zeros(3)
        return np.concatenate([force, np.zeros(3)])

    def wrench_batch(self, X, U, ts, params) -> np.ndarray:
        X = np.atleast_2d(X)
        ts = np.broadcast_to(np.asarray(ts, dtype=float), (X.shape[0],))
        idx = np.searchsorted(self.times_s, ts, side="right") - 1
        out = np.zeros((X.shape[0], 6))
        valid = idx >= 0
        out[valid, 0:3] = self.forces_n[idx[valid]]
        return out


@dataclass
class Payload(DisturbanceScenario):
    """Rigidly attached payload: extra mass and diagonal inertia offset.

    The plant integrates with the augmented parameters (exact). The
    equivalent wrench reported here is the approximation
    force = m_p g - m_p vdot, torque = -omega x (dJ omega), with the
    dJ * omega_dot term dropped.
    """

    mass_kg: float
    inertia_kgm2: np.ndarray = field(default_factory=lambda: np.zeros(3))
    kind = "payload"

    def __post_init__(self):
        if self.mass_kg < 0:
            raise ValueError("payload mass must be >= 0")
        self.inertia_kgm2 = np.asarray(self.inertia_kgm2, dtype=float).reshape(3)

    def mass_offset(self) -> float:
        return self.mass_kg

    def inertia_offset(self) -> np.ndarray:
        return np.diag(self.inertia_kgm2)

    def wrench(self, x, u, t, params) -> np.ndarray:
        total_mass = params.mass + self.mass_kg
        f_sum = rotation_matrix(x.theta) @ u.forces.sum(axis=0)
        vdot = params.gravity + f_sum / total_mass
        force = self.mass_kg * params.gravity - self.mass_kg * vdot
        dJ = self.inertia_offset()
        torque = -np.cross(x.omega, dJ @ x.omega)
        return np.concatenate([force, torque])

    def wrench_batch(self, X, U, ts, params) -> np.ndarray:
        from .rigid_body import cross_rows, rotation_matrices

        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = np.atleast_2d(np.asarray(U, dtype=float))
        total_mass = params.mass + self.mass_kg
        R = rotation_matrices(X[:, 3:6])
        f_sum = U.reshape(-1, 4, 3).sum(axis=1)
        vdot = params.gravity + np.einsum("bij,bj->bi", R, f_sum) / total_mass
        out = np.zeros((X.shape[0], 6))
        out[:, 0:3] = self.mass_kg * params.gravity - self.mass_kg * vdot
        omega = X[:, 9:12]
        dJ = np.diag(self.inertia_kgm2)
        out[:, 3:6] = -cross_rows(omega, omega @ dJ.T)
        return out


@dataclass
class FrictionSchedule(DisturbanceScenario):
    """Piecewise-constant sliding-friction timeline for the plant's cone."""

    times_s: np.ndarray
    mus: np.ndarray
    kind = "friction_schedule"

    def __post_init__(self):
        self.times_s = np.asarray(self.times_s, dtype=float).reshape(-1)
        self.mus = np.asarray(self.mus, dtype=float).reshape(-1)
        if self.times_s.size != self.mus.size:
            raise ValueError("times_s and mus must have equal length")
        if np.any(self.mus <= 0):
            raise ValueError("friction coefficients must be > 0")

    def friction(self, t: float, default: float) -> float:
        idx = int(np.searchsorted(self.times_s, t, side="right")) - 1
        return float(self.mus[idx]) if idx >= 0 else default


@dataclass
class Composite(DisturbanceScenario):
    parts: list[DisturbanceScenario]
    kind = "composite"

    def wrench(self, x, u, t, params) -> np.ndarray:
        return sum((p.wrench(x, u, t, params) for p in self.parts), np.zeros(6))

    def wrench_batch(self, X, U, ts, params) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.zeros((X.shape[0], 6))
        for p in self.parts:
            out = out + p.wrench_batch(X, U, ts, params)
        return out

    def mass_offset(self) -> float:
        return sum(p.mass_offset() for p in self.parts)

    def inertia_offset(self) -> np.ndarray:
        return sum((p.inertia_offset() for p in self.parts), np.zeros((3, 3)))

    def friction(self, t: float, default: float) -> float:
        mu = default
        for p in self.parts:
            mu = p.friction(t, mu)
        return mu


def realized_disturbance(
    scenario: DisturbanceScenario,
    x: BodyState,
    u: FootForces,
    t: float,
    params: BodyParams,
) -> ResidualWrench:
    """Equivalent disturbance wrench of the scenario at (x, u, t).

    `params` is the nominal (unaugmented) body. Used by the clairvoyant
    controller and for logging; the plant itself integrates payloads via
    parameter augmentation.
    """
    return ResidualWrench.from_vector(scenario.wrench(x, u, t, params))


class TrueWrenchModel:
    """Residual model that evaluates the scenario's true wrench.

    Drop-in for the learned model in the controller; this is the
    clairvoyant configuration.
    """

    def __init__(self, scenario: DisturbanceScenario, params: BodyParams):
        self.scenario = scenario
        self.params = params

    def wrench6(self, x_vec, u_vec, geom, t: float) -> np.ndarray:
        return self.scenario.wrench(
            BodyState.from_vector(x_vec),
            FootForces.from_vector(u_vec),
            t,
            self.params,
        )

    def wrench6_batch(self, X, U, geom, t: float) -> np.ndarray:
        return self.scenario.wrench_batch(X, U, t, self.params)

    def wrench_rows(self, X, U, feet, ts) -> np.ndarray:
        return self.scenario.wrench_batch(X, U, ts, self.params)


# ---------------------------------------------------------------------------
# Plant integration
# ---------------------------------------------------------------------------


@dataclass
class PlantState:
    body: BodyState
    params: BodyParams  # payload-augmented true parameters
    friction: float
    t: float


@dataclass
class StepEvents:
    slips: int = 0
    clips: int = 0


def augment_params(base: BodyParams, scenario: DisturbanceScenario) -> BodyParams:
    if scenario.mass_offset() == 0.0 and not np.any(scenario.inertia_offset()):
        return base
    return BodyParams(
        mass=base.mass + scenario.mass_offset(),
        inertia=base.inertia + scenario.inertia_offset(),
        gravity=base.gravity,
    )


def _clip_to_cone(
    forces_body: np.ndarray,
    stance: np.ndarray,
    R: np.ndarray,
    normals: np.ndarray,
    mu: float,
    events: StepEvents,
) -> np.ndarray:
    """Clip commanded forces to the true friction cone in the surface frame."""
    out = forces_body.copy()
    for i in range(NUM_LEGS):
        if not stance[i]:
            if np.any(out[i]):
                out[i] = 0.0
            continue
        f_world = R @ forces_body[i]
        n = normals[i]
        fn = float(f_world @ n)
        if fn <= 0.0:
            if np.any(forces_body[i]):
                events.clips += 1
                out[i] = 0.0
            continue
        ft_vec = f_world - fn * n
        ft = float(np.linalg.norm(ft_vec))
        if ft > mu * fn:
            events.slips += 1
            f_world = fn * n + ft_vec * (mu * fn / ft)
            out[i] = R.T @ f_world
    return out


def plant_step(
    state: PlantState,
    u: FootForces,
    geom: StanceGeometry,
    scenario: DisturbanceScenario,
    dt_s: float,
    n_sub: int = 6,
    base_params: BodyParams | None = None,
    terrain=None,
    default_mu: float = 0.7,
    blowup_norm: float = BLOWUP_NORM,
) -> tuple[PlantState, StepEvents]:
    """Advance the true state by one controller period of dt_s seconds.

    Integrates n_sub forward-Euler sub-steps with the scenario's external
    wrench and the friction-clipped forces. Raises NumericalBlowup when the
    state norm exceeds blowup_norm.
    """
    if n_sub < 1:
        raise ValueError("n_sub must be >= 1")
    base = base_params if base_params is not None else state.params
    dt_sub = dt_s / n_sub
    events = StepEvents()
    body = state.body
    mu = scenario.friction(state.t, default_mu)

    for k in range(n_sub):
        t_sub = state.t + k * dt_sub
        mu = scenario.friction(t_sub, default_mu)
        R = rotation_matrix(body.theta)
        if terrain is not None:
            feet_world = body.p + geom.foot_positions_body @ R.T
            normals = np.stack(
                [terrain.normal(fw[0], fw[1]) for fw in feet_world]
            )
        else:
            normals = np.tile(np.array([0.0, 0.0, 1.0]), (NUM_LEGS, 1))
        applied = _clip_to_cone(u.forces, geom.stance, R, normals, mu, events)
        # External wrench only; payload effects live in the augmented params.
        wrench = np.zeros(6)
        for part in scenario.parts if isinstance(scenario, Composite) else [scenario]:
            if part.kind != "payload":
                wrench += part.wrench(body, u, t_sub, base)
        xdot = continuous_dynamics(
            body,
            FootForces(applied),
            geom,
            state.params,
            ResidualWrench.from_vector(wrench),
        )
        vec = body.as_vector() + dt_sub * xdot
        if not np.all(np.isfinite(vec)) or np.linalg.norm(vec) > blowup_norm:
            raise NumericalBlowup(
                f"state norm {np.linalg.norm(vec):.3e} at t={t_sub:.3f}"
            )
        body = BodyState.from_vector(vec)

    return (
        PlantState(body=body, params=state.params, friction=mu, t=state.t + dt_s),
        events,
    )


class Plant:
    """Stateful wrapper: one plant per run, owns measurement noise."""

    def __init__(
        self,
        base_params: BodyParams,
        scenario: DisturbanceScenario,
        x0: BodyState,
        terrain=None,
        default_mu: float = 0.7,
        n_sub: int = 6,
        noise_level: float = 0.0,
        noise_seed: int = 0,
        blowup_norm: float = BLOWUP_NORM,
    ):
        self.base_params = base_params
        self.scenario = scenario
        self.terrain = terrain
        self.default_mu = default_mu
        self.n_sub = n_sub
        self.noise_level = noise_level
        self.blowup_norm = blowup_norm
        self._rng = np.random.default_rng(noise_seed)
        self.state = PlantState(
            body=x0,
            params=augment_params(base_params, scenario),
            friction=scenario.friction(0.0, default_mu),
            t=0.0,
        )

    def measure(self) -> BodyState:
        """Measured body state; optional zero-mean uniform noise."""
        if self.noise_level == 0.0:
            return self.state.body
        noise = self._rng.uniform(-self.noise_level, self.noise_level, 12)
        return BodyState.from_vector(self.state.body.as_vector() + noise)

    def step(self, u: FootForces, geom: StanceGeometry, dt_s: float) -> StepEvents:
        self.state, events = plant_step(
            self.state,
            u,
            geom,
            self.scenario,
            dt_s,
            n_sub=self.n_sub,
            base_params=self.base_params,
            terrain=self.terrain,
            default_mu=self.default_mu,
            blowup_norm=self.blowup_norm,
        )
        return events
