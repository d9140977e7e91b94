"""Contact scheduling, reference trajectories, terrain and foothold planning.

The reference body height is measured along the body-normal direction, so
the vertical clearance over a slope of angle s is height * cos(s); on flat
ground the two conventions coincide. Feet are massless force points: swing
legs have no trajectory, they re-appear at the planned foothold when their
stance phase begins.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import UnreachableFoothold
from .rigid_body import NUM_LEGS, BodyState, StanceGeometry, rotation_matrix

# Leg order used throughout: front-left, front-right, rear-left, rear-right.
DEFAULT_HIP_OFFSETS = np.array(
    [
        [0.19, 0.13, 0.0],
        [0.19, -0.13, 0.0],
        [-0.19, 0.13, 0.0],
        [-0.19, -0.13, 0.0],
    ]
)


# ---------------------------------------------------------------------------
# Terrain
# ---------------------------------------------------------------------------


class FlatTerrain:
    def height(self, x: float, y: float) -> float:
        return 0.0

    def grade(self, x: float, y: float) -> np.ndarray:
        return np.zeros(2)

    def normal(self, x: float, y: float) -> np.ndarray:
        return np.array([0.0, 0.0, 1.0])


class SlopeTerrain:
    """Plane rising along +x with the given inclination angle (rad)."""

    def __init__(self, angle: float):
        self.angle = float(angle)
        self._slope = np.tan(self.angle)

    def height(self, x: float, y: float) -> float:
        return self._slope * x

    def grade(self, x: float, y: float) -> np.ndarray:
        return np.array([self._slope, 0.0])

    def normal(self, x: float, y: float) -> np.ndarray:
        n = np.array([-self._slope, 0.0, 1.0])
        return n / np.linalg.norm(n)


class RoughTerrain:
    """Grid of flat cells with deterministic pseudo-random heights."""

    def __init__(self, cell_size: float = 0.35, variation: float = 0.25, seed: int = 0):
        self.cell_size = float(cell_size)
        self.variation = float(variation)
        self.seed = int(seed)
        self._cache: dict[tuple[int, int], float] = {}

    def _cell_height(self, ix: int, iy: int) -> float:
        key = (ix, iy)
        if key not in self._cache:
            rng = np.random.default_rng((self.seed, ix + 2**31, iy + 2**31))
            self._cache[key] = float(rng.uniform(0.0, self.variation))
        return self._cache[key]

    def height(self, x: float, y: float) -> float:
        return self._cell_height(
            int(np.floor(x / self.cell_size)), int(np.floor(y / self.cell_size))
        )

    def grade(self, x: float, y: float) -> np.ndarray:
        return np.zeros(2)  # flat within a cell; steps at boundaries

    def normal(self, x: float, y: float) -> np.ndarray:
        return np.array([0.0, 0.0, 1.0])


def make_terrain(kind: str, **kwargs):
    if kind == "flat":
        return FlatTerrain()
    if kind == "slope":
        return SlopeTerrain(kwargs.get("angle", np.deg2rad(20.0)))
    if kind == "rough":
        return RoughTerrain(
            cell_size=kwargs.get("cell_size", 0.35),
            variation=kwargs.get("variation", 0.25),
            seed=kwargs.get("seed", 0),
        )
    raise ValueError(f"unknown terrain kind {kind!r}")


# ---------------------------------------------------------------------------
# Contact schedule
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContactSchedule:
    """Periodic stance/swing assignment per leg.

    A leg is in stance while its wrapped phase (t / period - offset) mod 1
    is below the duty factor. The default trot alternates diagonal pairs
    and keeps exactly two legs on the ground at all times.
    """

    gait_period: float = 0.3
    duty_factor: float = 0.5
    phase_offsets: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.5, 0.5, 0.0])
    )

    def __post_init__(self):
        if not self.gait_period > 0:
            raise ValueError("gait_period must be > 0")
        if not 0.0 < self.duty_factor <= 1.0:
            raise ValueError("duty_factor must be in (0, 1]")
        object.__setattr__(
            self,
            "phase_offsets",
            np.asarray(self.phase_offsets, dtype=float).reshape(NUM_LEGS),
        )

    def query(self, t: float, leg: int) -> bool:
        phase = (t / self.gait_period - self.phase_offsets[leg]) % 1.0
        return bool(phase < self.duty_factor)

    def stance_mask(self, t: float) -> np.ndarray:
        phases = (t / self.gait_period - self.phase_offsets) % 1.0
        return phases < self.duty_factor

    @property
    def stance_duration(self) -> float:
        return self.duty_factor * self.gait_period

    @staticmethod
    def standing() -> "ContactSchedule":
        return ContactSchedule(duty_factor=1.0, phase_offsets=np.zeros(NUM_LEGS))


# ---------------------------------------------------------------------------
# Reference trajectory
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferencePlan:
    """Velocity-tracking task: planar speed command, body height, yaw rate."""

    velocity_xy: np.ndarray = field(default_factory=lambda: np.array([0.75, 0.0]))
    height: float = 0.3
    yaw_rate: float = 0.0
    yaw0: float = 0.0
    start_xy: np.ndarray = field(default_factory=lambda: np.zeros(2))
    terrain: object = field(default_factory=FlatTerrain)

    def __post_init__(self):
        object.__setattr__(
            self, "velocity_xy", np.asarray(self.velocity_xy, dtype=float).reshape(2)
        )
        object.__setattr__(
            self, "start_xy", np.asarray(self.start_xy, dtype=float).reshape(2)
        )


def _planar_position(plan: ReferencePlan, t: float) -> tuple[np.ndarray, float]:
    """Integrated planar position and heading at time t."""
    yaw = plan.yaw0 + plan.yaw_rate * t
    vx, vy = plan.velocity_xy
    if abs(plan.yaw_rate) < 1e-12:
        c, s = np.cos(plan.yaw0), np.sin(plan.yaw0)
        xy = plan.start_xy + t * np.array([c * vx - s * vy, s * vx + c * vy])
    else:
        w = plan.yaw_rate
        s0, c0 = np.sin(plan.yaw0), np.cos(plan.yaw0)
        s1, c1 = np.sin(yaw), np.cos(yaw)
        xy = plan.start_xy + np.array(
            [(s1 - s0) * vx + (c1 - c0) * vy, (c0 - c1) * vx + (s1 - s0) * vy]
        ) / w
    return xy, yaw


def reference_at(plan: ReferencePlan, t: float) -> BodyState:
    """Reference body state at time t >= 0.

    Position integrates the commanded velocity along the terrain; pitch
    aligns with the terrain grade along the heading; yaw follows the yaw
    command; the angular-rate reference is zero.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    xy, yaw = _planar_position(plan, t)
    heading = np.array([np.cos(yaw), np.sin(yaw)])
    grade = plan.terrain.grade(xy[0], xy[1])
    directional = float(grade @ heading)
    pitch = -np.arctan(directional)
    z = plan.terrain.height(xy[0], xy[1]) + plan.height * np.cos(pitch)

    c, s = np.cos(yaw), np.sin(yaw)
    v_xy = np.array(
        [
            c * plan.velocity_xy[0] - s * plan.velocity_xy[1],
            s * plan.velocity_xy[0] + c * plan.velocity_xy[1],
        ]
    )
    speed_along = float(v_xy @ heading)
    v = np.array([v_xy[0], v_xy[1], speed_along * directional])
    return BodyState(
        p=np.array([xy[0], xy[1], z]),
        theta=np.array([0.0, pitch, yaw]),
        v=v,
        omega=np.zeros(3),
    )


def reference_window(plan: ReferencePlan, t0: float, n: int, dt: float) -> list[BodyState]:
    return [reference_at(plan, t0 + k * dt) for k in range(n + 1)]


# ---------------------------------------------------------------------------
# Foothold planning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LegLayout:
    hip_offsets: np.ndarray = field(default_factory=lambda: DEFAULT_HIP_OFFSETS.copy())
    reach_radius: float = 0.45

    def __post_init__(self):
        object.__setattr__(
            self,
            "hip_offsets",
            np.asarray(self.hip_offsets, dtype=float).reshape(NUM_LEGS, 3),
        )


def foothold_for(
    leg: int,
    schedule: ContactSchedule,
    x: BodyState,
    plan: ReferencePlan,
    terrain,
    layout: LegLayout,
) -> np.ndarray:
    """Touchdown position for a leg entering stance (inertial frame).

    Projects the hip to the ground and shifts it forward by half the stance
    duration times the body velocity; z snaps to the terrain surface.
    Footholds beyond the leg reach are clamped toward the hip and flagged
    with an UnreachableFoothold warning.
    """
    R = rotation_matrix(x.theta)
    hip = x.p + R @ layout.hip_offsets[leg]
    shift = x.v[:2] * (schedule.stance_duration / 2.0)
    xy = hip[:2] + shift
    foothold = np.array([xy[0], xy[1], terrain.height(xy[0], xy[1])])

    reach = np.linalg.norm(foothold - x.p)
    if reach > layout.reach_radius:
        warnings.warn(
            f"leg {leg} foothold {reach:.3f} m exceeds reach "
            f"{layout.reach_radius:.3f} m; clamped",
            UnreachableFoothold,
        )
        # Clamp the planar offset so the point stays on the terrain surface
        # and (on locally flat ground) exactly on the reach sphere.
        dz = foothold[2] - x.p[2]
        planar_max = np.sqrt(max(layout.reach_radius**2 - dz**2, 0.0))
        offset = foothold[:2] - x.p[:2]
        dist = np.linalg.norm(offset)
        if dist > planar_max and dist > 0:
            foothold[:2] = x.p[:2] + offset * (planar_max / dist)
        foothold[2] = terrain.height(foothold[0], foothold[1])
    return foothold


def initial_footholds(
    x: BodyState, plan: ReferencePlan, terrain, layout: LegLayout
) -> np.ndarray:
    """Feet directly under the hips on the terrain surface, (4, 3)."""
    R = rotation_matrix(x.theta)
    out = np.zeros((NUM_LEGS, 3))
    for leg in range(NUM_LEGS):
        hip = x.p + R @ layout.hip_offsets[leg]
        out[leg] = [hip[0], hip[1], terrain.height(hip[0], hip[1])]
    return out


def stance_geometry_over_horizon(
    schedule: ContactSchedule,
    footholds: np.ndarray,
    reference: list[BodyState],
    n: int,
    dt: float,
    t0: float,
    plan: ReferencePlan,
    terrain,
    layout: LegLayout,
) -> list[StanceGeometry]:
    """Per-stage stance geometry for the controller horizon.

    `footholds` are the current planted positions (inertial). Legs that
    touch down inside the horizon get footholds planned from the reference
    state at their touchdown time. Body-frame lever arms use the reference
    poses; swing legs keep their last position but are masked out.
    """
    footholds = np.asarray(footholds, dtype=float).reshape(NUM_LEGS, 3).copy()
    geometry = []
    prev_mask = schedule.stance_mask(t0)
    for k in range(n):
        t_k = t0 + k * dt
        mask = schedule.stance_mask(t_k)
        if k > 0:
            for leg in range(NUM_LEGS):
                if mask[leg] and not prev_mask[leg]:
                    footholds[leg] = foothold_for(
                        leg, schedule, reference[k], plan, terrain, layout
                    )
        pose = reference[k]
        R = rotation_matrix(pose.theta)
        r_body = (footholds - pose.p) @ R  # row-wise R.T @ (foothold - p)
        geometry.append(StanceGeometry(r_body, mask.copy()))
        prev_mask = mask
    return geometry
