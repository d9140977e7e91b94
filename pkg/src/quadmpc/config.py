"""Scenario configuration: nested dataclasses with a flat on-disk format.

Configs serialize to a flat JSON object whose keys are dotted field paths
with units in the names (e.g. "mpc.dt_s", "scenario.force_n"). Every random
choice in a run flows from the seeds named here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, is_dataclass

import numpy as np

from .errors import InvalidConfig

VARIANTS = ("nominal", "l1", "rff", "clairvoyant")


@dataclass
class TerrainConfig:
    kind: str = "flat"  # flat | slope | rough
    slope_deg: float = 20.0
    cell_size_m: float = 0.35
    variation_m: float = 0.25
    seed: int = 0


@dataclass
class GaitConfig:
    period_s: float = 0.3
    duty: float = 0.5
    offsets: list = field(default_factory=lambda: [0.0, 0.5, 0.5, 0.0])


@dataclass
class TaskConfig:
    velocity_x_mps: float = 0.75
    velocity_y_mps: float = 0.0
    height_m: float = 0.3
    yaw_rate_rps: float = 0.0
    duration_s: float = 8.0


@dataclass
class BodyConfig:
    mass_kg: float = 13.0
    inertia_kgm2: list = field(default_factory=lambda: [0.025, 0.10, 0.11])
    hip_x_m: float = 0.19
    hip_y_m: float = 0.13
    reach_m: float = 0.45


@dataclass
class MpcSettings:
    horizon: int = 20
    dt_s: float = 0.03
    control_period_s: float = 0.005
    mu: float = 0.6
    f_z_min_n: float = 0.0
    f_z_max_n: float = 250.0
    sqp_iters: int = 2
    q_p: list = field(default_factory=lambda: [12.5, 12.5, 12.5])
    q_theta: list = field(default_factory=lambda: [0.5, 0.5, 2.5])
    q_v: list = field(default_factory=lambda: [0.2, 0.2, 0.4])
    q_omega: list = field(default_factory=lambda: [0.1, 0.1, 0.4])
    r_u: float = 5e-5


@dataclass
class LearnerSettings:
    m: int = 50
    sigma_w: float = 0.01
    eta: float = 0.003
    seed: int = 1
    projection: bool = False
    b_h: float = 0.0  # 0 means no bound / projection disabled
    z_scale: list = field(default_factory=list)  # empty = raw feature input


@dataclass
class ScenarioSpec:
    kind: str = "none"  # none|constant_force|time_varying_force|payload|friction_schedule|composite
    kg_equivalent: float = 0.0  # downward force of kg_equivalent * 9.81 N
    force_g_units: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    scale_by_mass: bool = False
    payload_kg: float = 0.0
    payload_inertia_kgm2: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    times_s: list = field(default_factory=list)
    forces_n: list = field(default_factory=list)  # list of [fx, fy, fz]
    mus: list = field(default_factory=list)


@dataclass
class PlantConfig:
    n_sub: int = 6
    mu: float = 0.7
    noise_level: float = 0.0
    noise_seed: int = 2
    blowup_norm: float = 1e6


@dataclass
class L1Settings:
    a_s: float = -10.0
    omega_c: float = 20.0


@dataclass
class ScenarioConfig:
    name: str = "run"
    variant: str = "rff"
    task: TaskConfig = field(default_factory=TaskConfig)
    terrain: TerrainConfig = field(default_factory=TerrainConfig)
    gait: GaitConfig = field(default_factory=GaitConfig)
    body: BodyConfig = field(default_factory=BodyConfig)
    mpc: MpcSettings = field(default_factory=MpcSettings)
    learner: LearnerSettings = field(default_factory=LearnerSettings)
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    plant: PlantConfig = field(default_factory=PlantConfig)
    l1: L1Settings = field(default_factory=L1Settings)

    def validate(self):
        if self.variant not in VARIANTS:
            raise InvalidConfig(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not self.task.duration_s > 0:
            raise InvalidConfig("task.duration_s must be > 0")
        if not self.mpc.control_period_s > 0 or not self.mpc.dt_s > 0:
            raise InvalidConfig("mpc periods must be > 0")
        if self.plant.n_sub < 1:
            raise InvalidConfig("plant.n_sub must be >= 1")
        if self.scenario.kind not in (
            "none",
            "constant_force",
            "time_varying_force",
            "payload",
            "friction_schedule",
            "composite",
        ):
            raise InvalidConfig(f"unknown scenario kind {self.scenario.kind!r}")
        return self


def flatten_config(cfg) -> dict:
    """Dataclass tree -> flat dict with dotted keys, sorted."""
    out = {}

    def walk(obj, prefix):
        for f in fields(obj):
            val = getattr(obj, f.name)
            key = f"{prefix}{f.name}"
            if is_dataclass(val):
                walk(val, key + ".")
            elif isinstance(val, np.ndarray):
                out[key] = val.tolist()
            else:
                out[key] = val

    walk(cfg, "")
    return dict(sorted(out.items()))


def unflatten_config(flat: dict, cls=ScenarioConfig):
    """Flat dotted-key dict -> dataclass tree; unknown keys are rejected."""
    cfg = cls()

    def set_path(obj, path, value):
        parts = path.split(".")
        for part in parts[:-1]:
            if not hasattr(obj, part):
                raise InvalidConfig(f"unknown config key {path!r}")
            obj = getattr(obj, part)
            if not is_dataclass(obj):
                raise InvalidConfig(f"unknown config key {path!r}")
        leaf = parts[-1]
        names = {f.name for f in fields(obj)}
        if leaf not in names:
            raise InvalidConfig(f"unknown config key {path!r}")
        setattr(obj, leaf, value)

    for key, value in flat.items():
        set_path(cfg, key, value)
    return cfg


def config_to_json(cfg: ScenarioConfig) -> str:
    return json.dumps(flatten_config(cfg), indent=2, sort_keys=True)


def config_from_json(text: str) -> ScenarioConfig:
    try:
        flat = json.loads(text)
    except json.JSONDecodeError as e:
        raise InvalidConfig(f"config is not valid JSON: {e}") from e
    if not isinstance(flat, dict):
        raise InvalidConfig("config must be a JSON object of dotted keys")
    return unflatten_config(flat).validate()


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_json(fh.read())


def save_config(cfg: ScenarioConfig, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config_to_json(cfg) + "\n")


def with_overrides(cfg: ScenarioConfig, overrides: dict) -> ScenarioConfig:
    """New config with flat-key overrides applied."""
    flat = flatten_config(cfg)
    for key, value in overrides.items():
        if key not in flat:
            raise InvalidConfig(f"unknown override key {key!r}")
        flat[key] = value
    return unflatten_config(flat).validate()


def copy_config(cfg: ScenarioConfig) -> ScenarioConfig:
    return unflatten_config(flatten_config(cfg))
