"""Canonical scenario configs shared by harness and acceptance tests.

The walk task follows the benchmark setup: flat ground, 0.75 m/s, 0.3 m
body height, 8 s (the 6 m goal at command speed), trot gait, 200 Hz
control with a 0.6 s look-ahead. The learner runs M = 50 features with
sigma_w = 0.01; eta is set for the (1/M)-scaled coefficient
parameterization (see decisions ledger).
"""

from quadmpc.config import ScenarioConfig

ETA_M50 = 0.25  # per-coefficient rate for M = 50; function-space tau ~ 1 s


def walk_config(
    variant: str,
    name: str = "walk",
    duration: float = 8.0,
    kg_equivalent: float = 0.0,
    terrain: str = "flat",
    speed: float = 0.75,
    control_period: float = 0.005,
    n_sub: int = 6,
    eta: float = ETA_M50,
    seed: int = 11,
) -> ScenarioConfig:
    cfg = ScenarioConfig()
    cfg.name = name
    cfg.variant = variant
    cfg.task.velocity_x_mps = speed
    cfg.task.duration_s = duration
    cfg.terrain.kind = terrain
    cfg.mpc.sqp_iters = 1
    cfg.mpc.control_period_s = control_period
    cfg.plant.n_sub = n_sub
    cfg.learner.eta = eta
    cfg.learner.seed = seed
    if kg_equivalent:
        cfg.scenario.kind = "constant_force"
        cfg.scenario.kg_equivalent = kg_equivalent
    return cfg


def payload_config(variant: str, payload_kg: float = 8.0, **kw) -> ScenarioConfig:
    cfg = walk_config(variant, name=f"payload_{payload_kg:g}kg", speed=0.5, **kw)
    cfg.scenario.kind = "payload"
    cfg.scenario.payload_kg = payload_kg
    inertia = {4.0: [0.00234, 0.00304, 0.00414], 8.0: [0.00503, 0.00655, 0.00889]}
    cfg.scenario.payload_inertia_kgm2 = inertia.get(payload_kg, [0.0, 0.0, 0.0])
    return cfg
