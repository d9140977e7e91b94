"""Scenario execution, tracking/regret metrics, and file outputs.

One run = one controller variant against one disturbance scenario. Per
control period the loop reads the measured state, plans the gait window,
solves the receding-horizon problem with the variant's residual model,
applies the force command to the plant, recovers the realized wrench from
the observed transition, and (for the learning variant) takes one gradient
step. The model used by the controller at step t never sees data from
x_{t+1}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig, copy_config, flatten_config
from .errors import EmptyLog, GimbalLock, MismatchedRuns, NumericalBlowup
from .extractor import residual_from_transition
from .features import ResidualModel, build_feature_input
from .gait import (
    ContactSchedule,
    LegLayout,
    ReferencePlan,
    foothold_for,
    initial_footholds,
    make_terrain,
    reference_at,
    reference_window,
    stance_geometry_over_horizon,
)
from .l1 import L1Config, L1State, l1_update, make_constant_model
from .learner import LearnerConfig, ogd_step
from .mpc import (
    CostWeights,
    InputConstraintSet,
    MpcController,
    reference_input,
    stage_cost,
)
from .plant import (
    Composite,
    ConstantForce,
    DisturbanceScenario,
    FrictionSchedule,
    Payload,
    Plant,
    TimeVaryingForce,
    TrueWrenchModel,
)
from .rigid_body import BodyParams, StanceGeometry, rotation_matrix

_STATE_NAMES = [
    "px_m", "py_m", "pz_m", "roll_rad", "pitch_rad", "yaw_rad",
    "vx_mps", "vy_mps", "vz_mps", "wx_rps", "wy_rps", "wz_rps",
]
_WRENCH_NAMES = ["fx_n", "fy_n", "fz_n", "tx_nm", "ty_nm", "tz_nm"]

CSV_COLUMNS = (
    ["t_s"]
    + [f"x_{n}" for n in _STATE_NAMES]
    + [f"ref_{n}" for n in _STATE_NAMES]
    + [f"u_{leg}_{ax}_n" for leg in ("fl", "fr", "rl", "rr") for ax in ("x", "y", "z")]
    + [f"h_true_{n}" for n in _WRENCH_NAMES]
    + [f"h_hat_{n}" for n in _WRENCH_NAMES]
    # wall-clock solve times live in the summary, not here: the CSV must be
    # byte-identical across reruns of the same config
    + ["loss", "stage_cost", "solver_status", "solver_iters", "slip_events",
       "clip_events"]
)


@dataclass
class StepRecord:
    t: float
    x: np.ndarray  # (12,)
    x_ref: np.ndarray  # (12,)
    u: np.ndarray  # (12,)
    h_true: np.ndarray  # (6,)
    h_hat: np.ndarray  # (6,)
    loss: float
    stage_cost: float
    solver_status: str
    solver_iters: int
    solve_time_s: float
    slip_events: int
    clip_events: int
    stance: np.ndarray  # (4,) bool, for constraint audits
    control_time_s: float = 0.0
    update_time_s: float = 0.0


@dataclass
class RunLog:
    config: ScenarioConfig
    records: list[StepRecord] = field(default_factory=list)
    status: str = "completed"  # completed | failed
    failure_reason: str = ""
    model_record: dict | None = None
    events: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def build_body_params(cfg: ScenarioConfig) -> BodyParams:
    return BodyParams(
        mass=cfg.body.mass_kg, inertia=np.diag(np.asarray(cfg.body.inertia_kgm2, float))
    )


def build_scenario(cfg: ScenarioConfig) -> DisturbanceScenario:
    spec = cfg.scenario
    parts: list[DisturbanceScenario] = []
    force = 9.81 * np.asarray(spec.force_g_units, dtype=float)
    force = force + spec.kg_equivalent * 9.81 * np.array([0.0, 0.0, -1.0])
    if np.any(force):
        parts.append(ConstantForce(force, scale_by_mass=spec.scale_by_mass))
    if spec.times_s and spec.forces_n:
        parts.append(TimeVaryingForce(np.asarray(spec.times_s), np.asarray(spec.forces_n)))
    if spec.payload_kg > 0:
        parts.append(Payload(spec.payload_kg, np.asarray(spec.payload_inertia_kgm2)))
    if spec.times_s and spec.mus:
        parts.append(FrictionSchedule(np.asarray(spec.times_s), np.asarray(spec.mus)))
    if not parts:
        return DisturbanceScenario()
    if len(parts) == 1:
        return parts[0]
    return Composite(parts)


def build_layout(cfg: ScenarioConfig) -> LegLayout:
    hx, hy = cfg.body.hip_x_m, cfg.body.hip_y_m
    hips = np.array([[hx, hy, 0.0], [hx, -hy, 0.0], [-hx, hy, 0.0], [-hx, -hy, 0.0]])
    return LegLayout(hip_offsets=hips, reach_radius=cfg.body.reach_m)


def build_weights(cfg: ScenarioConfig) -> CostWeights:
    return CostWeights(
        q_p=np.asarray(cfg.mpc.q_p, float),
        q_theta=np.asarray(cfg.mpc.q_theta, float),
        q_v=np.asarray(cfg.mpc.q_v, float),
        q_omega=np.asarray(cfg.mpc.q_omega, float),
        r_u=np.full(12, cfg.mpc.r_u),
    )


def build_plan(cfg: ScenarioConfig, terrain) -> ReferencePlan:
    return ReferencePlan(
        velocity_xy=np.array([cfg.task.velocity_x_mps, cfg.task.velocity_y_mps]),
        height=cfg.task.height_m,
        yaw_rate=cfg.task.yaw_rate_rps,
        terrain=terrain,
    )


def _terrain_from_config(cfg: ScenarioConfig):
    return make_terrain(
        cfg.terrain.kind,
        angle=np.deg2rad(cfg.terrain.slope_deg),
        cell_size=cfg.terrain.cell_size_m,
        variation=cfg.terrain.variation_m,
        seed=cfg.terrain.seed,
    )


# ---------------------------------------------------------------------------
# Run loop
# ---------------------------------------------------------------------------


def run_scenario(cfg: ScenarioConfig, probe=None) -> RunLog:
    """Execute one scenario under the configured controller variant.

    `probe(event: str, step: int)` is an optional instrumentation hook
    called at "control" and "update" points of each step (used by ordering
    tests). Deterministic given the config's seeds.
    """
    import time as _time

    cfg.validate()
    terrain = _terrain_from_config(cfg)
    plan = build_plan(cfg, terrain)
    schedule = ContactSchedule(
        gait_period=cfg.gait.period_s,
        duty_factor=cfg.gait.duty,
        phase_offsets=np.asarray(cfg.gait.offsets, float),
    )
    layout = build_layout(cfg)
    params = build_body_params(cfg)
    scenario = build_scenario(cfg)
    weights = build_weights(cfg)
    constraints = InputConstraintSet(
        mu=cfg.mpc.mu, f_z_min=cfg.mpc.f_z_min_n, f_z_max=cfg.mpc.f_z_max_n
    )

    x0 = reference_at(plan, 0.0)
    plant = Plant(
        params,
        scenario,
        x0,
        terrain=terrain,
        default_mu=cfg.plant.mu,
        n_sub=cfg.plant.n_sub,
        noise_level=cfg.plant.noise_level,
        noise_seed=cfg.plant.noise_seed,
        blowup_norm=cfg.plant.blowup_norm,
    )

    variant = cfg.variant
    learner_cfg = None
    l1_state = None
    l1_cfg = None
    if variant == "rff":
        model = ResidualModel.create(
            cfg.learner.m, d_z=15, sigma_w=cfg.learner.sigma_w, seed=cfg.learner.seed,
            b_h=cfg.learner.b_h if cfg.learner.b_h > 0 else None,
            z_scale=np.asarray(cfg.learner.z_scale, float) if cfg.learner.z_scale else None,
        )
        learner_cfg = LearnerConfig(
            eta=cfg.learner.eta,
            projection_enabled=cfg.learner.projection,
            b_h=cfg.learner.b_h if cfg.learner.b_h > 0 else None,
        )
    elif variant == "l1":
        model = make_constant_model(np.zeros(6))
        l1_state = L1State.from_measurement(x0)
        l1_cfg = L1Config(a_s=cfg.l1.a_s, omega_c=cfg.l1.omega_c)
    elif variant == "clairvoyant":
        model = TrueWrenchModel(scenario, params)
    else:  # nominal
        model = ResidualModel.zero()

    controller = MpcController(
        params=params,
        weights=weights,
        constraints=constraints,
        horizon=cfg.mpc.horizon,
        dt=cfg.mpc.dt_s,
        residual_model=model,
        sqp_iters=cfg.mpc.sqp_iters,
    )

    period = cfg.mpc.control_period_s
    n_steps = int(round(cfg.task.duration_s / period))
    footholds = initial_footholds(x0, plan, terrain, layout)
    stance_prev = schedule.stance_mask(0.0)

    log = RunLog(config=copy_config(cfg))
    x_meas = plant.measure()
    total_slips = 0
    total_clips = 0

    for step in range(n_steps):
        t = step * period
        stance_now = schedule.stance_mask(t)
        for leg in range(4):
            if stance_now[leg] and not stance_prev[leg]:
                footholds[leg] = foothold_for(leg, schedule, x_meas, plan, terrain, layout)
        stance_prev = stance_now

        R_meas = rotation_matrix(x_meas.theta)
        geom_true = StanceGeometry((footholds - x_meas.p) @ R_meas, stance_now.copy())

        refs = reference_window(plan, t, cfg.mpc.horizon, cfg.mpc.dt_s)
        horizon_geom = stance_geometry_over_horizon(
            schedule, footholds, refs, cfg.mpc.horizon, cfg.mpc.dt_s, t, plan,
            terrain, layout,
        )

        if variant == "l1":
            controller.model = make_constant_model(l1_state.h_bar)

        if probe:
            probe("control", step)
        t_ctrl = _time.perf_counter()
        try:
            u_cmd, solution = controller.step(x_meas, refs, horizon_geom, t=t)
        except GimbalLock as e:
            log.status = "failed"
            log.failure_reason = f"gimbal lock during control: {e}"
            break
        control_time = _time.perf_counter() - t_ctrl

        try:
            events = plant.step(u_cmd, geom_true, period)
            x_next = plant.measure()
            h_true = residual_from_transition(
                x_meas, u_cmd, x_next, geom_true, params, period
            )
        except (NumericalBlowup, GimbalLock) as e:
            log.status = "failed"
            log.failure_reason = str(e)
            break
        total_slips += events.slips
        total_clips += events.clips
        z_t = build_feature_input(x_meas, u_cmd, geom_true)

        if variant == "rff":
            h_hat = model.predict6(z_t)
        elif variant == "l1":
            h_hat = l1_state.h_bar.copy()
        elif variant == "clairvoyant":
            h_hat = model.wrench6(x_meas.as_vector(), u_cmd.as_vector(), geom_true, t)
        else:
            h_hat = np.zeros(6)

        diff = h_true.as_vector() - h_hat
        loss_t = float(diff @ diff)

        ref_now = refs[0]
        u_ref0 = reference_input(
            StanceGeometry(np.zeros((4, 3)), stance_now), params, ref_now.theta
        )
        cost_t = stage_cost(
            x_meas.as_vector(), u_cmd.as_vector(), ref_now.as_vector(), u_ref0, weights
        )

        if probe:
            probe("update", step)
        update_time = 0.0
        if variant == "rff":
            t_upd = _time.perf_counter()
            model = ogd_step(model, z_t, h_true, learner_cfg)
            update_time = _time.perf_counter() - t_upd
            controller.model = model
        elif variant == "l1":
            xdot_nom = _nominal_dyn_rows(x_meas, u_cmd, geom_true, params)
            l1_state = l1_update(
                l1_state,
                np.concatenate([x_next.v, x_next.omega]),
                xdot_nom,
                period,
                l1_cfg,
                params,
            )

        log.records.append(
            StepRecord(
                t=t,
                x=x_meas.as_vector(),
                x_ref=ref_now.as_vector(),
                u=u_cmd.as_vector(),
                h_true=h_true.as_vector(),
                h_hat=np.asarray(h_hat, float).copy(),
                loss=loss_t,
                stage_cost=cost_t,
                solver_status=solution.solver_status.value,
                solver_iters=solution.iterations,
                solve_time_s=solution.solve_time,
                slip_events=events.slips,
                clip_events=events.clips,
                stance=stance_now.copy(),
                control_time_s=control_time,
                update_time_s=update_time,
            )
        )
        x_meas = x_next

    log.events = {"slips": total_slips, "clips": total_clips}
    if variant == "rff":
        log.model_record = model.to_record()
    return log


def _nominal_dyn_rows(x, u, geom, params):
    from .rigid_body import ResidualWrench, continuous_dynamics

    return continuous_dynamics(x, u, geom, params, ResidualWrench.zero())[6:12]


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def tracking_metrics(log: RunLog) -> dict:
    """Mean absolute position error per axis and overall, in centimeters.

    "overall" is the mean Euclidean norm of the position error;
    "overall_axis_sum" (the sum of per-axis means) is also reported so
    either convention can be compared.
    """
    if not log.records:
        raise EmptyLog("no records to compute metrics on")
    err = np.stack([r.x[0:3] - r.x_ref[0:3] for r in log.records])
    per_axis = np.mean(np.abs(err), axis=0) * 100.0
    overall = float(np.mean(np.linalg.norm(err, axis=1)) * 100.0)
    return {
        "x_cm": float(per_axis[0]),
        "y_cm": float(per_axis[1]),
        "z_cm": float(per_axis[2]),
        "overall_cm": overall,
        "overall_axis_sum_cm": float(per_axis.sum()),
        "steps": len(log.records),
        "status": log.status,
    }


def stage_cost_series(log: RunLog) -> np.ndarray:
    return np.array([r.stage_cost for r in log.records])


def _comparable_flat(cfg: ScenarioConfig) -> dict:
    flat = flatten_config(cfg)
    flat.pop("variant", None)
    flat.pop("name", None)
    return flat


def dynamic_regret(log: RunLog, clairvoyant_log: RunLog) -> float:
    """Cumulative stage cost of the run minus the clairvoyant run's.

    Both runs must share everything but the controller variant; each run's
    costs are evaluated along its own realized states and inputs.
    """
    if _comparable_flat(log.config) != _comparable_flat(clairvoyant_log.config):
        raise MismatchedRuns("runs differ in more than the controller variant")
    n = min(len(log.records), len(clairvoyant_log.records))
    if n == 0:
        raise EmptyLog("cannot compute regret on empty logs")
    ours = stage_cost_series(log)[:n].sum()
    theirs = stage_cost_series(clairvoyant_log)[:n].sum()
    return float(ours - theirs)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def export_csv(log: RunLog, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for r in log.records:
            row = (
                [r.t]
                + list(r.x)
                + list(r.x_ref)
                + list(r.u)
                + list(r.h_true)
                + list(r.h_hat)
                + [r.loss, r.stage_cost, r.solver_status, r.solver_iters,
                   r.slip_events, r.clip_events]
            )
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def parse_csv(path) -> dict:
    """Re-parse an exported CSV into column arrays (numeric where possible)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    cols = {}
    for j, name in enumerate(header):
        vals = [row[j] for row in rows]
        if name == "solver_status":
            cols[name] = vals
        else:
            cols[name] = np.array([float(v) for v in vals])
    return cols


def summary_dict(log: RunLog, extra: dict | None = None) -> dict:
    out = {
        "name": log.config.name,
        "variant": log.config.variant,
        "status": log.status,
        "failure_reason": log.failure_reason,
        "steps": len(log.records),
        "events": log.events,
        "config": flatten_config(log.config),
    }
    if log.records:
        out["metrics"] = tracking_metrics(log)
        out["total_stage_cost"] = float(stage_cost_series(log).sum())
        out["mean_control_time_s"] = float(
            np.mean([r.control_time_s for r in log.records])
        )
    if log.model_record is not None:
        out["residual_model"] = log.model_record
    if extra:
        out.update(extra)
    return out


def export_summary(log: RunLog, path, extra: dict | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary_dict(log, extra), fh, indent=2, sort_keys=True)
        fh.write("\n")


def export_svg(log: RunLog, path):
    """Line plots of height, forward velocity, and the wrench traces."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = np.array([r.t for r in log.records])
    fig, axes = plt.subplots(3, 1, figsize=(8, 9), sharex=True)
    axes[0].plot(t, [r.x[2] for r in log.records], label="z")
    axes[0].plot(t, [r.x_ref[2] for r in log.records], "--", label="z ref")
    axes[0].set_ylabel("height [m]")
    axes[0].legend(loc="best")
    axes[1].plot(t, [r.x[6] for r in log.records], label="vx")
    axes[1].plot(t, [r.x_ref[6] for r in log.records], "--", label="vx ref")
    axes[1].set_ylabel("velocity [m/s]")
    axes[1].legend(loc="best")
    for i, name in enumerate(["fx", "fy", "fz"]):
        axes[2].plot(t, [r.h_hat[i] for r in log.records], label=f"est {name}")
        axes[2].plot(t, [r.h_true[i] for r in log.records], "--", alpha=0.5,
                     label=f"true {name}")
    axes[2].set_ylabel("residual force [N]")
    axes[2].set_xlabel("t [s]")
    axes[2].legend(loc="best", ncol=3, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def export(log: RunLog, out_dir, formats=("csv", "summary"), extra: dict | None = None):
    """Write the requested outputs; returns the list of paths written."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, f"{log.config.name}_{log.config.variant}")
    written = []
    if "csv" in formats:
        export_csv(log, base + ".csv")
        written.append(base + ".csv")
    if "summary" in formats or "summary-json" in formats or "json" in formats:
        export_summary(log, base + ".json", extra)
        written.append(base + ".json")
    if "svg" in formats or "svg-plot" in formats:
        export_svg(log, base + ".svg")
        written.append(base + ".svg")
    return written
