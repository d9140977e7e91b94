"""Adaptive quadruped locomotion: single-rigid-body MPC with online
residual-dynamics learning, baselines, and a benchmark harness."""

from .config import ScenarioConfig, config_from_json, config_to_json, load_config
from .errors import (
    DimensionMismatch,
    EmptyLog,
    GimbalLock,
    InvalidConfig,
    MismatchedRuns,
    NonFinite,
    NumericalBlowup,
    SingularComparator,
    UnreachableFoothold,
)
from .extractor import residual_from_transition
from .features import FeatureSample, ResidualModel, build_feature_input, predict, sample_features
from .gait import ContactSchedule, LegLayout, ReferencePlan, reference_at
from .harness import RunLog, dynamic_regret, run_scenario, tracking_metrics
from .l1 import L1Config, L1State, l1_update
from .learner import LearnerConfig, estimation_regret, gradient, loss, ogd_step
from .mpc import (
    CostWeights,
    InputConstraintSet,
    MpcController,
    MpcProblem,
    MpcSolution,
    assemble_qp,
    control_step,
    linearize_dynamics,
)
from .plant import (
    Composite,
    ConstantForce,
    DisturbanceScenario,
    FrictionSchedule,
    Payload,
    Plant,
    TimeVaryingForce,
    plant_step,
    realized_disturbance,
)
from .qp import DenseQp, QpResult, SolverStatus, solve_qp
from .rigid_body import (
    BodyParams,
    BodyState,
    FootForces,
    ResidualWrench,
    StanceGeometry,
    contact_wrench_map,
    continuous_dynamics,
    discrete_step,
    euler_rate_matrix,
    rotation_matrix,
)

__version__ = "0.1.0"
