"""Piecewise-constant disturbance estimator for the constant-wrench baseline.

A velocity-level predictor with stable pole a_s runs alongside the plant.
Once per control period the raw estimate sigma_hat is chosen to cancel the
discretized prediction error (with exact one-step plant dynamics and a
constant disturbance this recovers the true wrench in a single period),
then a first-order low-pass with cutoff omega_c produces h_bar. The
controller holds h_bar constant across the whole prediction horizon.

This realization is a documented stand-in, tuned once on the constant-force
flat scenario and frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import ResidualModel
from .rigid_body import BodyParams, BodyState


@dataclass(frozen=True)
class L1Config:
    a_s: float = -10.0  # predictor pole, 1/s
    omega_c: float = 20.0  # low-pass cutoff, rad/s

    def __post_init__(self):
        if not self.a_s < 0:
            raise ValueError("a_s must be < 0")
        if not self.omega_c > 0:
            raise ValueError("omega_c must be > 0")


@dataclass
class L1State:
    """Predictor state [v, omega], its error, and the wrench estimates."""

    predictor_state: np.ndarray = field(default_factory=lambda: np.zeros(6))
    err: np.ndarray = field(default_factory=lambda: np.zeros(6))
    sigma_hat: np.ndarray = field(default_factory=lambda: np.zeros(6))  # wrench
    h_bar: np.ndarray = field(default_factory=lambda: np.zeros(6))  # wrench

    @staticmethod
    def from_measurement(x: BodyState) -> "L1State":
        return L1State(predictor_state=np.concatenate([x.v, x.omega]))


def _wrench_to_accel(w: np.ndarray, params: BodyParams) -> np.ndarray:
    return np.concatenate([w[0:3] / params.mass, params.inertia_inv @ w[3:6]])


def _accel_to_wrench(a: np.ndarray, params: BodyParams) -> np.ndarray:
    return np.concatenate([a[0:3] * params.mass, params.inertia @ a[3:6]])


def l1_update(
    state: L1State,
    measured: np.ndarray,
    nominal_derivative: np.ndarray,
    dt: float,
    cfg: L1Config,
    params: BodyParams,
) -> L1State:
    """One estimator period ending at the new measurement.

    `measured` is [v, omega] observed at the period end;
    `nominal_derivative` is the zero-disturbance [vdot, omegadot] evaluated
    at the period-start state with the applied input. The predictor
    integrates the nominal derivative plus h_bar plus a_s times its error;
    sigma_hat is then chosen to cancel the discretized prediction error and
    h_bar tracks it through the low-pass filter. Requires omega_c * dt < 1.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if cfg.omega_c * dt >= 1.0:
        raise ValueError("omega_c * dt must be < 1 for the discrete filter")
    measured = np.asarray(measured, dtype=float).reshape(6)
    nominal_derivative = np.asarray(nominal_derivative, dtype=float).reshape(6)

    h_bar_acc = _wrench_to_accel(state.h_bar, params)
    predictor_new = state.predictor_state + dt * (
        nominal_derivative + h_bar_acc + cfg.a_s * state.err
    )
    err_new = predictor_new - measured
    sigma_acc = h_bar_acc - (err_new - (1.0 + cfg.a_s * dt) * state.err) / dt
    sigma_hat = _accel_to_wrench(sigma_acc, params)
    h_bar = state.h_bar + cfg.omega_c * dt * (sigma_hat - state.h_bar)
    return L1State(
        predictor_state=predictor_new,
        err=err_new,
        sigma_hat=sigma_hat,
        h_bar=h_bar,
    )


def make_constant_model(h_bar: np.ndarray, d_z: int = 15) -> ResidualModel:
    """Residual model predicting the fixed wrench h_bar for every input."""
    return ResidualModel.constant(h_bar, d_z=d_z)


def l1_mpc_step(x_t: BodyState, problem, l1: L1State, sqp_iters: int = 1,
                warm=None, fallback_input=None):
    """Receding-horizon step with h_bar held constant across the horizon.

    Identical to the shared control path with a constant-wrench residual
    model installed; returns (forces, solution, warm start).
    """
    from dataclasses import replace as _replace

    from .mpc import control_step

    constant_problem = _replace(problem, residual_model=make_constant_model(l1.h_bar))
    constant_problem.u_ref = None
    constant_problem.__post_init__()
    return control_step(
        x_t, constant_problem, sqp_iters=sqp_iters, warm=warm,
        fallback_input=fallback_input,
    )
