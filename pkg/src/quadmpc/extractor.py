"""Recover the realized residual wrench from one observed transition.

The plant's forward-Euler step is affine in the disturbance wrench, so the
wrench that explains an observed (state, input, next state) triple is unique
and available in closed form from the velocity and angular-rate rows:

    force  = m * (v_next - v_nominal) / dt        (inertial frame)
    torque = J * (omega_next - omega_nominal) / dt (body frame)

where the nominal step assumes zero disturbance. The kinematic rows carry no
disturbance under the control-affine structure; any mismatch there (e.g.
from plant sub-stepping or noise) is reported separately as a diagnostic,
never folded into the wrench.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFinite
from .rigid_body import (
    BodyParams,
    BodyState,
    FootForces,
    ResidualWrench,
    StanceGeometry,
    continuous_dynamics,
)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFinite("transition contains NaN or Inf")


def residual_from_transition(
    x_t: BodyState,
    u_t: FootForces,
    x_next: BodyState,
    geom: StanceGeometry,
    params: BodyParams,
    dt: float,
) -> ResidualWrench:
    """Unique wrench h with discrete_step(x_t, u_t, ..., h, dt) == x_next
    in the velocity and angular-rate components."""
    _check_finite(x_t.as_vector(), u_t.as_vector(), x_next.as_vector())
    if not dt > 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    xdot = continuous_dynamics(x_t, u_t, geom, params, ResidualWrench.zero())
    v_nom = x_t.v + dt * xdot[6:9]
    omega_nom = x_t.omega + dt * xdot[9:12]
    force = params.mass * (x_next.v - v_nom) / dt
    torque = params.inertia @ (x_next.omega - omega_nom) / dt
    return ResidualWrench(force, torque)


def kinematic_defect(
    x_t: BodyState,
    u_t: FootForces,
    x_next: BodyState,
    geom: StanceGeometry,
    params: BodyParams,
    dt: float,
) -> np.ndarray:
    """Position/attitude rows of x_next minus the nominal one-step prediction.

    Nonzero values indicate plant-side effects the one-step model cannot
    attribute to a wrench (sub-stepping, injected noise). Diagnostic only.
    """
    _check_finite(x_t.as_vector(), u_t.as_vector(), x_next.as_vector())
    xdot = continuous_dynamics(x_t, u_t, geom, params, ResidualWrench.zero())
    p_nom = x_t.p + dt * xdot[0:3]
    theta_nom = x_t.theta + dt * xdot[3:6]
    return np.concatenate([x_next.p - p_nom, x_next.theta - theta_nom])
