"""Online least-squares estimation of the residual-model coefficients.

Each control period the learner sees one (feature input, realized wrench)
pair, forms the squared-error loss, and takes one projected gradient step.
The gradient is analytic: the prediction is linear in the coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidConfig, SingularComparator
from .features import WRENCH_DIM, ResidualModel
from .rigid_body import ResidualWrench


@dataclass(frozen=True)
class LearnerConfig:
    eta: float = 0.003
    projection_enabled: bool = False
    b_h: float | None = None

    def __post_init__(self):
        if not self.eta > 0.0:
            raise InvalidConfig(f"eta must be > 0, got {self.eta}")
        if self.projection_enabled and not (self.b_h and self.b_h > 0.0):
            raise InvalidConfig("projection requires b_h > 0")


@dataclass(frozen=True)
class LossRecord:
    t: int
    loss: float


def _target6(target) -> np.ndarray:
    if isinstance(target, ResidualWrench):
        return target.as_vector()
    return np.asarray(target, dtype=float).reshape(WRENCH_DIM)


def loss(model: ResidualModel, z, target) -> float:
    """Squared approximation error || target - h_hat(z) ||^2."""
    r = _target6(target) - model.predict6(z)
    return float(r @ r)


def gradient(model: ResidualModel, z, target) -> np.ndarray:
    """Gradient of the loss w.r.t. the coefficient blocks, shape (M, 6).

    Block i is -(2/M) * cos(w_i . z + b_i) * (target - h_hat(z)).
    """
    phi = model.features(z)
    r = _target6(target) - model.predict6(z)
    return (-2.0 / model.m) * phi[:, None] * r[None, :]


def project_blocks(alpha: np.ndarray, b_h: float) -> np.ndarray:
    """Euclidean projection of each 6-vector block onto the b_h-ball."""
    norms = np.linalg.norm(alpha, axis=1)
    scale = np.ones_like(norms)
    over = norms > b_h
    scale[over] = b_h / norms[over]
    return alpha * scale[:, None]


def ogd_step(model: ResidualModel, z, target, cfg: LearnerConfig) -> ResidualModel:
    """One gradient step on the instantaneous loss, with optional projection."""
    alpha = model.alpha - cfg.eta * gradient(model, z, target)
    if cfg.projection_enabled:
        alpha = project_blocks(alpha, cfg.b_h)
    return model.with_alpha(alpha)


def _eta_at(eta_schedule, t: int) -> float:
    if callable(eta_schedule):
        return float(eta_schedule(t))
    if np.isscalar(eta_schedule):
        return float(eta_schedule)
    return float(eta_schedule[t])


def hindsight_comparator(
    model: ResidualModel,
    stream: Sequence[tuple[np.ndarray, np.ndarray]],
    ridge: float = 1e-8,
) -> np.ndarray:
    """Best fixed coefficient block over the whole stream (ridge-regularized).

    Solves min_alpha sum_t || h_t - (1/M) Phi_t alpha ||^2 + ridge ||alpha||^2
    by the normal equations. Raises SingularComparator if the solve fails or
    produces non-finite values.
    """
    Phi = np.stack([model.features(z) for z, _ in stream])  # (T, M)
    H = np.stack([_target6(h) for _, h in stream])  # (T, 6)
    m = model.m
    lhs = Phi.T @ Phi / m**2 + ridge * np.eye(m)
    rhs = Phi.T @ H / m
    try:
        alpha = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as e:
        raise SingularComparator(str(e)) from e
    if not np.all(np.isfinite(alpha)):
        raise SingularComparator("comparator solve produced non-finite values")
    return alpha


def estimation_regret(
    model: ResidualModel,
    stream: Sequence[tuple[np.ndarray, np.ndarray]],
    eta_schedule: float | Sequence[float] | Callable[[int], float],
    projection_enabled: bool = False,
    b_h: float | None = None,
    ridge: float = 1e-8,
) -> float:
    """Replay OGD over the stream; online loss sum minus hindsight-optimal sum.

    The comparator is the best fixed coefficient block over the whole
    stream, solved by regularized normal equations. `model` supplies the
    feature samples and the initial coefficients.
    """
    if len(stream) == 0:
        raise InvalidConfig("stream must be non-empty")
    alpha_star = hindsight_comparator(model, stream, ridge=ridge)
    comparator_model = model.with_alpha(alpha_star)

    online = 0.0
    best = 0.0
    current = model
    for t, (z, target) in enumerate(stream):
        online += loss(current, z, target)
        best += loss(comparator_model, z, target)
        cfg = LearnerConfig(
            eta=_eta_at(eta_schedule, t),
            projection_enabled=projection_enabled,
            b_h=b_h,
        )
        current = ogd_step(current, z, target, cfg)
    return online - best
