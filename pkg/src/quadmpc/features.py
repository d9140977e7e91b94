"""Random cosine-feature model of the residual wrench.

The model approximates the unknown 6-dim wrench as an average of M scalar
features, each multiplying a learnable 6-vector coefficient block:

    h_hat(z) = (1/M) * sum_i alpha_i * cos(w_i . z + b_i)

with w_i drawn i.i.d. Gaussian and b_i uniform on [0, 2*pi). The feature
input z stacks v, theta, omega and the 6-dim contact-wrench contribution
of the current force command (d_z = 15). z is used raw; an optional
per-component scale is available as a config knob but defaults to none.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig
from .rigid_body import (
    BodyState,
    FootForces,
    ResidualWrench,
    StanceGeometry,
    contact_wrench_map,
    cross_rows,
    rotation_matrices,
)

FEATURE_DIM = 15
WRENCH_DIM = 6


@dataclass(frozen=True)
class FeatureSample:
    """One sampled feature direction w and phase offset b, immutable."""

    w: np.ndarray
    b: float


def sample_features(m: int, d_z: int, sigma_w: float, seed: int) -> list[FeatureSample]:
    """Draw M i.i.d. feature samples, reproducible from the seed.

    w ~ Normal(0, sigma_w^2 I), b ~ Uniform[0, 2*pi).
    """
    if m < 1:
        raise InvalidConfig(f"feature count must be >= 1, got {m}")
    if not sigma_w > 0.0:
        raise InvalidConfig(f"sigma_w must be > 0, got {sigma_w}")
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, sigma_w, size=(m, d_z))
    b = rng.uniform(0.0, 2.0 * np.pi, size=m)
    return [FeatureSample(W[i].copy(), float(b[i])) for i in range(m)]


def feature_value(z, sample: FeatureSample) -> float:
    """Scalar feature cos(w . z + b), always in [-1, 1]."""
    z = np.asarray(z, dtype=float)
    return float(np.cos(sample.w @ z + sample.b))


def build_feature_input(
    x: BodyState, u: FootForces, geom: StanceGeometry
) -> np.ndarray:
    """Feature input z = [v, theta, omega, contact wrench of u] (15,)."""
    wrench = contact_wrench_map(x, geom) @ u.as_vector()
    return np.concatenate([x.v, x.theta, x.omega, wrench])


class ResidualModel:
    """Sampled features plus the coefficient block being learned.

    Feature samples are drawn once and never change; only `alpha` is
    updated (by the online learner, between control steps). Predictions are
    read-only and safe to share.
    """

    def __init__(
        self,
        samples: list[FeatureSample],
        alpha: np.ndarray | None = None,
        b_h: float | None = None,
        sigma_w: float | None = None,
        seed: int | None = None,
        z_scale: np.ndarray | None = None,
    ):
        if len(samples) < 1:
            raise InvalidConfig("model needs at least one feature sample")
        self.samples = list(samples)
        self.W = np.stack([s.w for s in samples])  # (M, d_z)
        self.b = np.array([s.b for s in samples])  # (M,)
        self.m = len(samples)
        self.d_z = self.W.shape[1]
        self.sigma_w = sigma_w
        self.seed = seed
        self.b_h = b_h
        self.z_scale = None if z_scale is None else np.asarray(z_scale, dtype=float)
        if alpha is None:
            alpha = np.zeros((self.m, WRENCH_DIM))
        self.alpha = np.asarray(alpha, dtype=float).reshape(self.m, WRENCH_DIM)
        if b_h is not None:
            norms = np.linalg.norm(self.alpha, axis=1)
            if np.any(norms > b_h + 1e-12):
                raise InvalidConfig("coefficient block norm exceeds b_h")

    @classmethod
    def create(
        cls,
        m: int,
        d_z: int = FEATURE_DIM,
        sigma_w: float = 0.01,
        seed: int = 0,
        b_h: float | None = None,
        z_scale: np.ndarray | None = None,
    ) -> "ResidualModel":
        samples = sample_features(m, d_z, sigma_w, seed)
        return cls(samples, b_h=b_h, sigma_w=sigma_w, seed=seed, z_scale=z_scale)

    @classmethod
    def constant(cls, wrench, d_z: int = FEATURE_DIM) -> "ResidualModel":
        """Model whose prediction is a fixed wrench for every input.

        Realized as a single feature with w = 0, b = 0 (cos == 1), so the
        coefficient block is the wrench itself.
        """
        wrench = np.asarray(wrench, dtype=float).reshape(WRENCH_DIM)
        return cls([FeatureSample(np.zeros(d_z), 0.0)], alpha=wrench[None, :])

    @classmethod
    def zero(cls, d_z: int = FEATURE_DIM) -> "ResidualModel":
        return cls.constant(np.zeros(WRENCH_DIM), d_z=d_z)

    def with_alpha(self, alpha: np.ndarray) -> "ResidualModel":
        """Copy of the model with new coefficients; samples are shared."""
        new = object.__new__(ResidualModel)
        new.samples = self.samples
        new.W = self.W
        new.b = self.b
        new.m = self.m
        new.d_z = self.d_z
        new.sigma_w = self.sigma_w
        new.seed = self.seed
        new.b_h = self.b_h
        new.z_scale = self.z_scale
        new.alpha = np.asarray(alpha, dtype=float).reshape(self.m, WRENCH_DIM)
        return new

    def _scaled(self, z: np.ndarray) -> np.ndarray:
        return z if self.z_scale is None else z / self.z_scale

    def features(self, z) -> np.ndarray:
        """Feature vector [cos(w_i . z + b_i)]_i, shape (M,)."""
        z = self._scaled(np.asarray(z, dtype=float).reshape(self.d_z))
        return np.cos(self.W @ z + self.b)

    def predict6(self, z) -> np.ndarray:
        """Predicted wrench as a flat 6-vector, (1/M) alpha^T features."""
        return (self.features(z) @ self.alpha) / self.m

    # -- interface used by the MPC linearizer ------------------------------

    def wrench6(self, x_vec, u_vec, geom: StanceGeometry, t: float) -> np.ndarray:
        x = BodyState.from_vector(x_vec)
        z = build_feature_input(x, FootForces.from_vector(u_vec), geom)
        return self.predict6(z)

    def wrench6_batch(self, X, U, geom: StanceGeometry, t: float) -> np.ndarray:
        """Vectorized wrench6 over rows of X (B,12) and U (B,12)."""
        X = np.asarray(X, dtype=float)
        feet = np.broadcast_to(
            geom.foot_positions_body, (X.shape[0], 4, 3)
        )
        return self.wrench_rows(X, U, feet, t)

    def wrench_rows(self, X, U, feet, ts) -> np.ndarray:
        """Vectorized wrench over rows with per-row foot positions.

        X (B,12), U (B,12), feet (B,4,3); ts is ignored by this model.
        """
        X = np.asarray(X, dtype=float)
        U = np.asarray(U, dtype=float)
        f = U.reshape(-1, 4, 3)
        force_sum = f.sum(axis=1)
        torque = cross_rows(feet, f).sum(axis=1)
        R = rotation_matrices(X[:, 3:6])
        force_inertial = np.einsum("bij,bj->bi", R, force_sum)
        Z = np.hstack([X[:, 6:9], X[:, 3:6], X[:, 9:12], force_inertial, torque])
        if self.z_scale is not None:
            Z = Z / self.z_scale
        phi = np.cos(Z @ self.W.T + self.b)  # (B, M)
        return (phi @ self.alpha) / self.m

    # -- serialization ------------------------------------------------------

    def to_record(self) -> dict:
        """Flat record for run logs; samples are reconstructed from the seed."""
        if self.seed is None or self.sigma_w is None:
            raise InvalidConfig("only seeded models can be serialized")
        rec = {
            "seed": self.seed,
            "m": self.m,
            "d_z": self.d_z,
            "sigma_w": self.sigma_w,
            "alpha": self.alpha.tolist(),
        }
        if self.b_h is not None:
            rec["b_h"] = self.b_h
        if self.z_scale is not None:
            rec["z_scale"] = self.z_scale.tolist()
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "ResidualModel":
        model = cls.create(
            rec["m"],
            d_z=rec["d_z"],
            sigma_w=rec["sigma_w"],
            seed=rec["seed"],
            b_h=rec.get("b_h"),
            z_scale=None if "z_scale" not in rec else np.array(rec["z_scale"]),
        )
        return model.with_alpha(np.array(rec["alpha"]))


def predict(model: ResidualModel, z) -> ResidualWrench:
    """Model prediction at feature input z, split into force and torque."""
    return ResidualWrench.from_vector(model.predict6(z))
