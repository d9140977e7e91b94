"""Built-in self checks for the `verify` CLI subcommand.

A fast, dependency-free subset of the test suite: dynamics identities,
gradient agreement with finite differences, residual round trips, and QP
sanity problems. Each check prints one pass/fail line.
"""

from __future__ import annotations

import numpy as np

from .extractor import residual_from_transition
from .features import ResidualModel
from .learner import LearnerConfig, gradient, loss, ogd_step
from .mpc import linearize_dynamics
from .qp import DenseQp, SolverStatus, solve_qp
from .rigid_body import (
    BodyParams,
    BodyState,
    FootForces,
    ResidualWrench,
    StanceGeometry,
    continuous_dynamics,
    discrete_step,
    rotation_matrix,
)


def _params() -> BodyParams:
    return BodyParams(mass=13.0, inertia=np.diag([0.025, 0.10, 0.11]))


def _geom() -> StanceGeometry:
    return StanceGeometry(
        np.array(
            [
                [0.19, 0.13, -0.3],
                [0.19, -0.13, -0.3],
                [-0.19, 0.13, -0.3],
                [-0.19, -0.13, -0.3],
            ]
        )
    )


def _random_state(rng) -> BodyState:
    return BodyState(
        p=rng.normal(0, 1, 3),
        theta=rng.uniform(-0.4, 0.4, 3),
        v=rng.normal(0, 1, 3),
        omega=rng.normal(0, 1, 3),
    )


def check_hover_equilibrium() -> bool:
    params, geom = _params(), _geom()
    x = BodyState(p=[0, 0, 0.3], theta=[0, 0, 0], v=[0, 0, 0], omega=[0, 0, 0])
    u = FootForces(np.tile([0.0, 0.0, params.mass * 9.81 / 4], (4, 1)))
    xdot = continuous_dynamics(x, u, geom, params, ResidualWrench.zero())
    return bool(np.max(np.abs(xdot)) < 1e-10)


def check_rotation_orthonormal(n: int = 200) -> bool:
    rng = np.random.default_rng(0)
    for _ in range(n):
        R = rotation_matrix(rng.uniform(-np.pi, np.pi, 3))
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-12:
            return False
        if abs(np.linalg.det(R) - 1.0) > 1e-12:
            return False
    return True


def check_residual_roundtrip(n: int = 50) -> bool:
    rng = np.random.default_rng(1)
    params, geom = _params(), _geom()
    for _ in range(n):
        x = _random_state(rng)
        u = FootForces(rng.normal(0, 30, (4, 3)))
        h = ResidualWrench(rng.normal(0, 50, 3), rng.normal(0, 5, 3))
        x_next = discrete_step(x, u, geom, params, h, 0.03)
        back = residual_from_transition(x, u, x_next, geom, params, 0.03)
        if np.max(np.abs(back.as_vector() - h.as_vector())) > 1e-9:
            return False
    return True


def check_gradient_fd(n: int = 20) -> bool:
    rng = np.random.default_rng(2)
    for _ in range(n):
        model = ResidualModel.create(8, d_z=15, sigma_w=0.3, seed=int(rng.integers(1 << 30)))
        model = model.with_alpha(rng.normal(0, 1, (8, 6)))
        z = rng.normal(0, 1, 15)
        target = rng.normal(0, 1, 6)
        g = gradient(model, z, target)
        eps = 1e-6
        for _ in range(5):
            i = int(rng.integers(8))
            j = int(rng.integers(6))
            a_hi = model.alpha.copy()
            a_hi[i, j] += eps
            a_lo = model.alpha.copy()
            a_lo[i, j] -= eps
            fd = (
                loss(model.with_alpha(a_hi), z, target)
                - loss(model.with_alpha(a_lo), z, target)
            ) / (2 * eps)
            if abs(fd - g[i, j]) > 1e-6 * max(1.0, abs(fd)):
                return False
    return True


def check_ogd_convergence() -> bool:
    rng = np.random.default_rng(3)
    model = ResidualModel.create(12, d_z=15, sigma_w=0.3, seed=5)
    z = rng.normal(0, 1, 15)
    target = rng.normal(0, 1, 6)
    cfg = LearnerConfig(eta=0.05)
    prev = loss(model, z, target)
    for _ in range(4000):
        model = ogd_step(model, z, target, cfg)
        cur = loss(model, z, target)
        if cur > prev + 1e-12:
            return False
        prev = cur
    return prev < 1e-8


def check_qp_basics() -> bool:
    H = np.diag([2.0, 4.0])
    g = np.array([-2.0, -8.0])
    res = solve_qp(DenseQp(H=H, g=g))
    if np.max(np.abs(res.x - np.linalg.solve(H, -g))) > 1e-8:
        return False
    # min (x-2)^2 s.t. x <= 1
    res = solve_qp(
        DenseQp(
            H=np.array([[2.0]]),
            g=np.array([-4.0]),
            C=np.array([[1.0]]),
            d=np.array([1.0]),
        )
    )
    if abs(res.x[0] - 1.0) > 1e-10 or res.status != SolverStatus.OPTIMAL:
        return False
    # inconsistent equalities
    res = solve_qp(
        DenseQp(
            H=np.eye(1),
            g=np.zeros(1),
            E=np.array([[1.0], [1.0]]),
            f=np.array([0.0, 1.0]),
        )
    )
    return res.status == SolverStatus.INFEASIBLE


def check_linearization_fd() -> bool:
    params, geom = _params(), _geom()
    rng = np.random.default_rng(4)
    model = ResidualModel.create(10, d_z=15, sigma_w=0.05, seed=9)
    model = model.with_alpha(rng.normal(0, 2, (10, 6)))
    x = _random_state(rng)
    u = rng.normal(0, 20, 12)
    dt = 0.03
    A, B, c = linearize_dynamics(x, u, geom, params, model, dt)

    def step(xv, uv):
        X = xv[None, :]
        U = uv[None, :]
        h = model.wrench6_batch(X, U, geom, 0.0)[0]
        xd = continuous_dynamics(
            BodyState.from_vector(xv),
            FootForces.from_vector(uv),
            geom,
            params,
            ResidualWrench.from_vector(h),
        )
        return xv + dt * xd

    eps = 1e-6
    x_vec = x.as_vector()
    for _ in range(6):
        i = int(rng.integers(12))
        dx = np.zeros(12)
        dx[i] = eps
        fd = (step(x_vec + dx, u) - step(x_vec - dx, u)) / (2 * eps)
        if np.max(np.abs(fd - A[:, i])) > 1e-4 * max(1.0, np.max(np.abs(fd))):
            return False
        du = np.zeros(12)
        du[i] = eps
        fd = (step(x_vec, u + du) - step(x_vec, u - du)) / (2 * eps)
        if np.max(np.abs(fd - B[:, i])) > 1e-4 * max(1.0, np.max(np.abs(fd))):
            return False
    return True


CHECKS = [
    ("hover equilibrium derivative", check_hover_equilibrium),
    ("rotation orthonormality", check_rotation_orthonormal),
    ("residual round trip", check_residual_roundtrip),
    ("analytic gradient vs finite differences", check_gradient_fd),
    ("gradient descent convergence", check_ogd_convergence),
    ("qp solver basics", check_qp_basics),
    ("dynamics linearization vs finite differences", check_linearization_fd),
]


def run_all(quick: bool = False) -> bool:
    ok = True
    for name, fn in CHECKS:
        passed = fn()
        print(f"[{'PASS' if passed else 'FAIL'}] {name}")
        ok = ok and passed
    return ok
