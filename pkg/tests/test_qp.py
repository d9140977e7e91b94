import numpy as np
import pytest

from quadmpc.qp import DenseQp, SolverStatus, solve_qp

from oracles import solve_qp_reference


def random_psd(rng, n, cond=50.0):
    Q = np.linalg.qr(rng.normal(0, 1, (n, n)))[0]
    eig = np.geomspace(1.0, cond, n)
    return Q @ np.diag(eig) @ Q.T


class TestBasics:
    def test_unconstrained_equals_linear_solve(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(2, 15))
            H = random_psd(rng, n)
            g = rng.normal(0, 1, n)
            res = solve_qp(DenseQp(H=H, g=g))
            assert res.status == SolverStatus.OPTIMAL
            assert np.max(np.abs(res.x - np.linalg.solve(H, -g))) < 1e-8

    def test_scalar_box(self):
        # min (x-2)^2 s.t. x <= 1  ->  x = 1
        qp = DenseQp(
            H=np.array([[2.0]]),
            g=np.array([-4.0]),
            C=np.array([[1.0]]),
            d=np.array([1.0]),
        )
        res = solve_qp(qp)
        assert res.status == SolverStatus.OPTIMAL
        assert res.x[0] == pytest.approx(1.0, abs=1e-10)

    def test_inactive_constraint_ignored(self):
        qp = DenseQp(
            H=np.array([[2.0]]),
            g=np.array([-4.0]),
            C=np.array([[1.0]]),
            d=np.array([10.0]),
        )
        res = solve_qp(qp)
        assert res.x[0] == pytest.approx(2.0, abs=1e-10)
        assert res.active_set == []

    def test_equality_constrained(self):
        # min x'x s.t. x0 + x1 = 1 -> x = [0.5, 0.5]
        qp = DenseQp(
            H=2 * np.eye(2),
            g=np.zeros(2),
            E=np.array([[1.0, 1.0]]),
            f=np.array([1.0]),
        )
        res = solve_qp(qp)
        assert np.allclose(res.x, [0.5, 0.5], atol=1e-10)

    def test_inconsistent_equalities_infeasible(self):
        qp = DenseQp(
            H=np.eye(2),
            g=np.zeros(2),
            E=np.array([[1.0, 0.0], [1.0, 0.0]]),
            f=np.array([0.0, 1.0]),
        )
        res = solve_qp(qp)
        assert res.status == SolverStatus.INFEASIBLE

    def test_empty_problem(self):
        res = solve_qp(DenseQp(H=np.zeros((0, 0)), g=np.zeros(0)))
        assert res.status == SolverStatus.OPTIMAL
        assert res.x.size == 0

    def test_warm_start_reproduces_solution(self):
        rng = np.random.default_rng(1)
        H = random_psd(rng, 8)
        g = rng.normal(0, 1, 8)
        C = rng.normal(0, 1, (12, 8))
        d = rng.normal(0.2, 0.5, 12)
        cold = solve_qp(DenseQp(H=H, g=g, C=C, d=d))
        warm = solve_qp(DenseQp(H=H, g=g, C=C, d=d), warm_active=cold.active_set)
        assert warm.iterations <= cold.iterations
        assert np.max(np.abs(warm.x - cold.x)) < 1e-10


class TestAgainstReference:
    def test_random_inequality_qps(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            n = int(rng.integers(2, 12))
            m = int(rng.integers(1, 2 * n))
            H = random_psd(rng, n)
            g = rng.normal(0, 2, n)
            C = rng.normal(0, 1, (m, n))
            d = rng.normal(0.5, 0.5, m)  # keeps x=0 often feasible; not always
            res = solve_qp(DenseQp(H=H, g=g, C=C, d=d))
            assert res.status == SolverStatus.OPTIMAL
            x_ref, obj_ref = solve_qp_reference(H, g, C, d)
            scale = max(1.0, abs(obj_ref))
            assert abs(res.objective - obj_ref) / scale < 1e-6
            assert np.max(C @ res.x - d) <= 1e-8

    def test_kkt_residuals_at_optimum(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = int(rng.integers(2, 10))
            m = int(rng.integers(1, n + 4))
            H = random_psd(rng, n)
            g = rng.normal(0, 2, n)
            C = rng.normal(0, 1, (m, n))
            d = rng.normal(0.5, 0.5, m)
            res = solve_qp(DenseQp(H=H, g=g, C=C, d=d))
            assert res.status == SolverStatus.OPTIMAL
            # stationarity
            grad = H @ res.x + g
            if res.active_set:
                grad = grad + C[res.active_set].T @ res.lam
                assert np.min(res.lam) >= -1e-9  # dual feasibility
            assert np.max(np.abs(grad)) < 1e-6
            assert np.max(C @ res.x - d) <= 1e-6  # primal feasibility
