import math

import numpy as np
import pytest

from oracles import lqr_riccati_rk4, random_psd, random_spd, rk4
from quadctl import control
from quadctl.control import LQRProblem
from quadctl.errors import DimensionMismatch, InputError, NotPositiveDefinite, SingularR


def scalar_tanh(x0=1.0):
    return LQRProblem([[0.0]], [[1.0]], [[1.0]], [[1.0]], [[0.0]], 2.0, [x0])


def double_integrator():
    return LQRProblem([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], np.eye(2), [[1.0]], np.zeros((2, 2)), 5.0, [1.0, 0.0])


def random_problem(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    p = int(rng.integers(1, min(n, 3) + 1))
    return LQRProblem(
        rng.standard_normal((n, n)) * 0.5,
        rng.standard_normal((n, p)),
        random_psd(rng, n),
        random_spd(rng, p, 0.5, 2.0),
        random_psd(rng, n, 0.5),
        float(rng.uniform(0.5, 3.0)),
        rng.standard_normal(n),
    )


def test_reduction_blocks():
    prob = double_integrator()
    rp = control.reduce_to_riccati(prob)
    assert rp.mode == "bvp"
    # y' = F0 + F1 y - y F2 y - y F3 reproduces P' = P S P - P F - F^T P - Q
    P = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert np.allclose(rp.rhs(P), prob.riccati_rhs(P))


def test_scalar_tanh_trace():
    sol = control.solve_lqr(scalar_tanh())
    assert np.allclose([P[0, 0] for P in sol.P], np.tanh(2.0 - sol.times), atol=1e-8)
    assert sol.P[-1][0, 0] == 0.0


def test_scalar_tanh_cost():
    sol = control.solve_lqr(scalar_tanh())
    assert sol.value == pytest.approx(math.tanh(2.0), abs=1e-8)
    assert sol.J == pytest.approx(math.tanh(2.0), abs=1e-5)
    assert np.allclose(sol.u[:, 0], -sol.K[:, 0, 0] * sol.x[:, 0])


def test_zero_cost_problem():
    prob = LQRProblem([[0.2, 1.0], [-1.0, 0.0]], [[0.0], [1.0]], np.zeros((2, 2)), [[2.0]], np.zeros((2, 2)), 1.0, [3.0, -1.0])
    sol = control.solve_lqr(prob)
    assert np.all(sol.P == 0) and np.all(sol.u == 0) and sol.J == 0.0


def test_double_integrator_matches_rk4():
    prob = double_integrator()
    sol = control.solve_lqr(prob)
    ref = lqr_riccati_rk4(prob.F, prob.G, prob.Q, prob.R, prob.Pf, prob.tf)
    assert np.max(np.abs(sol.P[0] - ref)) <= 1e-6
    assert abs(sol.J - sol.value) <= 1e-5


def test_double_integrator_beats_perturbations():
    prob = double_integrator()
    sol = control.solve_lqr(prob)
    costs = control.perturbed_costs(sol, prob, samples=20)
    assert len(costs) == 20 and min(costs) > sol.J


def test_piecewise_cost_against_rk4():
    prob = double_integrator()
    pieces = np.array([[0.5], [-1.0], [0.25], [0.0], [2.0]])
    tau = prob.tf / len(pieces)
    z = np.concatenate([prob.x0, [0.0]])
    for u in pieces:
        def f(_, s, u=u):
            x = s[:2]
            return np.concatenate([prob.F @ x + prob.G @ u, [x @ prob.Q @ x + u @ prob.R @ u]])
        z = rk4(f, z, 0.0, tau, 2000)
    assert control.piecewise_cost(prob, pieces) == pytest.approx(z[2] + z[:2] @ prob.Pf @ z[:2], rel=1e-10)


def test_boundary_value_exact():
    prob = random_problem(3)
    sol = control.solve_lqr(prob)
    assert np.array_equal(sol.P[-1], prob.Pf)


def test_refine_multiplies_grid():
    prob = scalar_tanh()
    a = control.solve_lqr(prob, grid=100)
    b = control.solve_lqr(prob, grid=100, refine=4)
    assert len(b.times) == 4 * (len(a.times) - 1) + 1
    assert abs(b.J - math.tanh(2.0)) < abs(a.J - math.tanh(2.0))


@pytest.mark.parametrize("seed", range(12))
def test_random_instance_invariants(seed):
    prob = random_problem(seed)
    sol = control.solve_lqr(prob)
    assert sol.symmetry_defect <= 1e-9
    for P in sol.P:
        assert np.linalg.eigvalsh(0.5 * (P + P.T)).min() >= -1e-9
    assert sol.value_gap <= 1e-4 * (1 + sol.J)
    # re-integrate forward from P(0)
    Pf = rk4(lambda _, P: prob.riccati_rhs(P), sol.P[0], 0.0, prob.tf, 20000)
    assert np.max(np.abs(Pf - prob.Pf)) <= 1e-5


@pytest.mark.parametrize("seed", range(4))
def test_random_instance_optimality(seed):
    prob = random_problem(100 + seed)
    sol = control.solve_lqr(prob)
    assert all(c >= sol.J for c in control.perturbed_costs(sol, prob, samples=20, seed=seed))


def test_two_pass():
    prob = double_integrator()
    sol = control.solve_lqr(prob, two_pass=True)
    assert sol.two_pass_defect is not None and sol.two_pass_defect <= 1e-8
    assert control.solve_lqr(prob).two_pass_defect is None


def test_singular_R():
    with pytest.raises(SingularR):
        LQRProblem([[0.0]], [[1.0]], [[1.0]], [[0.0]], [[0.0]], 1.0, [1.0])
    with pytest.raises(SingularR):
        LQRProblem(np.eye(2), np.eye(2), np.eye(2), [[1.0, 2.0], [2.0, 1.0]], np.zeros((2, 2)), 1.0, [1.0, 0.0])


def test_indefinite_Q_rejected():
    with pytest.raises(NotPositiveDefinite):
        LQRProblem([[0.0]], [[1.0]], [[-1.0]], [[1.0]], [[0.0]], 1.0, [1.0])


def test_shape_and_horizon_checks():
    with pytest.raises(DimensionMismatch):
        LQRProblem(np.eye(2), [[1.0]], np.eye(2), [[1.0]], np.zeros((2, 2)), 1.0, [1.0, 0.0])
    with pytest.raises(DimensionMismatch):
        LQRProblem(np.eye(2), [[1.0], [0.0]], np.eye(2), [[1.0]], np.zeros((2, 2)), 1.0, [1.0])
    with pytest.raises(InputError):
        LQRProblem([[0.0]], [[1.0]], [[1.0]], [[1.0]], [[0.0]], 0.0, [1.0])
