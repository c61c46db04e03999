"""Finite-horizon linear quadratic regulator through the matrix Riccati solver.

For ``x' = F x + G u`` and cost
``J = int_0^tf (u^T R u + x^T Q x) dt + x(tf)^T Pf x(tf)`` the optimal
feedback is ``u = -R^-1 G^T P(t) x`` with

    P' = P G R^-1 G^T P - P F - F^T P - Q,    P(tf) = Pf,

and the optimal cost is ``x0^T P(0) x0``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from . import linalg as la
from .errors import DimensionMismatch, InputError, SingularR
from .mechsys import LinearODE
from .odecore import SolverParams, reverse_evolve
from .riccati import RiccatiProblem, solve_matrix

#: default number of Riccati grid steps (kept even for the closed-loop RK4)
DEFAULT_GRID = 2000


@dataclass(frozen=True)
class LQRProblem:
    F: np.ndarray
    G: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Pf: np.ndarray
    tf: float
    x0: np.ndarray

    def __post_init__(self):
        F = la.as_matrix(self.F, "F")
        n = F.shape[0]
        G = np.array(self.G, dtype=float)
        if G.ndim == 1:
            if G.size != n:
                raise DimensionMismatch(f"G has length {G.size}, expected {n}")
            G = G.reshape(n, 1)
        G = la.as_matrix(G, "G")
        p = G.shape[1]
        Q = la.as_matrix(self.Q, "Q")
        R = la.as_matrix(self.R, "R")
        Pf = la.as_matrix(self.Pf, "Pf")
        x0 = np.array(self.x0, dtype=float).reshape(-1)
        for name, arr, shape in (
            ("F", F, (n, n)),
            ("G", G, (n, p)),
            ("Q", Q, (n, n)),
            ("R", R, (p, p)),
            ("Pf", Pf, (n, n)),
            ("x0", x0, (n,)),
        ):
            if arr.shape != shape:
                raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {shape}")
        if not np.isfinite(self.tf) or self.tf <= 0:
            raise InputError("tf must be positive and finite")
        for name, S in (("Q", Q), ("Pf", Pf)):
            if np.any(S):
                la.sym_eig(S, name, strict=False)
        if not np.allclose(R, R.T):
            raise SingularR("R is not symmetric")
        lam = np.linalg.eigvalsh(0.5 * (R + R.T))
        if lam.min() <= la.SINGULAR_RTOL * max(abs(lam.max()), 1e-300):
            raise SingularR("R must be positive definite")
        for name, arr in (("F", F), ("G", G), ("Q", Q), ("R", R), ("Pf", Pf), ("x0", x0)):
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "tf", float(self.tf))

    @property
    def n(self):
        return self.F.shape[0]

    @property
    def S(self):
        """``G R^-1 G^T``."""
        return self.G @ np.linalg.solve(self.R, self.G.T)

    def riccati_rhs(self, P):
        return P @ self.S @ P - P @ self.F - self.F.T @ P - self.Q


def reduce_to_riccati(prob):
    """Boundary-value Riccati problem whose solution is ``P(t)``.

    In the minus convention ``y' = F0 + F1 y - y F2 y - y F3`` the LQR
    equation has ``F0 = -Q``, ``F1 = -F^T``, ``F2 = -G R^-1 G^T`` and
    ``F3 = F``.
    """
    return RiccatiProblem(-prob.Q, -prob.F.T, -prob.S, prob.F, prob.Pf, prob.tf, mode="bvp")


@dataclass
class LQRSolution:
    """``P``, ``K``, ``x`` and ``u`` on the grid ``times``; ``J`` by trapezoidal quadrature."""

    times: np.ndarray
    P: np.ndarray
    K: np.ndarray
    x: np.ndarray
    u: np.ndarray
    J: float
    value: float
    riccati: object = None
    two_pass_defect: Optional[float] = None

    @property
    def value_gap(self):
        """``|J - x0^T P(0) x0|``."""
        return abs(self.J - self.value)

    @property
    def symmetry_defect(self):
        return float(max(np.abs(P - P.T).max() for P in self.P))


def _closed_loop(prob, times, P):
    # RK4 with step 2h; the odd grid points supply the midpoint gains
    Rinv_Gt = np.linalg.solve(prob.R, prob.G.T)
    Acl = [prob.F - prob.G @ (Rinv_Gt @ Pi) for Pi in P]
    xs = [prob.x0]
    x = prob.x0
    for i in range(0, len(times) - 2, 2):
        H = times[i + 2] - times[i]
        k1 = Acl[i] @ x
        k2 = Acl[i + 1] @ (x + 0.5 * H * k1)
        k3 = Acl[i + 1] @ (x + 0.5 * H * k2)
        k4 = Acl[i + 2] @ (x + H * k3)
        x = x + H / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        xs.append(x)
    return np.array(xs)


def trajectory_cost(prob, times, x, u):
    """Trapezoidal running cost plus the terminal term."""
    run = np.einsum("ti,ij,tj->t", x, prob.Q, x) + np.einsum("ti,ij,tj->t", u, prob.R, u)
    return float(np.trapezoid(run, times) + x[-1] @ prob.Pf @ x[-1])


def solve_lqr(prob, params=None, grid=DEFAULT_GRID, refine=1, two_pass=False):
    """Optimal feedback, closed-loop trajectory and cost.

    The Riccati problem is integrated backward from ``Pf`` on ``grid *
    refine`` steps; the closed loop is then simulated forward from ``x0``.
    ``two_pass`` additionally recovers ``P(0)`` by reverse evolution of the
    forward linearization, re-runs it forward to ``[Pf; I]`` and records
    the larger relative discrepancy.
    """
    steps = int(grid) * int(refine)
    steps += steps % 2
    params = params or SolverParams()
    if params.m is None and params.h is None:
        params = SolverParams(epsilon=params.epsilon, m=max(steps, 2), k=params.k)
    rp = reduce_to_riccati(prob)
    trace = solve_matrix(rp, params)
    times, P = trace.times, trace.y
    if len(times) % 2 == 0:
        raise InputError("Riccati grid must have an even number of steps")
    Rinv_Gt = np.linalg.solve(prob.R, prob.G.T)
    K = np.array([Rinv_Gt @ Pi for Pi in P])
    x = _closed_loop(prob, times, P)
    t2, K2 = times[::2], K[::2]
    u = -np.einsum("tij,tj->ti", K2, x)
    J = trajectory_cost(prob, t2, x, u)
    sol = LQRSolution(
        times=t2,
        P=P[::2],
        K=K2,
        x=x,
        u=u,
        J=J,
        value=float(prob.x0 @ P[0] @ prob.x0),
        riccati=trace,
    )
    if two_pass:
        n = prob.n
        A = np.block([[-prob.F.T, -prob.Q], [-prob.S, prob.F]])
        fwd = LinearODE(A, np.zeros((2 * n, n)), np.vstack([prob.Pf, np.eye(n)]), prob.tf)
        rev = reverse_evolve(fwd, fwd.x0, params)
        P0 = np.linalg.solve(rev.x0[n:].T, rev.x0[:n].T).T
        rel_P0 = np.linalg.norm(P0 - P[0]) / max(np.linalg.norm(P[0]), 1e-300)
        rel_fwd = rev.defect / np.linalg.norm(fwd.x0)
        sol.two_pass_defect = float(max(rel_P0, rel_fwd))
    return sol


def piecewise_cost(prob, pieces):
    """Exact cost of an open-loop control constant on equal subintervals.

    ``pieces`` is ``(N, p)``. Each interval is integrated with Van Loan's
    block exponential for the augmented state ``(x, u)``.
    """
    pieces = np.atleast_2d(np.asarray(pieces, dtype=float))
    n, p = prob.n, prob.G.shape[1]
    tau = prob.tf / len(pieces)
    H = np.zeros((n + p, n + p))
    H[:n, :n] = prob.F
    H[:n, n:] = prob.G
    W = scipy.linalg.block_diag(prob.Q, prob.R)
    C = np.block([[-H.T, W], [np.zeros_like(H), H]])
    E = scipy.linalg.expm(C * tau)
    Phi = E[n + p :, n + p :]
    Gram = Phi.T @ E[: n + p, n + p :]
    x = prob.x0.copy()
    J = 0.0
    for u in pieces:
        xi = np.concatenate([x, u])
        J += xi @ Gram @ xi
        x = (Phi @ xi)[:n]
    return float(J + x @ prob.Pf @ x)


def perturbed_costs(sol, prob, samples=20, pieces=50, scale=0.1, seed=0):
    """Costs of random piecewise-constant perturbations of the optimal control."""
    rng = np.random.default_rng(seed)
    edges = np.linspace(0.0, prob.tf, pieces + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    base = np.column_stack([np.interp(mids, sol.times, sol.u[:, j]) for j in range(sol.u.shape[1])])
    amp = scale * (1.0 + np.abs(sol.u).max())
    return [piecewise_cost(prob, base + amp * rng.standard_normal(base.shape)) for _ in range(samples)]
