"""Riccati equations through the Mobius linearization.

With ``x = (u, v)`` solving ``dx/dt = A x + b``,
``A = [[F1, F0], [F2, F3]]``, ``b = (F1 w, F2 w)``, ``u(0) = y0`` and
``v(0) = I``, the matrix ``y = (u + w) v^-1`` solves

    dy/dt = F0 + F1 y - y F2 y - y F3

wherever ``v`` is invertible. Problems written with ``+ y F2 y + y F3``
set ``convention="plus"``; their ``F2`` and ``F3`` are negated before
linearizing.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.optimize import brentq, minimize_scalar

from . import linalg as la
from .errors import DimensionMismatch, InputError, LegendreViolated, SingularV
from .mechsys import LinearODE, RiccatiBlocks
from .odecore import SolverParams, solve_history, success_probability, taylor_factor

#: sigma_min(v) below this fraction of the running max sigma_max(v) is singular
SINGULAR_V_RTOL = 1e-10


@dataclass(frozen=True)
class RiccatiProblem:
    """Constant-coefficient Riccati problem ``y' = F0 + F1 y -/+ y F2 y -/+ y F3``.

    In ``"bvp"`` mode ``y0`` is the value at ``T`` and the solution is
    wanted on ``[0, T]``. Vector inputs are promoted: ``F0`` and ``y0`` to
    columns, ``F2`` to a row, ``F3`` to ``1 x 1``.
    """

    F0: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    F3: np.ndarray
    y0: np.ndarray
    T: float
    mode: str = "ivp"
    w: Optional[np.ndarray] = None
    convention: str = "minus"

    def __post_init__(self):
        F1 = la.as_matrix(self.F1, "F1")
        N = F1.shape[0]
        if F1.shape != (N, N):
            raise DimensionMismatch(f"F1 must be square, got {F1.shape}")
        F0 = np.array(self.F0, dtype=float)
        if F0.ndim == 1:
            if F0.size != N:
                raise DimensionMismatch(f"F0 has length {F0.size}, expected {N}")
            F0 = F0.reshape(N, 1)
        F0 = la.as_matrix(F0, "F0")
        M = F0.shape[1]
        F2 = np.array(self.F2, dtype=float)
        if F2.ndim == 1 and M == 1:
            F2 = F2.reshape(1, -1)
        F2 = la.as_matrix(F2, "F2")
        F3 = la.as_matrix(self.F3, "F3")
        y0 = np.array(self.y0, dtype=float)
        if y0.ndim == 1 and M == 1:
            y0 = y0.reshape(-1, 1)
        y0 = la.as_matrix(y0, "y0")
        w = np.zeros((N, M)) if self.w is None else np.array(self.w, dtype=float)
        if w.ndim == 1 and M == 1:
            w = w.reshape(-1, 1)
        w = la.as_matrix(w, "w")
        for name, arr, shape in (
            ("F0", F0, (N, M)),
            ("F2", F2, (M, N)),
            ("F3", F3, (M, M)),
            ("y0", y0, (N, M)),
            ("w", w, (N, M)),
        ):
            if arr.shape != shape:
                raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {shape}")
        if self.mode not in ("ivp", "bvp"):
            raise InputError("mode must be 'ivp' or 'bvp'")
        if self.convention not in ("minus", "plus"):
            raise InputError("convention must be 'minus' or 'plus'")
        if not np.isfinite(self.T) or self.T < 0:
            raise InputError("T must be finite and nonnegative")
        for name, arr in (("F0", F0), ("F1", F1), ("F2", F2), ("F3", F3), ("y0", y0), ("w", w)):
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "T", float(self.T))

    @property
    def N(self):
        return self.F1.shape[0]

    @property
    def M(self):
        return self.F3.shape[0]

    def minus_blocks(self):
        """``(F0, F1, F2, F3)`` in the minus convention."""
        if self.convention == "plus":
            return self.F0, self.F1, -self.F2, -self.F3
        return self.F0, self.F1, self.F2, self.F3

    def rhs(self, y):
        """Right-hand side of the Riccati equation at ``y``."""
        F0, F1, F2, F3 = self.minus_blocks()
        return F0 + F1 @ y - y @ F2 @ y - y @ F3

    def blocks(self):
        F0, F1, F2, F3 = self.minus_blocks()
        return RiccatiBlocks(F0, F1, F2, F3, self.T)


def linearize(prob):
    """Linear ODE of the Mobius transformation in matrix mode.

    ``x0 = [y0; I]``, so a nonzero ``w`` starts ``y`` at ``y0 + w``. In ``"bvp"`` mode this is still the forward
    generator; the solvers integrate its reversal from ``[y(T); I]``.
    """
    F0, F1, F2, F3 = prob.minus_blocks()
    A = np.block([[F1, F0], [F2, F3]])
    b = np.vstack([F1 @ prob.w, F2 @ prob.w])
    x0 = np.vstack([prob.y0, np.eye(prob.M)])
    return LinearODE(A, b, x0, prob.T)


@dataclass
class RiccatiTrace:
    """Grid solution of a Riccati problem.

    ``y[i]`` is the solution at ``times[i]`` (ascending in physical time
    for both modes). ``kappa_V`` is ``max sigma_max(v) / min sigma_min(v)``
    over the grid. ``y_error_bound[i]`` bounds ``|y_hat - y|`` (Frobenius)
    from the truncation budget of the underlying linear solve.
    """

    times: np.ndarray
    y: np.ndarray
    sigma_min_v: np.ndarray
    sigma_max_v: np.ndarray
    kappa_V: float
    singular_flag: bool
    y_error_bound: np.ndarray
    history: object = None
    # vector-mode post-selection readout
    y_direction: Optional[np.ndarray] = None
    soln_error_budget: Optional[float] = None
    success: Optional[object] = None
    # true when w != 0 shifted the starting value to y0 + w
    initial_offset: bool = False

    @property
    def y_final(self):
        return self.y[-1]


def _working_ode(prob):
    ode = linearize(prob)
    if prob.mode == "bvp":
        return ode.reversed(ode.x0)
    return ode


def _trace(prob, params, vector):
    ode = _working_ode(prob)
    N, M = prob.N, prob.M
    if vector:
        if M != 1:
            raise DimensionMismatch("solve_vector requires M = 1")
        ode = LinearODE(ode.A, ode.b[:, 0], ode.x0[:, 0], ode.T)
    hist = solve_history(ode, params)
    steps = hist.steps.reshape(hist.steps.shape[0], N + M, M)
    factor = taylor_factor(hist.m, hist.params.k)
    sup_x = float(np.sqrt(max(np.sum(s * s) for s in steps)))
    dx = factor * sup_x
    times = hist.times
    ys, smin, smax, bounds = [], [], [], []
    running_max = 0.0
    singular = False
    prev_sign = 1.0
    for i, s in enumerate(steps):
        u, v = s[:N], s[N:]
        sv = np.linalg.svd(v, compute_uv=False)
        running_max = max(running_max, sv[0])
        smin.append(sv[-1])
        smax.append(sv[0])
        # det v changing sign between grid points means v went singular in between
        sign = np.sign(np.linalg.det(v))
        crossed = sign != 0 and sign != prev_sign
        prev_sign = sign
        if crossed or sv[-1] <= SINGULAR_V_RTOL * running_max:
            singular = True
            ys.append(np.full((N, M), np.nan))
            bounds.append(np.inf)
            break
        y = np.linalg.solve(v.T, (u + prob.w).T).T
        ys.append(y)
        vinv = 1.0 / sv[-1]
        denom = 1.0 - dx * vinv
        bounds.append(dx * (1.0 + np.linalg.norm(y)) * vinv / denom if denom > 0 else np.inf)
    n_done = len(ys)
    if prob.mode == "bvp":
        times = prob.T - times
    trace = RiccatiTrace(
        times=times[:n_done],
        y=np.array(ys),
        sigma_min_v=np.array(smin),
        sigma_max_v=np.array(smax),
        kappa_V=float(max(smax) / min(smin)) if min(smin) > 0 else float("inf"),
        singular_flag=singular,
        y_error_bound=np.array(bounds),
        history=hist,
        initial_offset=bool(np.any(prob.w)),
    )
    if singular:
        raise SingularV(
            f"v(t) lost rank near t = {trace.times[-1]:.6g} (sigma_min = {smin[-1]:.3e})",
            t=float(trace.times[-1]),
            trace=trace,
        )
    if prob.mode == "bvp":
        for name in ("times", "y", "sigma_min_v", "sigma_max_v", "y_error_bound"):
            setattr(trace, name, getattr(trace, name)[::-1].copy())
    return trace


def solve_vector(prob, params=None, marker=False):
    """Vector Riccati solve with the post-selection readout.

    ``marker=True`` adds the unit marker ``e_1`` as ``w`` (overriding
    ``prob.w``). The readout forms ``psi_T = x_m + (w, 0)``, projects on the
    first ``N`` components and normalizes (sign fixed by ``v(T)``). It
    reports the exact post-selection probability with its ``1/(108 g^2)``
    bound and the relative-error budget
    ``2 eps1 (1 + 1/|y| + 1/|u + w|)`` with ``eps1`` the relative
    truncation error of ``x(T)``.
    """
    params = params or SolverParams()
    if marker:
        w = np.zeros((prob.N, 1))
        w[0, 0] = 1.0
        prob = RiccatiProblem(prob.F0, prob.F1, prob.F2, prob.F3, prob.y0, prob.T, prob.mode, w, prob.convention)
    trace = _trace(prob, params, vector=True)
    hist = trace.history
    N = prob.N
    w_full = np.concatenate([prob.w[:, 0], [0.0]])
    psi = hist.final + w_full
    Ppsi = psi[:N]
    nrm = np.linalg.norm(Ppsi)
    v_T = hist.final[N]
    trace.y_direction = np.sign(v_T) * Ppsi / nrm if nrm > 0 else Ppsi
    trace.success = success_probability(hist, projector=np.arange(N), w=w_full)
    x_norm = np.linalg.norm(hist.final)
    eps1 = hist.error_bound / x_norm if x_norm > 0 else np.inf
    y_norm = np.linalg.norm(trace.y[-1] if prob.mode == "ivp" else trace.y[0])
    trace.soln_error_budget = float(2 * eps1 * (1 + 1 / y_norm + 1 / nrm)) if y_norm > 0 and nrm > 0 else float("inf")
    return trace


def solve_matrix(prob, params=None):
    """Matrix Riccati solve; every column of ``[y0; I]`` is evolved independently."""
    return _trace(prob, params or SolverParams(), vector=False)


@dataclass(frozen=True)
class JacobiSystem:
    """Second-variation coefficients of a constant-coefficient Lagrangian.

    ``Lqdq`` is ``L_{q' q}`` and ``Lqqd`` is ``L_{q q'}``; the latter
    defaults to the transpose of the former.
    """

    Lqq: np.ndarray
    Lqdq: np.ndarray
    Lqdqd: np.ndarray
    Lqqd: Optional[np.ndarray] = None

    def __post_init__(self):
        Lqq = la.as_matrix(self.Lqq, "Lqq")
        d = Lqq.shape[0]
        Lqdq = la.as_matrix(self.Lqdq, "Lqdq")
        Lqdqd = la.as_matrix(self.Lqdqd, "Lqdqd")
        Lqqd = Lqdq.T.copy() if self.Lqqd is None else la.as_matrix(self.Lqqd, "Lqqd")
        for name, arr in (("Lqq", Lqq), ("Lqdq", Lqdq), ("Lqdqd", Lqdqd), ("Lqqd", Lqqd)):
            if arr.shape != (d, d):
                raise DimensionMismatch(f"{name} must be {d}x{d}")
        if not np.allclose(Lqqd, Lqdq.T):
            raise DimensionMismatch("Lqqd must equal Lqdq^T")
        object.__setattr__(self, "Lqq", Lqq)
        object.__setattr__(self, "Lqdq", Lqdq)
        object.__setattr__(self, "Lqdqd", Lqdqd)
        object.__setattr__(self, "Lqqd", Lqqd)

    @property
    def d(self):
        return self.Lqq.shape[0]

    def coefficients(self):
        """``(A, B, C)`` of the linear Jacobi system ``U' = AU + BV``, ``V' = CU - A^T V``."""
        lam = np.linalg.eigvalsh(0.5 * (self.Lqdqd + self.Lqdqd.T))
        if not np.allclose(self.Lqdqd, self.Lqdqd.T) or lam.min() <= 0:
            raise LegendreViolated("L_{q'q'} must be symmetric positive definite")
        B = np.linalg.inv(self.Lqdqd)
        A = -B @ self.Lqdq
        C = self.Lqq - self.Lqqd @ B @ self.Lqdq
        return A, B, C

    def generator(self):
        A, B, C = self.coefficients()
        return np.block([[A, B], [C, -A.T]])


def _rank_ratio(X, d):
    # [U; V] never loses rank, so its norm is a safe scale for U
    return np.linalg.svd(X[:d], compute_uv=False)[-1] / np.linalg.norm(X, 2)


def conjugate_points(sys, interval, grid=2000, tol=1e-8):
    """Conjugate points of ``interval[0]`` inside ``(a, b]``.

    Integrates the Jacobi system from ``U(a) = 0``, ``V(a) = I`` (exact
    flow, constant coefficients) and returns the sorted times where
    ``U(t)`` is singular. Simple crossings are bracketed by a sign change
    of ``det U`` and refined by root bracketing; even-multiplicity zeros
    are caught as near-zero local minima of ``sigma_min(U) / |[U; V]|``.
    """
    a, b = map(float, interval)
    if b <= a:
        return []
    H = sys.generator()
    d = sys.d
    X0 = np.vstack([np.zeros((d, d)), np.eye(d)])

    def U(t):
        return (scipy.linalg.expm(H * (t - a)) @ X0)[:d]

    def det(t):
        return float(np.linalg.det(U(t)))

    def ratio(t):
        X = scipy.linalg.expm(H * (t - a)) @ X0
        return _rank_ratio(X, d)

    ts = np.linspace(a, b, grid + 1)[1:]
    step = scipy.linalg.expm(H * (ts[1] - ts[0])) if len(ts) > 1 else None
    X = scipy.linalg.expm(H * (ts[0] - a)) @ X0
    dets, rats = [], []
    for i, t in enumerate(ts):
        if i > 0:
            X = step @ X
        dets.append(np.linalg.det(X[:d]))
        rats.append(_rank_ratio(X, d))
    dets = np.array(dets)
    rats = np.array(rats)
    found = []
    for i in range(len(ts) - 1):
        if dets[i] == 0.0:
            found.append(ts[i])
        elif dets[i] * dets[i + 1] < 0:
            found.append(brentq(det, ts[i], ts[i + 1], xtol=tol * 1e-4, rtol=4 * np.finfo(float).eps))
    floor = 10.0 / grid
    for i in range(1, len(ts) - 1):
        if rats[i] <= rats[i - 1] and rats[i] <= rats[i + 1] and rats[i] < floor:
            res = minimize_scalar(ratio, bounds=(ts[i - 1], ts[i + 1]), method="bounded", options={"xatol": tol * 1e-2})
            if res.fun < 1e-6 and not any(abs(res.x - c) < 1e-6 for c in found):
                found.append(float(res.x))
    if dets[-1] == 0.0 or rats[-1] < 1e-12:
        if not any(abs(ts[-1] - c) < 1e-6 for c in found):
            found.append(float(ts[-1]))
    return sorted(float(c) for c in found)
