"""Desk-scale emulation of a history-state linear ODE solver.

Time stepping uses the order-``k`` truncated Taylor series of the
propagator on ``m`` steps of size ``h``. The same steps are produced two
ways: by the per-step recurrence and by a direct sparse solve of the block
lower-triangular system ``L z = z_in`` that encodes all steps and Taylor
levels at once. The history state stores ``x_0 .. x_m`` and pads the tail
with ``m`` copies of ``x_m``.
"""

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from . import linalg as la
from .errors import (
    DimensionMismatch,
    NoVelocityBlock,
    NonUnitMasses,
    InputError,
    SingularL,
    StepOverflow,
    ZeroFinalState,
)
from .mechsys import Basis, LinearODE, assemble, exp_jq, from_basis, to_basis, velocity_weights

#: largest number of L-system unknowns (m (k+1) n) assembled explicitly
L_UNKNOWNS_MAX = 20000
OVERFLOW = 1e300
#: relative agreement demanded between the two solve paths
PATH_RTOL = 1e-10


def taylor_factor(m, k):
    """Global truncation factor ``m e^3 / (k+1)!``."""
    return m * math.e**3 / math.factorial(k + 1)


def smallest_k(m, epsilon):
    k = 1
    while taylor_factor(m, k) > epsilon:
        k += 1
    return k


@dataclass(frozen=True)
class SolverParams:
    """Step size, step count, Taylor order and readout noise.

    Unset ``h``, ``m`` and ``k`` are derived from the ODE by :meth:`resolve`:
    ``m = max(1, ceil(T |A|))``, ``h = T / m`` and ``k`` the smallest order
    with ``m e^3 / (k+1)! <= epsilon``.
    """

    epsilon: float = 1e-8
    h: Optional[float] = None
    m: Optional[int] = None
    k: Optional[int] = None
    gamma: float = 0.0
    noise: str = "worst"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise InputError("epsilon must lie in (0, 1)")
        if not 0.0 <= self.gamma < 1.0:
            raise InputError("gamma must lie in [0, 1)")
        if self.k is not None and self.k < 1:
            raise InputError("Taylor order k must be at least 1")
        if self.m is not None and self.m < 1:
            raise InputError("step count m must be at least 1")
        if self.h is not None and self.h < 0:
            raise InputError("step size h must be nonnegative")
        if self.noise not in ("worst", "random"):
            raise InputError("noise must be 'worst' or 'random'")

    def resolve(self, ode):
        T = ode.T
        if self.m is not None:
            m = int(self.m)
        elif self.h is not None:
            if self.h == 0 and T > 0:
                raise InputError("step size h must be positive")
            m = max(1, math.ceil(T / self.h - 1e-12)) if self.h > 0 else 1
        else:
            m = max(1, math.ceil(T * la.norm2(ode.A) - 1e-12))
        h = T / m
        k = self.k if self.k is not None else smallest_k(m, self.epsilon)
        return replace(self, h=h, m=m, k=int(k))


@dataclass
class LSystem:
    """Sparse block system whose solution holds every step and Taylor level.

    Unknown ``(i, j)`` (step ``i < m``, Taylor level ``j <= k``) sits at
    offset ``(i (k+1) + j) n``; the ``m`` padding slots follow.
    """

    L: scipy.sparse.coo_matrix
    z_in: np.ndarray
    n: int
    m: int
    k: int
    ode: LinearODE
    kappa: Optional[float] = None

    @property
    def unknowns(self):
        return self.L.shape[0]

    def slot(self, i):
        """Offset of time slot ``i`` (Taylor level 0) for ``0 <= i < 2m``."""
        if i < self.m:
            return i * (self.k + 1) * self.n
        return (self.m * (self.k + 1) + (i - self.m)) * self.n

    def extract_steps(self, z):
        n = self.n
        out = [z[self.slot(i) : self.slot(i) + n] for i in range(self.m + 1)]
        return np.array(out)


def assemble_L(ode, params):
    """Build ``L`` and ``z_in`` for a vector-mode ODE (or one column)."""
    p = params.resolve(ode)
    n, m, k, h = ode.n, p.m, p.k, p.h
    Ah = ode.A * h
    b = ode.b if ode.b.ndim == 1 else None
    size = (m * (k + 1) + m) * n
    rows, cols, vals = [], [], []

    def put_identity(r0, c0, scale=1.0):
        idx = np.arange(n)
        rows.append(r0 + idx)
        cols.append(c0 + idx)
        vals.append(np.full(n, scale))

    def put_block(r0, c0, block):
        r, c = np.nonzero(block)
        rows.append(r0 + r)
        cols.append(c0 + c)
        vals.append(block[r, c])

    sys_ = LSystem(None, None, n, m, k, ode)
    off = lambda i, j: (i * (k + 1) + j) * n
    for i in range(m):
        put_identity(off(i, 0), off(i, 0))
        if i > 0:
            for j in range(k + 1):
                put_identity(off(i, 0), off(i - 1, j), -1.0)
        for j in range(1, k + 1):
            put_identity(off(i, j), off(i, j))
            put_block(off(i, j), off(i, j - 1), -Ah / j)
    for slot in range(m, 2 * m):
        r0 = sys_.slot(slot)
        put_identity(r0, r0)
        if slot == m:
            for j in range(k + 1):
                put_identity(r0, off(m - 1, j), -1.0)
        else:
            put_identity(r0, sys_.slot(slot - 1), -1.0)
    L = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )

    def rhs(x0, bvec):
        z = np.zeros(size)
        z[:n] = x0
        if bvec is not None:
            for i in range(m):
                z[off(i, 1) : off(i, 1) + n] = h * bvec
        return z

    if ode.matrix_mode:
        bm = ode.b_matrix()
        z_in = np.stack([rhs(ode.x0[:, c], bm[:, c]) for c in range(ode.x0.shape[1])], axis=1)
    else:
        z_in = rhs(ode.x0, b)
    sys_.L = L
    sys_.z_in = z_in
    return sys_


def solve_L(sys_):
    """Direct sparse solve of ``L z = z_in``; returns the stored steps."""
    try:
        lu = scipy.sparse.linalg.splu(sys_.L.tocsc())
    except RuntimeError as exc:
        raise SingularL(str(exc)) from exc
    if sys_.z_in.ndim == 1:
        z = lu.solve(sys_.z_in)
        steps = sys_.extract_steps(z)
    else:
        cols = [sys_.extract_steps(lu.solve(np.ascontiguousarray(sys_.z_in[:, c]))) for c in range(sys_.z_in.shape[1])]
        steps = np.stack(cols, axis=-1)
    if not np.all(np.isfinite(steps)):
        raise SingularL("L-system solve produced non-finite values")
    return steps


class KappaReport(NamedTuple):
    kappa_L: float
    c_of_a: float
    m: int
    ratio: float


def kappa_L(sys_, grid=256):
    """Exact 2-norm condition number of ``L`` and its ratio to ``C(A) m``."""
    from .mechsys import c_of_a

    dense = sys_.L.toarray()
    s = np.linalg.svd(dense, compute_uv=False)
    if s[-1] <= np.finfo(float).eps * s[0]:
        raise SingularL("L is numerically singular")
    sys_.kappa = float(s[0] / s[-1])
    CA = c_of_a(sys_.ode, grid=grid) if sys_.ode.T > 0 else 1.0
    return KappaReport(sys_.kappa, CA, sys_.m, sys_.kappa / (CA * sys_.m))


@dataclass
class HistoryState:
    """Solver output: ``steps[i]`` approximates ``x(i h)`` for ``i = 0..m``.

    The padded tail holds ``m`` further copies of ``x_m``, so
    ``total_norm**2 = sum_{i<m} |x_i|^2 + m |x_m|^2``.
    """

    steps: np.ndarray
    params: SolverParams
    ode: LinearODE
    lsystem_steps: Optional[np.ndarray] = None
    lsystem: Optional[LSystem] = None
    padded: bool = True

    @property
    def m(self):
        return self.params.m

    @property
    def times(self):
        return np.linspace(0.0, self.ode.T, self.m + 1)

    @property
    def final(self):
        return self.steps[-1]

    @property
    def total_norm(self):
        sq = _sqnorms(self.steps)
        return float(np.sqrt(sq[:-1].sum() + self.m * sq[-1]))

    @property
    def error_bound(self):
        """``m e^3/(k+1)! sup_i |x_i|`` over the stored steps."""
        return taylor_factor(self.m, self.params.k) * float(np.sqrt(_sqnorms(self.steps).max()))

    @property
    def path_defect(self):
        """Relative disagreement between the recurrence and L-system paths."""
        if self.lsystem_steps is None:
            return None
        scale = max(float(np.abs(self.steps).max()), np.finfo(float).tiny)
        return float(np.abs(self.steps - self.lsystem_steps).max() / scale)


def _sqnorms(steps):
    flat = steps.reshape(steps.shape[0], -1)
    return np.einsum("ij,ij->i", flat, flat)


def taylor_steps(ode, params):
    """Recurrence path: ``x_{i+1} = T_k(Ah) x_i + S_k(Ah) h b``."""
    p = params.resolve(ode)
    h, m, k = p.h, p.m, p.k
    Ah = ode.A * h
    hb = h * ode.b_matrix()
    x = ode.x0.copy()
    out = np.empty((m + 1,) + x.shape)
    out[0] = x
    for i in range(m):
        term = x
        acc = x.copy()
        for j in range(1, k + 1):
            term = (Ah @ term) / j
            if j == 1:
                term = term + hb
            acc += term
        x = acc
        if not np.all(np.isfinite(x)) or np.abs(x).max(initial=0.0) > OVERFLOW:
            raise StepOverflow(f"step {i + 1} exceeded {OVERFLOW:g}")
        out[i + 1] = x
    return out


def solve_history(ode, params=None, use_lsystem=None):
    """Solve ``dx/dt = A x + b`` and return the :class:`HistoryState`.

    The L-system path runs whenever ``m (k+1) n`` fits under
    :data:`L_UNKNOWNS_MAX` (or when forced with ``use_lsystem``) and must
    agree with the recurrence to :data:`PATH_RTOL`.
    """
    params = (params or SolverParams()).resolve(ode)
    steps = taylor_steps(ode, params)
    hist = HistoryState(steps, params, ode)
    fits = params.m * (params.k + 1) * ode.n <= L_UNKNOWNS_MAX
    if use_lsystem if use_lsystem is not None else fits:
        sys_ = assemble_L(ode, params)
        hist.lsystem = sys_
        hist.lsystem_steps = solve_L(sys_)
        defect = hist.path_defect
        if defect > PATH_RTOL:
            raise SingularL(f"recurrence and L-system paths disagree (relative {defect:.2e})")
    return hist


class SuccessReport(NamedTuple):
    p: float
    g: float
    bound: float
    g_projected: float


def success_probability(hist, projector=None, w=None):
    """Exact post-selection probability on the padded slots.

    ``p = m |P(x_m + w)|^2 / |z|^2`` with
    ``|z|^2 = sum_{i<m} |x_i|^2 + m |x_m + w|^2``. The amplification
    factor ``g`` is ``max(max_i |x_i|^2, |x_m + w|^2) / |P(x_m + w)|^2``
    and the reported lower bound is ``1 / (108 g^2)``. ``g_projected`` is
    the ratio restricted to the projected block.
    """
    steps = hist.steps
    n = steps.shape[1]
    idx = np.arange(n) if projector is None else np.asarray(projector, dtype=int)
    if idx.size == 0 or idx.min() < 0 or idx.max() >= n:
        raise DimensionMismatch("projector indices out of range")
    wv = np.zeros_like(steps[-1]) if w is None else np.asarray(w, dtype=float).reshape(steps[-1].shape)
    final = steps[-1] + wv
    Pfinal = final[idx]
    num = float(np.sum(Pfinal**2))
    if num == 0.0:
        raise ZeroFinalState("projected final state vanishes")
    sq = _sqnorms(steps)
    m = hist.m
    fin_sq = float(np.sum(final**2))
    z_sq = sq[:-1].sum() + m * fin_sq
    p = m * num / z_sq
    g = max(float(sq.max()), fin_sq) / num
    proj = np.array([np.sum((steps[i] + wv)[idx] ** 2) for i in range(steps.shape[0])])
    bound = 1.0 / (108.0 * g * g)
    return SuccessReport(float(p), g, bound, float(proj.max() / num))


class KineticEstimate(NamedTuple):
    K_hat: float
    K_numeric: float
    K_true: float
    delta: float
    K_max: float
    additive_bound: float
    relative_bound: Optional[float]


def _norm_noise(params):
    if params.gamma == 0.0:
        return 0.0
    if params.noise == "worst":
        return params.gamma
    rng = np.random.default_rng(params.seed)
    return float(rng.uniform(-params.gamma, params.gamma))


def estimate_kinetic(hist, system, basis, params=None):
    """Kinetic-energy readout from the history state.

    Emulates ``K_hat = |M| N_hat^2 <psi|U_M|psi>`` where ``U_M`` selects the
    velocity block of time slot ``m`` weighted by the mass map and the norm
    estimate is ``N_hat = N (1 + delta)`` with ``|delta| <= gamma``. This
    reduces to ``(1 + delta)^2`` times the kinetic energy of ``x_m``.

    ``K_true`` comes from the exact flow of the ODE behind ``hist``. The
    additive budget is ``epsilon m_max |q'(T)|^2``; without forcing the
    relative budget ``epsilon K`` is also reported.
    """
    params = params or hist.params
    basis = Basis(basis)
    ode = hist.ode
    d = system.d
    expected = assemble(system, basis).n
    if ode.n != expected or ode.matrix_mode:
        raise NoVelocityBlock(f"history of dimension {ode.n} has no {basis.value}-basis velocity block")
    weights = velocity_weights(system, basis)
    x_m = hist.final
    vel = x_m[-d:]
    K_numeric = 0.5 * float(np.sum(weights * vel**2))
    N = hist.total_norm
    delta = _norm_noise(params)
    N_hat = N * (1.0 + delta)
    wmax = float(weights.max())
    overlap = 0.5 * float(np.sum(weights * vel**2)) / (N * N * wmax) if N > 0 else 0.0
    K_hat = wmax * N_hat * N_hat * overlap
    x_true = ode.exact()
    q_true, qdot_true = from_basis(system, basis, x_true)
    K_true = 0.5 * float(qdot_true @ (system.masses * qdot_true))
    K_max = float(system.masses.max()) * float(qdot_true @ qdot_true)
    eps = params.epsilon
    rel = eps * K_true if not np.any(system.f) and not np.any(ode.b) else None
    return KineticEstimate(K_hat, K_numeric, K_true, delta, K_max, eps * K_max, rel)


def kinetic_pipeline(system, basis, q0, qdot0, T, epsilon, gamma=None, noise="worst", seed=0):
    """Solve and read out the kinetic energy with the ``gamma = epsilon/8`` split.

    The solver tolerance is ``epsilon / 8``; ``gamma`` defaults to the same.
    """
    basis = Basis(basis)
    eps1 = epsilon / 8.0
    gamma = eps1 if gamma is None else gamma
    ode = assemble(system, basis).with_initial(to_basis(system, basis, q0, qdot0), T)
    hist = solve_history(ode, SolverParams(epsilon=eps1))
    readout = SolverParams(epsilon=epsilon, gamma=gamma, noise=noise, seed=seed)
    return hist, estimate_kinetic(hist, system, basis, readout)


class HardnessReport(NamedTuple):
    gap: float
    bound: float
    K: float
    K_R: float
    E: float


def hardness_gap(system, t, q0=None, qdot0=None):
    """Normalized kinetic-energy gap between damped and undamped flows.

    Unit masses only. ``K`` uses the closed-form conservative propagator,
    ``K_R`` the dense matrix exponential of the damped X-basis generator.
    The returned bound is ``2 |R| t (1 + |R| t / 2)``. Default initial data
    is ``q = 0``, ``q' = (1, -1, 0, ...)``.
    """
    if not np.allclose(system.masses, 1.0, rtol=0, atol=1e-14):
        raise NonUnitMasses("hardness_gap requires unit masses")
    if np.any(system.f):
        raise InputError("hardness_gap requires zero forcing")
    d = system.d
    if q0 is None:
        q0 = np.zeros(d)
    if qdot0 is None:
        qdot0 = np.zeros(d)
        qdot0[0] = 1.0
        if d > 1:
            qdot0[1] = -1.0
    x0 = np.concatenate([np.asarray(q0, float), np.asarray(qdot0, float)])
    xK = exp_jq(system.V, t) @ x0
    K = 0.5 * float(xK[d:] @ xK[d:])
    if np.any(system.R):
        xR = la.exact_flow(assemble(system, Basis.X).A, None, x0, t)
    else:
        xR = xK
    K_R = 0.5 * float(xR[d:] @ xR[d:])
    E = 0.5 * float(x0[:d] @ system.V @ x0[:d] + x0[d:] @ x0[d:])
    if E == 0.0:
        raise ZeroFinalState("initial energy vanishes")
    nR = la.norm2(system.R)
    bound = 2.0 * nR * t * (1.0 + 0.5 * nR * t)
    gap = abs(K - K_R) / E
    return HardnessReport(gap, bound, K, K_R, E)


class ReverseResult(NamedTuple):
    x0: np.ndarray
    defect: float
    bound: float


def reverse_evolve(ode, xf, params=None):
    """Recover the initial state that reaches ``xf`` at ``T``.

    Integrates ``dx/dt = -A x - b`` from ``xf``, then re-runs the forward
    solve from the result; ``defect`` is the forward mismatch and
    ``bound`` the sum of both one-way truncation budgets.
    """
    params = params or SolverParams()
    back = solve_history(ode.reversed(np.asarray(xf, dtype=float)), params)
    x0 = back.final
    fwd = solve_history(ode.with_initial(x0), params)
    defect = float(np.linalg.norm(fwd.final - np.asarray(xf, dtype=float)))
    return ReverseResult(x0, defect, back.error_bound + fwd.error_bound)
