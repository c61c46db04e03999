"""Damped and forced quadratic mechanical systems.

A system is ``M q'' + R q' + V q + f = 0`` with diagonal mass matrix ``M``.
It can be written as a first-order linear ODE in four coordinate bases:

* ``Z``: phase space ``(q, p)`` with ``p = M q'``
* ``Y``: ``(sqrt(V) q, sqrt(M) q')``, where the conservative part is antisymmetric
* ``X``: ``(q, q')``
* ``YTILDE``: ``(B^T sqrt(M) q, sqrt(M) q')`` built from a spring network,
  ``B B^T = M^-1/2 V M^-1/2``
"""

import enum
import itertools
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

from . import linalg as la
from .errors import (
    DimensionMismatch,
    MissingSprings,
    NegativeSpring,
    NotPositiveDefinite,
    SingularMass,
)


class Basis(str, enum.Enum):
    Z = "Z"
    Y = "Y"
    X = "X"
    YTILDE = "YTILDE"


@dataclass(frozen=True)
class LinearODE:
    """``dx/dt = A x + b`` on ``[0, T]`` from ``x0``.

    In matrix mode ``x0`` (and optionally ``b``) are ``n x M`` and every
    column is an independent trajectory.
    """

    A: np.ndarray
    b: np.ndarray
    x0: np.ndarray
    T: float = 0.0

    def __post_init__(self):
        A = la.as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        x0 = np.array(self.x0, dtype=float)
        if x0.ndim == 0 or x0.shape[0] != n or x0.ndim > 2:
            raise DimensionMismatch(f"x0 has shape {x0.shape}, expected leading dimension {n}")
        b = np.zeros(n) if self.b is None else np.array(self.b, dtype=float)
        if b.ndim == 0 or b.shape[0] != n or b.ndim > 2:
            raise DimensionMismatch(f"b has shape {b.shape}, expected leading dimension {n}")
        if b.ndim == 2 and (x0.ndim != 2 or b.shape != x0.shape):
            raise DimensionMismatch("matrix-valued b requires x0 of the same shape")
        if not np.isfinite(self.T) or self.T < 0:
            raise ValueError("horizon T must be finite and nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "T", float(self.T))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def matrix_mode(self):
        return self.x0.ndim == 2

    def b_matrix(self):
        """``b`` broadcast to the shape of ``x0``."""
        if not self.matrix_mode:
            return self.b
        if self.b.ndim == 2:
            return self.b
        return np.repeat(self.b[:, None], self.x0.shape[1], axis=1)

    def with_initial(self, x0, T=None):
        return replace(self, x0=x0, T=self.T if T is None else T)

    def reversed(self, xf):
        """The time-reversed problem ``dx/dt = -A x - b`` started from ``xf``."""
        return LinearODE(-self.A, -self.b, xf, self.T)

    def exact(self, t=None):
        """Exact state at ``t`` (default ``T``) from the dense expm oracle."""
        return la.exact_flow(self.A, self.b_matrix(), self.x0, self.T if t is None else t)


@dataclass(frozen=True)
class MechanicalSystem:
    """``M q'' + R q' + V q + f = 0`` with diagonal ``M``.

    ``springs`` is an optional symmetric ``d x d`` matrix of spring
    constants; its diagonal holds springs to the wall. When given and
    ``potential`` is omitted, ``V`` is derived from it.
    ``dissipative`` demands ``R`` be positive semidefinite.
    """

    masses: np.ndarray
    potential: Optional[np.ndarray] = None
    damping: Optional[np.ndarray] = None
    forcing: Optional[np.ndarray] = None
    springs: Optional[np.ndarray] = None
    dissipative: bool = True

    def __post_init__(self):
        m = np.atleast_1d(np.array(self.masses, dtype=float))
        if m.ndim != 1 or m.size == 0:
            raise DimensionMismatch("masses must be a nonempty vector")
        if np.any(m <= 0):
            raise SingularMass(f"masses must be strictly positive, got min {m.min()}")
        d = m.size
        S = None
        if self.springs is not None:
            S = la.as_matrix(self.springs, "springs")
            if S.shape != (d, d):
                raise DimensionMismatch(f"springs must be {d}x{d}")
            if not np.allclose(S, S.T):
                raise DimensionMismatch("spring constants must be symmetric")
            if np.any(S < 0):
                raise NegativeSpring("spring constants must be nonnegative")
        if self.potential is None:
            if S is None:
                raise DimensionMismatch("either potential or springs is required")
            V = potential_from_springs(S)
        else:
            V = la.as_matrix(self.potential, "potential")
        if V.shape != (d, d):
            raise DimensionMismatch(f"potential must be {d}x{d}, got {V.shape}")
        if S is not None and not np.allclose(V, potential_from_springs(S), rtol=1e-10, atol=1e-12):
            raise DimensionMismatch("potential disagrees with the spring network")
        la.sym_eig(V, "potential", strict=False)
        R = np.zeros((d, d)) if self.damping is None else la.as_matrix(self.damping, "damping")
        if R.shape != (d, d):
            raise DimensionMismatch(f"damping must be {d}x{d}, got {R.shape}")
        if self.dissipative and np.any(R):
            la.sym_eig(R, "damping", strict=False)
        f = np.zeros(d) if self.forcing is None else np.atleast_1d(np.array(self.forcing, dtype=float))
        if f.shape != (d,):
            raise DimensionMismatch(f"forcing must have length {d}")
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "potential", V)
        object.__setattr__(self, "damping", R)
        object.__setattr__(self, "forcing", f)
        object.__setattr__(self, "springs", S)

    @property
    def d(self):
        return self.masses.size

    @property
    def M(self):
        return np.diag(self.masses)

    @property
    def V(self):
        return self.potential

    @property
    def R(self):
        return self.damping

    @property
    def f(self):
        return self.forcing

    @classmethod
    def from_springs(cls, masses, springs, damping=None, forcing=None):
        """Build from a list of ``(j, k, kappa)`` triples (0-based)."""
        masses = np.atleast_1d(np.asarray(masses, dtype=float))
        S = spring_matrix(masses.size, springs)
        return cls(masses=masses, damping=damping, forcing=forcing, springs=S)


def spring_matrix(d, triples):
    S = np.zeros((d, d))
    for j, k, kappa in triples:
        j, k = int(j), int(k)
        if not (0 <= j < d and 0 <= k < d):
            raise DimensionMismatch(f"spring index ({j}, {k}) out of range for d={d}")
        if kappa < 0:
            raise NegativeSpring(f"spring ({j}, {k}) has negative constant {kappa}")
        S[j, k] = S[k, j] = kappa
    return S


def potential_from_springs(S):
    """``V[j,j] = S[j,j] + sum_{k != j} S[j,k]`` and ``V[j,k] = -S[j,k]``."""
    S = np.asarray(S, dtype=float)
    off = S - np.diag(np.diag(S))
    return np.diag(np.diag(S) + off.sum(axis=1)) - off


def build_B(system):
    """Spring-network factor ``B`` with ``B B^T = M^-1/2 V M^-1/2``.

    Columns are ordered self-springs first (by ``j``), then pairs ``(j, k)``
    with ``j < k`` in lexicographic order; absent springs leave zero columns
    so the shape is always ``d x d(d+1)/2``.
    """
    if system.springs is None:
        raise MissingSprings("build_B requires spring constants")
    S = system.springs
    if np.any(S < 0):
        raise NegativeSpring("spring constants must be nonnegative")
    d = system.d
    m = system.masses
    B = np.zeros((d, d * (d + 1) // 2))
    for j in range(d):
        B[j, j] = np.sqrt(S[j, j] / m[j])
    for col, (j, k) in enumerate(itertools.combinations(range(d), 2), start=d):
        B[j, col] = np.sqrt(S[j, k] / m[j])
        B[k, col] = -np.sqrt(S[j, k] / m[k])
    return B


def _blocks(tl, tr, bl, br):
    return np.block([[tl, tr], [bl, br]])


def assemble(system, basis=Basis.X):
    """First-order generator ``(A, b)`` of the system in the given basis.

    Returns a :class:`LinearODE` with zero initial state and horizon; use
    :func:`to_basis` and ``LinearODE.with_initial`` to attach them.
    """
    basis = Basis(basis)
    d = system.d
    m = system.masses
    V, R, f = system.V, system.R, system.f
    I = np.eye(d)
    Z = np.zeros((d, d))
    zero = np.zeros(d)
    if basis is Basis.Z:
        Minv = np.diag(1.0 / m)
        A = _blocks(Z, Minv, -V, -R @ Minv)
        b = np.concatenate([zero, -f])
    elif basis is Basis.X:
        MinvV = V / m[:, None]
        MinvR = R / m[:, None]
        A = _blocks(Z, I, -MinvV, -MinvR)
        b = np.concatenate([zero, -f / m])
    elif basis is Basis.Y:
        sqV = la.sqrtm_spd(V, "potential")
        rs = 1.0 / np.sqrt(m)
        top = sqV * rs[None, :]
        A = _blocks(Z, top, -top.T, -(R * rs[:, None]) * rs[None, :])
        b = np.concatenate([zero, -f * rs])
    else:
        B = build_B(system)
        d1 = B.shape[1]
        rs = 1.0 / np.sqrt(m)
        A = _blocks(np.zeros((d1, d1)), B.T, -B, -(R * rs[:, None]) * rs[None, :])
        b = np.concatenate([np.zeros(d1), -f * rs])
    return LinearODE(A, b, np.zeros(A.shape[0]), 0.0)


def to_basis(system, basis, q, qdot):
    """Map ``(q, q')`` to the state vector of ``basis``."""
    basis = Basis(basis)
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    if q.shape != (system.d,) or qdot.shape != (system.d,):
        raise DimensionMismatch(f"q and qdot must have length {system.d}")
    m = system.masses
    if basis is Basis.X:
        return np.concatenate([q, qdot])
    if basis is Basis.Z:
        return np.concatenate([q, m * qdot])
    if basis is Basis.Y:
        return np.concatenate([la.sqrtm_spd(system.V, "potential") @ q, np.sqrt(m) * qdot])
    B = build_B(system)
    return np.concatenate([B.T @ (np.sqrt(m) * q), np.sqrt(m) * qdot])


def from_basis(system, basis, x):
    """Inverse of :func:`to_basis`; returns ``(q, q')``."""
    basis = Basis(basis)
    x = np.asarray(x, dtype=float)
    d, m = system.d, system.masses
    top, bottom = x[:-d], x[-d:]
    if basis is Basis.X:
        return top, bottom
    if basis is Basis.Z:
        return top, bottom / m
    if basis is Basis.Y:
        sqV = la.sqrtm_spd(system.V, "potential")
        return np.linalg.solve(sqV, top), bottom / np.sqrt(m)
    B = build_B(system)
    q_scaled = np.linalg.lstsq(B.T, top, rcond=None)[0]
    return q_scaled / np.sqrt(m), bottom / np.sqrt(m)


def velocity_weights(system, basis):
    """Diagonal weights ``w`` on the last ``d`` components with ``K = 1/2 sum w x^2``."""
    basis = Basis(basis)
    m = system.masses
    if basis is Basis.X:
        return m.copy()
    if basis is Basis.Z:
        return 1.0 / m
    return np.ones(system.d)


def exp_jq(V, t):
    """Closed-form ``exp(J Q t)`` for ``Q = diag(V, I)`` and symmetric positive definite ``V``.

    Blocks are ``cos(sqrt(V) t)``, ``V^-1/2 sin(sqrt(V) t)``,
    ``-V^1/2 sin(sqrt(V) t)`` and ``cos(sqrt(V) t)``.
    """
    lam, U = la.sym_eig(la.as_matrix(V, "V"), "V")
    if t == 0:
        return np.eye(2 * lam.size)
    s = np.sqrt(lam)
    c = np.cos(s * t)
    sn = np.sin(s * t)

    def f(vals):
        return (U * vals) @ U.T

    C = f(c)
    return _blocks(C, f(sn / s), -f(s * sn), C)


def energies(system, q, qdot):
    """Kinetic and total energy ``(K, E)`` at a configuration."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    if q.shape != (system.d,) or qdot.shape != (system.d,):
        raise DimensionMismatch(f"q and qdot must have length {system.d}")
    K = 0.5 * float(qdot @ (system.masses * qdot))
    return K, K + 0.5 * float(q @ system.V @ q)


class NormBound(NamedTuple):
    bound: float
    exact: float


def norm_bound_A(system):
    """``2 max(|M^-1 V|, |M^-1 R|, 1)`` together with the exact ``|A|`` in the X basis."""
    m = system.masses
    bound = 2.0 * max(la.norm2(system.V / m[:, None]), la.norm2(system.R / m[:, None]), 1.0)
    return NormBound(bound, la.norm2(assemble(system, Basis.X).A))


def c_of_a(ode, grid=1024):
    """Sampled ``sup_{t in [0,T]} |exp(A t)|``.

    Evaluated on a uniform grid of ``grid`` points followed by a bounded
    scalar refinement around the grid maximum. The result is a lower
    estimate of the true supremum.
    """
    if grid < 2:
        raise ValueError("grid must be at least 2")
    A = ode.A if isinstance(ode, LinearODE) else la.as_matrix(ode)
    T = ode.T if isinstance(ode, LinearODE) else None
    if T is None:
        raise ValueError("a horizon is required")
    return _sup_expm_norm(A, T, grid)


def _sup_expm_norm(A, T, grid=1024):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 1.0
    if T == 0:
        return 1.0
    ts = np.linspace(0.0, T, grid)
    step = scipy.linalg.expm(A * (ts[1] - ts[0]))
    E = np.eye(A.shape[0])
    norms = np.empty(grid)
    norms[0] = 1.0
    for i in range(1, grid):
        E = E @ step
        norms[i] = la.norm2(E)
    i = int(np.argmax(norms))
    best = norms[i]
    lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, grid - 1)]
    if hi > lo:
        res = minimize_scalar(
            lambda t: -la.norm2(scipy.linalg.expm(A * t)),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-10 * max(T, 1.0)},
        )
        best = max(best, -float(res.fun))
    return float(best)


@dataclass(frozen=True)
class RiccatiBlocks:
    """Block generator ``[[F1, F0], [F2, F3]]`` over horizon ``T``."""

    F0: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    F3: np.ndarray
    T: float

    def A(self):
        return _blocks(self.F1, self.F0, self.F2, self.F3)


def c_of_a_bound(parts, basis=Basis.X, grid=1024):
    """Closed-form upper bound on ``C(A)``.

    ``parts`` is either a :class:`MechanicalSystem` (damped mechanical
    bound ``cond(diag(sqrt(V), sqrt(M)))`` in the X basis, ``1`` in the
    antisymmetrised bases) or a :class:`RiccatiBlocks`. For blocks the
    bound follows the zero pattern:

    * ``F0 = 0``: ``C_d (1 + C_d |F2| T)``
    * ``F2 = 0``: ``C_d (1 + C_d |F0| T)``
    * both nonzero: ``exp(max(0, mu + |F0| + |F2|) T)`` with ``mu`` the log-norm of ``diag(F1, F3)``

    where ``C_d`` is the sampled sup of ``|exp(F1 t)|`` and ``|exp(F3 t)|``.
    """
    if isinstance(parts, MechanicalSystem):
        basis = Basis(basis)
        if basis in (Basis.Y, Basis.YTILDE):
            return 1.0
        sqV = la.sqrtm_spd(parts.V, "potential")
        sq = scipy.linalg.block_diag(sqV, np.diag(np.sqrt(parts.masses)))
        kappa = la.cond2(sq)
        if basis is Basis.Z:
            kappa *= la.cond2(np.diag(np.concatenate([np.ones(parts.d), parts.masses])))
        return kappa
    F0, F1, F2, F3 = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (parts.F0, parts.F1, parts.F2, parts.F3))
    T = parts.T
    n0, n2 = la.norm2(F0), la.norm2(F2)
    Cd = max(_sup_expm_norm(F1, T, grid), _sup_expm_norm(F3, T, grid))
    if n0 == 0.0:
        return Cd * (1.0 + Cd * n2 * T)
    if n2 == 0.0:
        return Cd * (1.0 + Cd * n0 * T)
    mu = la.log_norm(scipy.linalg.block_diag(F1, F3))
    return float(np.exp(max(0.0, mu + n0 + n2) * T))
