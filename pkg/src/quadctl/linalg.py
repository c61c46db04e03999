"""Small dense linear-algebra helpers shared by the solver modules."""

import numpy as np
import scipy.linalg

from .errors import NotPositiveDefinite

#: eigenvalues below this fraction of the largest are treated as zero
SINGULAR_RTOL = 1e-12


def as_matrix(a, name="matrix"):
    a = np.array(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {a.shape}")
    return a


def sym_eig(V, name="V", strict=True):
    """Eigendecomposition of a symmetric matrix with a positivity check.

    With ``strict`` the matrix must be positive definite (smallest
    eigenvalue above ``SINGULAR_RTOL * lambda_max``); otherwise it only has
    to be positive semidefinite up to that tolerance and tiny negative
    eigenvalues are clipped to zero.
    """
    V = np.asarray(V, dtype=float)
    if not np.allclose(V, V.T, rtol=1e-10, atol=1e-12):
        raise NotPositiveDefinite(f"{name} is not symmetric")
    lam, U = np.linalg.eigh(0.5 * (V + V.T))
    scale = max(np.max(np.abs(lam)), np.finfo(float).tiny) if lam.size else 1.0
    floor = SINGULAR_RTOL * scale
    if strict and (lam.size == 0 or lam.min() <= floor):
        raise NotPositiveDefinite(f"{name} is singular or indefinite (min eigenvalue {lam.min():.3e})")
    if not strict and lam.size and lam.min() < -floor * 1e3:
        raise NotPositiveDefinite(f"{name} is indefinite (min eigenvalue {lam.min():.3e})")
    return np.clip(lam, 0.0, None) if not strict else lam, U


def sqrtm_spd(V, name="V"):
    lam, U = sym_eig(V, name)
    return (U * np.sqrt(lam)) @ U.T


def sqrtm_psd(V, name="V"):
    lam, U = sym_eig(V, name, strict=False)
    return (U * np.sqrt(lam)) @ U.T


def norm2(a):
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0.0
    if a.ndim < 2:
        return float(np.linalg.norm(a))
    return float(np.linalg.norm(a, 2))


def cond2(a):
    s = np.linalg.svd(np.atleast_2d(a), compute_uv=False)
    if s[-1] == 0.0:
        return float("inf")
    return float(s[0] / s[-1])


def log_norm(a):
    """Largest eigenvalue of the symmetric part (2-norm logarithmic norm)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return float(np.linalg.eigvalsh(0.5 * (a + a.T)).max())


def augmented(A, b):
    """Embed ``dx/dt = A x + b`` as a homogeneous system on ``(x, 1)``.

    ``b`` may be a vector or an ``n x M`` matrix (one constant input per
    column); the augmented generator then has ``M`` trailing zero rows.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    b2 = b.reshape(A.shape[0], -1)
    n, M = b2.shape
    G = np.zeros((n + M, n + M))
    G[:n, :n] = A
    G[:n, n:] = b2
    return G


def exact_flow(A, b, x0, t):
    """Exact solution of ``dx/dt = A x + b`` at time ``t`` via expm.

    Uses the constant-input augmentation so the inhomogeneous integral is
    produced by the same matrix exponential.
    """
    A = np.asarray(A, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    n = A.shape[0]
    matrix_mode = x0.ndim == 2
    b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
    if matrix_mode:
        M = x0.shape[1]
        b2 = np.broadcast_to(b.reshape(n, -1), (n, M))
        G = augmented(A, b2)
        E = scipy.linalg.expm(G * t)
        return E[:n, :n] @ x0 + E[:n, n:]
    G = augmented(A, b)
    E = scipy.linalg.expm(G * t)
    return E[:n, :n] @ x0 + E[:n, n]


def exact_trajectory(A, b, x0, times):
    return np.array([exact_flow(A, b, x0, t) for t in times])
