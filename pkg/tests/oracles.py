"""Independent reference computations used by the tests.

Nothing here imports the package; every oracle is built from scipy or a
plain fixed-step integrator.
"""

import numpy as np
import scipy.integrate
import scipy.linalg


def rk4(f, y0, t0, t1, steps):
    """Classical fourth-order Runge-Kutta with ``steps`` equal steps."""
    y = np.array(y0, dtype=float)
    h = (t1 - t0) / steps
    t = t0
    for _ in range(steps):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def affine_flow(A, b, x0, t):
    """``x(t)`` for ``x' = A x + b`` by expm of the bordered generator."""
    A = np.asarray(A, float)
    n = A.shape[0]
    x0 = np.asarray(x0, float)
    cols = x0.reshape(n, -1)
    bb = np.broadcast_to(np.asarray(b, float).reshape(n, -1), cols.shape)
    out = []
    for c in range(cols.shape[1]):
        G = np.zeros((n + 1, n + 1))
        G[:n, :n] = A
        G[:n, n] = bb[:, c]
        E = scipy.linalg.expm(G * t)
        out.append(E[:n, :n] @ cols[:, c] + E[:n, n])
    res = np.column_stack(out)
    return res.reshape(x0.shape)


def sup_norm_on_grid(A, b, x0, T, points=2001):
    ts = np.linspace(0.0, T, points)
    return max(np.linalg.norm(affine_flow(A, b, x0, t)) for t in ts)


def jq_expm(V, t):
    d = V.shape[0]
    G = np.block([[np.zeros((d, d)), np.eye(d)], [-V, np.zeros((d, d))]])
    return scipy.linalg.expm(G * t)


def random_spd(rng, d, lo=0.1, hi=5.0):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (Q * rng.uniform(lo, hi, d)) @ Q.T


def random_psd(rng, d, scale=1.0):
    X = rng.standard_normal((d, d))
    return scale * X @ X.T / d


def riccati_rk4(F0, F1, F2, F3, y0, T, steps=4000, backward=False):
    """RK4 on ``y' = F0 + F1 y - y F2 y - y F3`` (from ``T`` to 0 if ``backward``)."""

    def f(_, y):
        return F0 + F1 @ y - y @ F2 @ y - y @ F3

    if backward:
        return rk4(f, y0, T, 0.0, steps)
    return rk4(f, y0, 0.0, T, steps)


def riccati_adaptive(F0, F1, F2, F3, y0, T, rtol=1e-12):
    """Adaptive DOP853 on the nonlinear Riccati RHS; survives near-poles where fixed steps blow up."""
    shape = np.shape(y0)

    def f(_, flat):
        y = flat.reshape(shape)
        return (F0 + F1 @ y - y @ F2 @ y - y @ F3).ravel()

    sol = scipy.integrate.solve_ivp(f, (0.0, T), np.ravel(y0), method="DOP853", rtol=rtol, atol=1e-14)
    if not sol.success:
        raise RuntimeError(sol.message)
    return sol.y[:, -1].reshape(shape)


def v_block_sigma_min(F0, F1, F2, F3, y0, T, points=4001):
    """``min_t sigma_min(v(t))`` over ``[0, T]`` for the linearized flow from ``[y0; I]``.

    A sign change of ``det v`` between samples is a crossing and returns 0.
    """
    N, M = np.shape(y0)
    A = np.block([[F1, F0], [F2, F3]])
    X0 = np.vstack([y0, np.eye(M)])
    ts = np.linspace(0.0, T, points)
    step = scipy.linalg.expm(A * (ts[1] - ts[0]))
    X = X0
    best, sign = np.inf, None
    for i in range(points):
        if i:
            X = step @ X
        v = X[N:]
        s = np.sign(np.linalg.det(v))
        if sign is not None and s != sign:
            return 0.0
        sign = s
        best = min(best, np.linalg.svd(v, compute_uv=False)[-1])
    return best


def lqr_riccati_rk4(F, G, Q, R, Pf, tf, steps=20000):
    """``P(0)`` from ``P' = P S P - P F - F^T P - Q`` integrated backward from ``Pf``."""
    S = G @ np.linalg.solve(R, G.T)

    def f(_, P):
        return P @ S @ P - P @ F - F.T @ P - Q

    return rk4(f, Pf, tf, 0.0, steps)


def spring_potential(masses, triples):
    """Potential from spring triples by direct summation of pair energies."""
    d = len(masses)
    V = np.zeros((d, d))
    for j, k, kap in triples:
        if j == k:
            V[j, j] += kap
        else:
            # 1/2 kap (q_j - q_k)^2
            V[j, j] += kap
            V[k, k] += kap
            V[j, k] -= kap
            V[k, j] -= kap
    return V
