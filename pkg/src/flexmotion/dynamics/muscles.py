"""Muscle activation dynamics and the box-constrained activation solver."""

from __future__ import annotations

import numpy as np


def activation_step(a: np.ndarray, u: np.ndarray, tau_act: float,
                    dt: float) -> np.ndarray:
    """First-order activation lag, explicit Euler, clamped to [0, 1]."""
    if dt <= 0 or tau_act <= 0:
        raise ValueError("dt and tau_act must be positive")
    a = np.asarray(a, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    return np.clip(a + (dt / tau_act) * (u - a), 0.0, 1.0)


class ActivationSolveError(RuntimeError):
    pass


def solve_muscle_activations(L: np.ndarray, rddot_target: np.ndarray,
                             beta_reg: float = 0.0, tol: float = 1e-8,
                             max_iter: int = 20000,
                             strict: bool = True) -> np.ndarray:
    """Minimize ||rddot_target - L a||^2 + beta_reg ||a||^2 over a in [0, 1]^M.

    Projected gradient descent with the exact Lipschitz step, run to a
    projected-gradient stationarity tolerance. Accepts a single problem
    (L: (K, M)) or a batch (L: (B, K, M)). With strict=False the best
    iterate is returned instead of raising on slow convergence (metric use).
    """
    if beta_reg < 0:
        raise ValueError("beta_reg must be non-negative")
    L = np.asarray(L, dtype=np.float64)
    b = np.asarray(rddot_target, dtype=np.float64)
    single = L.ndim == 2
    if single:
        L = L[None]
        b = b[None]
    B, K, M = L.shape

    H = np.einsum("bkm,bkn->bmn", L, L)
    H[:, np.arange(M), np.arange(M)] += beta_reg
    q = np.einsum("bkm,bk->bm", L, b)
    lip = np.linalg.eigvalsh(2.0 * H).max(axis=-1)
    step = 1.0 / np.maximum(lip, 1e-12)

    a = np.full((B, M), 0.5)
    live = np.arange(B)
    worst = np.inf
    for _ in range(max_iter):
        Hl, ql, sl = H[live], q[live], step[live]
        al = a[live]
        grad = 2.0 * (np.einsum("bmn,bn->bm", Hl, al) - ql)
        a_new = np.clip(al - sl[:, None] * grad, 0.0, 1.0)
        # KKT stationarity: the projected step itself must vanish
        viol = np.abs(a_new - al).max(axis=-1) / np.maximum(sl, 1e-12)
        a[live] = a_new
        keep = viol > tol
        worst = float(viol.max())
        if not keep.any():
            break
        live = live[keep]
    else:
        if strict:
            raise ActivationSolveError(
                f"projected gradient did not reach tol={tol}; "
                f"final KKT violation {worst:.3e}")
    return a[0] if single else a


def kkt_violation(L: np.ndarray, rddot_target: np.ndarray, a: np.ndarray,
                  beta_reg: float = 0.0) -> float:
    """Max norm of the projected gradient at `a` for the box QP."""
    L = np.asarray(L, dtype=np.float64)
    b = np.asarray(rddot_target, dtype=np.float64)
    if L.ndim == 2:
        L, b, a = L[None], b[None], np.asarray(a)[None]
    grad = 2.0 * (np.einsum("bkm,bkn,bn->bm", L, L, a)
                  + beta_reg * a - np.einsum("bkm,bk->bm", L, b))
    lower = np.isclose(a, 0.0)
    upper = np.isclose(a, 1.0)
    pg = grad.copy()
    pg[lower] = np.minimum(grad[lower], 0.0)
    pg[upper] = np.maximum(grad[upper], 0.0)
    return float(np.abs(pg).max())
