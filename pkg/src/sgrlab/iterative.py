"""Krylov solvers and the stationary GR / MSE / pseudo-time iterations."""

from __future__ import annotations

import math

import numpy as np

from .records import (BUDGET_EXHAUSTED, CONVERGED, DIVERGED, DivergenceMonitor,
                      IterationTrace, relative_l2_error)


class NormalEquations:
    """Operator q -> A^T (A q), applied as two chained products."""

    def __init__(self, A):
        self.A = A
        self.nrows = A.ncols
        self.ncols = A.ncols

    def matvec(self, x):
        return self.A.rmatvec(self.A.matvec(x))


def normal_equations(A, b):
    """Return (A^T A operator, A^T b) without forming A^T A."""
    return NormalEquations(A), A.rmatvec(np.asarray(b, dtype=np.float64))


def _err(q, q_ref):
    return relative_l2_error(q, q_ref) if q_ref is not None else math.nan


def cg(A, b, q0=None, tol=1e-10, max_iter=None, q_ref=None, err_tol=None):
    """Conjugate gradients for SPD ``A``.

    Stops when ||A q - b|| / ||b|| < tol, when the relative error to ``q_ref``
    drops below ``err_tol`` (if given), or after ``max_iter`` iterations.
    A non-positive curvature p^T A p aborts with status ``"indefinite"``.
    """
    b = np.asarray(b, dtype=np.float64)
    n = len(b)
    max_iter = 10 * n if max_iter is None else max_iter
    q = np.zeros(n) if q0 is None else np.array(q0, dtype=np.float64)
    r = b - A.matvec(q)
    p = r.copy()
    rr = r @ r
    bnorm = np.linalg.norm(b) or 1.0
    trace = IterationTrace()
    trace.append(0, math.sqrt(rr), _err(q, q_ref))
    if math.sqrt(rr) / bnorm < tol:
        trace.status = CONVERGED
        return q, trace
    for k in range(1, max_iter + 1):
        Ap = A.matvec(p)
        curv = p @ Ap
        if curv <= 0:
            trace.status = "indefinite"
            trace.message = f"p^T A p = {curv:g} at iteration {k}"
            return q, trace
        alpha = rr / curv
        q += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        err = _err(q, q_ref)
        trace.append(k, math.sqrt(rr_new), err)
        if math.sqrt(rr_new) / bnorm < tol or (err_tol is not None and err < err_tol):
            trace.status = CONVERGED
            return q, trace
        p = r + (rr_new / rr) * p
        rr = rr_new
    trace.status = BUDGET_EXHAUSTED
    return q, trace


def _givens(a, b):
    if b == 0.0:
        return 1.0, 0.0
    h = math.hypot(a, b)
    return a / h, b / h


def gmres(A, b, q0=None, restart=0, tol=1e-10, max_iter=None, q_ref=None, err_tol=None):
    """GMRES with modified Gram-Schmidt Arnoldi and Givens rotations.

    ``restart=0`` runs without restarts. The trace holds one entry per inner
    step with the least-squares residual estimate. A cycle that fails to
    reduce the residual marks the run ``"stagnated"``.
    """
    b = np.asarray(b, dtype=np.float64)
    n = len(b)
    max_iter = 10 * n if max_iter is None else max_iter
    m = max_iter if restart <= 0 else min(restart, max_iter)
    q = np.zeros(n) if q0 is None else np.array(q0, dtype=np.float64)
    bnorm = np.linalg.norm(b) or 1.0
    track = q_ref is not None or err_tol is not None
    trace = IterationTrace()
    r = b - A.matvec(q)
    beta = np.linalg.norm(r)
    trace.append(0, beta, _err(q, q_ref))
    if beta / bnorm < tol:
        trace.status = CONVERGED
        return q, trace
    k_total = 0
    while k_total < max_iter:
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        cycle_start_res = beta
        done = False
        nj = 0  # Arnoldi columns filled this cycle
        for j in range(m):
            if k_total >= max_iter:
                break
            w = A.matvec(V[j])
            for i in range(j + 1):
                H[i, j] = w @ V[i]
                w -= H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            happy = H[j + 1, j] <= 1e-14 * max(np.abs(H[: j + 1, j]).max(), 1e-300)
            if not happy:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            cs[j], sn[j] = _givens(H[j, j], H[j + 1, j])
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            k_total += 1
            nj = j + 1
            res = abs(g[j + 1])
            err = math.nan
            if track:
                y = _back_substitute(H, g, j + 1)
                err = _err(q + V[: j + 1].T @ y, q_ref)
            trace.append(k_total, res, err)
            if res / bnorm < tol or happy or (err_tol is not None and err < err_tol):
                done = True
                break
        y = _back_substitute(H, g, nj)
        q = q + V[:nj].T @ y
        if done:
            trace.status = CONVERGED
            return q, trace
        r = b - A.matvec(q)
        beta = np.linalg.norm(r)
        if beta / bnorm < tol:
            trace.status = CONVERGED
            return q, trace
        if beta >= cycle_start_res * (1 - 1e-12) and k_total < max_iter:
            trace.status = "stagnated"
            trace.message = f"no residual reduction over a cycle ending at step {k_total}"
            return q, trace
    trace.status = BUDGET_EXHAUSTED
    return q, trace


def _back_substitute(H, g, k):
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        y[i] = (g[i] - H[i, i + 1:k] @ y[i + 1:]) / H[i, i]
    return y


def _stationary(update, residual_of, q0, steps, q_ref, monitor_every=1):
    q = np.array(q0, dtype=np.float64)
    trace = IterationTrace()
    monitor = DivergenceMonitor()
    r = residual_of(q)
    rn = float(np.linalg.norm(r))
    trace.append(0, rn, _err(q, q_ref))
    monitor(rn)
    for k in range(1, steps + 1):
        q_new = update(q, r)
        r_new = residual_of(q_new)
        rn = float(np.linalg.norm(r_new))
        if monitor(rn) or not np.all(np.isfinite(q_new)):
            trace.status = DIVERGED
            trace.message = f"divergence detected at step {k}; last finite step {k - 1}"
            trace.append(k, rn if math.isfinite(rn) else math.inf, math.nan)
            return q, trace
        q, r = q_new, r_new
        if k % monitor_every == 0 or k == steps:
            trace.append(k, rn, _err(q, q_ref))
    trace.status = BUDGET_EXHAUSTED
    return q, trace


def explicit_time_march(problem, q0, dtau, steps, q_ref=None):
    """Pseudo-time relaxation q <- q - dtau f(q).

    ``problem`` is anything with a ``residual`` method/attribute, or a bare callable.
    """
    if dtau <= 0:
        raise ValueError("dtau must be positive")
    f = problem if callable(problem) and not hasattr(problem, "residual") else problem.residual
    return _stationary(lambda q, r: q - dtau * r, f, q0, steps, q_ref)


def gr_iteration(A, b, q0, eta, steps, q_ref=None):
    """q <- q - eta (A q - b)."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    b = np.asarray(b, dtype=np.float64)
    return _stationary(lambda q, r: q - eta * r, lambda q: A.matvec(q) - b, q0, steps, q_ref)


def mse_iteration(A, b, q0, eta, steps, q_ref=None):
    """q <- q - eta A^T (A q - b): gradient descent on the normal equations.

    The trace records the original residual ||A q - b||.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    b = np.asarray(b, dtype=np.float64)
    return _stationary(lambda q, r: q - eta * A.rmatvec(r), lambda q: A.matvec(q) - b,
                       q0, steps, q_ref)
