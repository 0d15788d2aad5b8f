"""Full-batch update rules consuming (value, gradient) pairs, plus lr schedules."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Schedule:
    """Constant or step-decay learning rate: max(floor, lr0 * factor**(t // every))."""

    kind: str = "constant"
    lr0: float = 1e-3
    factor: float = 0.5
    every: int = 1000
    floor: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "step_decay"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "step_decay" and self.every < 1:
            raise ValueError("step_decay needs every >= 1")

    def __call__(self, t: int) -> float:
        return schedule_lr(self, t)


def schedule_lr(schedule: Schedule, t: int) -> float:
    if t < 0:
        raise ValueError("step index must be non-negative")
    if schedule.kind == "constant":
        return schedule.lr0
    return max(schedule.floor, schedule.lr0 * schedule.factor ** (t // schedule.every))


def gd_step(q, grad, lr):
    return np.asarray(q, dtype=np.float64) - lr * np.asarray(grad, dtype=np.float64)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **kw) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), **kw)


def adam_step(state: AdamState, q, grad, lr):
    """One bias-corrected Adam update. Mutates and returns ``state``."""
    g = np.asarray(grad, dtype=np.float64)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1 - b1) * g
    state.v *= b2
    state.v += (1 - b2) * (g * g)
    m_hat = state.m / (1 - b1**state.t)
    v_hat = state.v / (1 - b2**state.t)
    return state, np.asarray(q, dtype=np.float64) - lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class LbfgsState:
    memory: int = 10
    s_hist: deque = field(default_factory=deque)
    y_hist: deque = field(default_factory=deque)
    prev_q: np.ndarray | None = None
    prev_grad: np.ndarray | None = None
    fallbacks: int = 0
    skipped: int = 0
    line_search: bool = False


def lbfgs_direction(grad, s_hist, y_hist):
    """Two-loop recursion: approximate -H^{-1} grad from curvature pairs."""
    q = np.array(grad, dtype=np.float64)
    if not s_hist:
        return -q
    rhos = [1.0 / (y @ s) for s, y in zip(s_hist, y_hist)]
    alphas = []
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rhos)):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    s, y = s_hist[-1], y_hist[-1]
    r = (s @ y) / (y @ y) * q
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rhos), reversed(alphas)):
        b = rho * (y @ r)
        r += (a - b) * s
    return -r


def lbfgs_step(state: LbfgsState, q, value, grad, lr, loss_fn=None):
    """Fixed-step L-BFGS update (no line search unless ``state.line_search``).

    ``loss_fn`` (q -> value) is needed only for backtracking. Curvature
    pairs with s^T y <= 1e-12 ||s|| ||y|| are skipped. A non-finite
    direction falls back to a plain gradient step and is counted in
    ``state.fallbacks``.
    """
    q = np.asarray(q, dtype=np.float64)
    g = np.asarray(grad, dtype=np.float64)
    if state.prev_q is not None:
        s = q - state.prev_q
        y = g - state.prev_grad
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            state.s_hist.append(s)
            state.y_hist.append(y)
            while len(state.s_hist) > state.memory:
                state.s_hist.popleft()
                state.y_hist.popleft()
        else:
            state.skipped += 1
    with np.errstate(all="ignore"):
        d = lbfgs_direction(g, state.s_hist, state.y_hist)
    if not np.all(np.isfinite(d)):
        state.fallbacks += 1
        log.warning("L-BFGS direction is not finite; taking a gradient step")
        d = -g
    step = lr
    if state.line_search and loss_fn is not None:
        slope = g @ d
        if slope >= 0:
            d, slope = -g, -(g @ g)
        for _ in range(30):
            trial = loss_fn(q + step * d)
            if math.isfinite(trial) and trial <= value + 1e-4 * step * slope:
                break
            step *= 0.5
    state.prev_q = q
    state.prev_grad = g
    return state, q + step * d
