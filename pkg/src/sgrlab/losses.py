"""MSE, QP, GR and SGR losses as (value, gradient w.r.t. q) pairs.

All losses report the value 1/2 f^T f except QP. Detached terms are not
taped: each gradient is written out directly.

    MSE  grad = J^T f
    QP   grad = A q - b          (value 1/2 q^T A q - q^T b)
    GR   grad = f
    SGR  grad = (1 - omega) J^T f + omega f
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .linalg import DimensionError, SparseMatrix

TAGS = ("MSE", "QP", "GR", "SGR")


@dataclass(frozen=True)
class LossKind:
    tag: str
    omega: float = 0.0

    def __post_init__(self):
        tag = self.tag.upper()
        if tag not in TAGS:
            raise ValueError(f"unknown loss {self.tag!r}; expected one of {TAGS}")
        object.__setattr__(self, "tag", tag)
        if tag == "SGR" and not 0.0 <= self.omega <= 1.0:
            raise ValueError("SGR omega must lie in [0, 1]")

    @property
    def needs_transpose(self) -> bool:
        return self.tag == "MSE" or (self.tag == "SGR" and self.omega < 1.0)

    def __str__(self):
        return f"SGR(omega={self.omega:g})" if self.tag == "SGR" else self.tag


@dataclass(frozen=True, eq=False)
class LossEvaluation:
    value: float
    grad_q: np.ndarray
    symmetric: bool | None = None


def _check(f, g):
    if g.ndim != 1:
        raise DimensionError("transpose product must return a vector")


def eval_mse(f, JT: Callable[[np.ndarray], np.ndarray]) -> LossEvaluation:
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(JT(f), dtype=np.float64)
    _check(f, g)
    return LossEvaluation(0.5 * float(f @ f), g)


def eval_qp(A: SparseMatrix, b, q) -> LossEvaluation:
    """QP loss; the gradient returned is the residual A q - b.

    That is the true gradient only for symmetric ``A``; ``symmetric`` on the
    result flags the other case.
    """
    q = np.asarray(q, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(b) != A.nrows or len(q) != A.ncols:
        raise DimensionError("QP loss: A, b, q do not conform")
    Aq = A.matvec(q)
    value = 0.5 * float(q @ Aq) - float(q @ b)
    return LossEvaluation(value, Aq - b, A.is_symmetric())


def eval_gr(f) -> LossEvaluation:
    f = np.asarray(f, dtype=np.float64)
    return LossEvaluation(0.5 * float(f @ f), f.copy())


def eval_sgr(f, JT: Callable[[np.ndarray], np.ndarray], omega: float) -> LossEvaluation:
    if not 0.0 <= omega <= 1.0:
        raise ValueError("SGR omega must lie in [0, 1]")
    f = np.asarray(f, dtype=np.float64)
    if omega == 1.0:
        return eval_gr(f)
    g = np.asarray(JT(f), dtype=np.float64)
    _check(f, g)
    if omega == 0.0:
        return LossEvaluation(0.5 * float(f @ f), g)
    return LossEvaluation(0.5 * float(f @ f), (1.0 - omega) * g + omega * f)


def evaluate(kind: LossKind, problem, q, f=None) -> LossEvaluation:
    """Loss of ``problem`` at state ``q`` (``f`` may be passed if already computed)."""
    q = np.asarray(q, dtype=np.float64)
    if f is None:
        f = problem.residual(q)
    if kind.tag == "GR":
        return eval_gr(f)
    if kind.tag == "QP":
        system = problem.meta.get("system") if problem.linear else None
        if system is not None:
            return eval_qp(system.A, system.b, q)
        J = problem.jacobian(q)
        # linearized system at q: A = J, b = J q - f, so A q - b = f
        return eval_qp(J, J.matvec(q) - f, q)
    if kind.tag == "SGR" and kind.omega == 1.0:
        return eval_gr(f)
    J = problem.jacobian(q)
    if kind.tag == "MSE":
        return eval_mse(f, J.rmatvec)
    return eval_sgr(f, J.rmatvec, kind.omega)
