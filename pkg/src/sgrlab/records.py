"""Convergence bookkeeping shared by solvers and the experiment runner."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

CSV_HEADER = ("iter", "loss", "rel_error", "lr", "wall_ms")

CONVERGED = "converged"
DIVERGED = "diverged"
BUDGET_EXHAUSTED = "budget_exhausted"

DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class ConvergenceRecord:
    iter: int
    loss: float
    rel_error: float
    lr: float
    wall_ms: float = 0.0

    def row(self) -> list[str]:
        return [str(self.iter), repr(float(self.loss)), repr(float(self.rel_error)),
                repr(float(self.lr)), f"{self.wall_ms:.3f}"]


def records_to_csv(records, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.row())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def records_from_csv(path) -> list[ConvergenceRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [ConvergenceRecord(int(r["iter"]), float(r["loss"]), float(r["rel_error"]),
                              float(r["lr"]), float(r["wall_ms"])) for r in rows]


def relative_l2_error(q, q_ref) -> float:
    """||q - q_ref||_2 / ||q_ref||_2."""
    q = np.asarray(q, dtype=np.float64)
    q_ref = np.asarray(q_ref, dtype=np.float64)
    if q.shape != q_ref.shape:
        raise ValueError(f"shape mismatch {q.shape} vs {q_ref.shape}")
    nref = np.linalg.norm(q_ref)
    if nref == 0:
        raise ValueError("reference vector has zero norm")
    return float(np.linalg.norm(q - q_ref) / nref)


@dataclass
class IterationTrace:
    """Per-step residual norms (and errors when a reference is known)."""

    steps: list = field(default_factory=list)
    residual_norm: list = field(default_factory=list)
    rel_error: list = field(default_factory=list)
    status: str = BUDGET_EXHAUSTED
    message: str = ""

    def append(self, step: int, residual_norm: float, rel_error: float = math.nan) -> None:
        if self.steps and step <= self.steps[-1]:
            raise ValueError("trace steps must be strictly increasing")
        self.steps.append(int(step))
        self.residual_norm.append(float(residual_norm))
        self.rel_error.append(float(rel_error))

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def iterations(self) -> int:
        return self.steps[-1] if self.steps else 0

    def first_below(self, threshold: float, metric: str = "rel_error"):
        """First step whose metric drops below ``threshold`` (None if never)."""
        values = np.asarray(getattr(self, metric))
        idx = np.flatnonzero(values < threshold)
        return self.steps[idx[0]] if len(idx) else None


class DivergenceMonitor:
    """Flags non-finite values or growth by DIVERGENCE_FACTOR over the running minimum."""

    def __init__(self, factor: float = DIVERGENCE_FACTOR):
        self.factor = factor
        self.best = math.inf

    def __call__(self, value: float) -> bool:
        if not math.isfinite(value):
            return True
        self.best = min(self.best, value)
        return value > self.factor * self.best and value > 0
