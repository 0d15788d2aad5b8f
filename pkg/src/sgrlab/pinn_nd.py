"""Tanh MLP with hand-written reverse mode, and the numerically-differentiated PINN pipeline.

The network is evaluated at the grid nodes; its outputs form the state
vector q, the discrete residual f(q) is taken from the problem, and the
loss gradient with respect to q is pulled back through the network:
grad_theta = J_net^T grad_q.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import losses
from .linalg import SparseMatrix
from .problems import DiscreteProblem, StructuredGrid2D

DEFAULT_LAYERS = (2, 128, 128, 128, 128, 1)


@dataclass(frozen=True, eq=False)
class MlpParams:
    weights: tuple  # (n_in, n_out) arrays
    biases: tuple
    seed: int | None = None

    @property
    def layer_sizes(self) -> tuple:
        return (self.weights[0].shape[0],) + tuple(W.shape[1] for W in self.weights)

    @property
    def size(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for W, b in zip(self.weights, self.biases) for a in (W, b)])

    def with_flat(self, theta) -> "MlpParams":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.size,):
            raise ValueError("flat parameter vector has the wrong length")
        Ws, bs, k = [], [], 0
        for W, b in zip(self.weights, self.biases):
            Ws.append(theta[k:k + W.size].reshape(W.shape))
            k += W.size
            bs.append(theta[k:k + b.size].copy())
            k += b.size
        return MlpParams(tuple(Ws), tuple(bs), self.seed)


def init_params(layer_sizes=DEFAULT_LAYERS, seed: int = 0) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise ValueError("need at least an input and an output layer of positive width")
    rng = np.random.default_rng(seed)
    Ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        Ws.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return MlpParams(tuple(Ws), tuple(bs), seed)


def _forward(params: MlpParams, X):
    acts = [X]
    a = X
    last = len(params.weights) - 1
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ W + b
        a = z if l == last else np.tanh(z)
        acts.append(a)
    return acts


def _check_input(params, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"input batch must have shape (N, {params.weights[0].shape[0]})")
    return X


def forward_batch(params: MlpParams, X) -> np.ndarray:
    """Network outputs at each row of ``X``: shape (N,) for scalar output, else (N, k)."""
    X = _check_input(params, X)
    out = _forward(params, X)[-1]
    return out[:, 0] if out.shape[1] == 1 else out


def backprop_params(params: MlpParams, X, gbar):
    """Vector-Jacobian product sum_i gbar[i] * d q[i] / d theta.

    Returns ``(dW list, db list)`` matching the parameter layout.
    """
    X = _check_input(params, X)
    acts = _forward(params, X)
    G = np.asarray(gbar, dtype=np.float64)
    if G.ndim == 1:
        G = G[:, None]
    if G.shape != acts[-1].shape:
        raise ValueError(f"gbar must match output shape {acts[-1].shape}")
    dWs, dbs = [None] * len(params.weights), [None] * len(params.weights)
    delta = G
    for l in range(len(params.weights) - 1, -1, -1):
        dWs[l] = acts[l].T @ delta
        dbs[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params.weights[l].T) * (1.0 - acts[l] ** 2)
    return dWs, dbs


def flatten_grads(grads) -> np.ndarray:
    dWs, dbs = grads
    return np.concatenate([a.ravel() for W, b in zip(dWs, dbs) for a in (W, b)])


def poisson_mask(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    x, y = X[:, 0], X[:, 1]
    return 100.0 * x * (1 - x) * y * (1 - y)


def hard_bc_poisson(params: MlpParams, X) -> np.ndarray:
    """Network output times 100 x(1-x) y(1-y): vanishes on the unit-square boundary."""
    return poisson_mask(X) * forward_batch(params, X)


def hard_bc_poisson_backprop(params: MlpParams, X, gbar):
    return backprop_params(params, X, poisson_mask(X) * np.asarray(gbar, dtype=np.float64))


@dataclass(frozen=True)
class ResidualWeights:
    lambda_pde: float = 1.0
    lambda_bc: float = 1.0
    lambda_ic: float = 1.0
    n_g: int = 1
    n_h: int = 1
    n_i: int = 1

    def __post_init__(self):
        if min(self.lambda_pde, self.lambda_bc, self.lambda_ic) <= 0:
            raise ValueError("residual weights must be positive")

    @property
    def bc_scale(self) -> float:
        return self.lambda_bc * math.sqrt(self.n_g / self.n_h) if self.n_h else 0.0

    @property
    def ic_scale(self) -> float:
        return self.lambda_ic * math.sqrt(self.n_g / self.n_i) if self.n_i else 0.0


def stacked_residual(g, h, i_res, weights: ResidualWeights) -> np.ndarray:
    """[lambda_pde g; lambda_bc sqrt(Ng/Nh) h; lambda_ic sqrt(Ng/Ni) i]."""
    g, h, i_res = (np.asarray(a, dtype=np.float64) for a in (g, h, i_res))
    if (len(g), len(h), len(i_res)) != (weights.n_g, weights.n_h, weights.n_i):
        raise ValueError("residual block sizes do not match the weight counts")
    return np.concatenate([weights.lambda_pde * g, weights.bc_scale * h, weights.ic_scale * i_res])


def row_weights(problem: DiscreteProblem, lambda_pde=1.0, lambda_bc=1.0, lambda_ic=1.0):
    """Per-row scale factors equivalent to stacking the problem's row groups.

    Uses ``problem.meta["row_groups"]`` (dict of index arrays for "pde",
    "bc", "ic"). Scaling rows in place gives the same loss as concatenating
    the blocks.
    """
    groups = problem.meta["row_groups"]
    counts = {k: len(groups.get(k, ())) for k in ("pde", "bc", "ic")}
    w = ResidualWeights(lambda_pde, lambda_bc, lambda_ic, counts["pde"], counts["bc"], counts["ic"])
    d = np.zeros(problem.dim)
    d[groups["pde"]] = w.lambda_pde
    if counts["bc"]:
        d[groups["bc"]] = w.bc_scale
    if counts["ic"]:
        d[groups["ic"]] = w.ic_scale
    return d


def weighted_problem(problem: DiscreteProblem, d) -> DiscreteProblem:
    """Problem with residual D f(q) and Jacobian D J(q) for a diagonal D."""
    d = np.asarray(d, dtype=np.float64)
    D = sp.diags(d)

    def jac(q):
        return SparseMatrix.from_scipy(D @ problem.jacobian(q).to_scipy())

    return DiscreteProblem(
        name=problem.name, dim=problem.dim, residual=lambda q: d * problem.residual(q),
        jacobian=jac, q_ref=problem.q_ref, layout=problem.layout, coords=problem.coords,
        grid=problem.grid, linear=False, meta=dict(problem.meta, row_scale=d),
    )


class NdModel:
    """Maps network parameters to the problem's state vector (fields stacked)."""

    def __init__(self, problem: DiscreteProblem, hard_bc: bool = False):
        self.problem = problem
        self.X = np.asarray(problem.coords, dtype=np.float64)
        self.nfields = problem.nfields
        if len(self.X) * self.nfields != problem.dim:
            raise ValueError("collocation points do not match the problem dimension")
        self.mask = poisson_mask(self.X) if hard_bc else None

    def state(self, params: MlpParams) -> np.ndarray:
        out = forward_batch(params, self.X)
        if self.nfields == 1:
            return out * self.mask if self.mask is not None else out
        return out.T.ravel()

    def pullback(self, params: MlpParams, grad_q):
        grad_q = np.asarray(grad_q, dtype=np.float64)
        if self.nfields == 1:
            g = grad_q * self.mask if self.mask is not None else grad_q
        else:
            g = grad_q.reshape(self.nfields, -1).T
        return backprop_params(params, self.X, g)


def pinn_nd_grad(params: MlpParams, problem: DiscreteProblem, loss: losses.LossKind,
                 weights=None, hard_bc: bool = False, model: NdModel | None = None):
    """Loss value and parameter gradient J_net^T grad_q.

    ``weights`` (per-row scale vector) turns the residual into its weighted
    stack; ``hard_bc`` multiplies the output by the unit-square mask.
    """
    if weights is not None:
        problem = weighted_problem(problem, weights)
    model = model or NdModel(problem, hard_bc)
    q = model.state(params)
    ev = losses.evaluate(loss, problem, q)
    return ev.value, model.pullback(params, ev.grad_q)


# --- checkpoints -------------------------------------------------------------

_MAGIC = b"SGRP"


def save_checkpoint(path, params: MlpParams) -> None:
    """Flat fp64 parameters behind a header: magic, layer count, sizes, seed."""
    sizes = params.layer_sizes
    seed = -1 if params.seed is None else int(params.seed)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        fh.write(struct.pack("<q", seed))
        fh.write(params.flat().astype("<f8").tobytes())


def load_checkpoint(path) -> MlpParams:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a parameter checkpoint")
        (nl,) = struct.unpack("<I", fh.read(4))
        sizes = struct.unpack(f"<{nl}I", fh.read(4 * nl))
        (seed,) = struct.unpack("<q", fh.read(8))
        theta = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
    template = init_params(sizes, 0)
    params = template.with_flat(theta)
    return MlpParams(params.weights, params.biases, None if seed < 0 else seed)


def export_field_csv(path, params: MlpParams, grid: StructuredGrid2D, names=("q",), hard_bc=False):
    """Predicted fields at every grid node as CSV columns x, y, <names...>."""
    X = grid.coords()
    out = forward_batch(params, X)
    out = out[:, None] if out.ndim == 1 else out
    if hard_bc:
        out = out * poisson_mask(X)[:, None]
    header = ",".join(["x", "y", *names])
    np.savetxt(path, np.column_stack([X, out]), delimiter=",", header=header, comments="")
