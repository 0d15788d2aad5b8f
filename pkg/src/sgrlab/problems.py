"""Benchmark PDE systems on structured grids and the Newton outer loop.

Node (i, j) of a grid maps to flat index ``j * n1 + i``; ``i`` runs along the
first axis. Each problem exposes a residual ``f(q)`` and its analytic sparse
Jacobian.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .iterative import NormalEquations, gmres
from .linalg import SparseMatrix
from .records import ConvergenceRecord, relative_l2_error

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StructuredGrid2D:
    n1: int
    n2: int
    span1: tuple = (0.0, 1.0)
    span2: tuple = (0.0, 1.0)
    kinds: tuple = ("space", "space")

    def __post_init__(self):
        if self.n1 < 3 or self.n2 < 3:
            raise ValueError("a grid needs at least 3 nodes per axis")

    @property
    def h1(self) -> float:
        return (self.span1[1] - self.span1[0]) / (self.n1 - 1)

    @property
    def h2(self) -> float:
        return (self.span2[1] - self.span2[0]) / (self.n2 - 1)

    def axis1(self) -> np.ndarray:
        return np.linspace(self.span1[0], self.span1[1], self.n1)

    def axis2(self) -> np.ndarray:
        return np.linspace(self.span2[0], self.span2[1], self.n2)

    def coords(self) -> np.ndarray:
        """(n1*n2, 2) node coordinates in flat-index order."""
        X, Y = np.meshgrid(self.axis1(), self.axis2())
        return np.column_stack([X.ravel(), Y.ravel()])


@dataclass(frozen=True, eq=False)
class LinearSystem:
    A: SparseMatrix
    b: np.ndarray
    q_ref: np.ndarray | None = None

    def __post_init__(self):
        if not (self.A.nrows == self.A.ncols == len(self.b)):
            raise ValueError("A must be square and conform to b")

    def residual(self, q) -> np.ndarray:
        return self.A.matvec(q) - self.b


@dataclass(frozen=True, eq=False)
class DiscreteProblem:
    """Residual/Jacobian bundle.

    ``coords`` lists the collocation coordinates of one field; the state is
    the concatenation of the fields named in ``layout``.
    """

    name: str
    dim: int
    residual: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], SparseMatrix]
    q_ref: np.ndarray | None
    layout: dict
    coords: np.ndarray
    grid: StructuredGrid2D
    linear: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def nfields(self) -> int:
        return len(self.layout)


# --- Poisson ---------------------------------------------------------------

def poisson_exact(x, y):
    return np.sin(np.pi * (2 * x) ** 2) * np.sin(np.pi * y)


def poisson_source(x, y):
    """Laplacian of the manufactured solution."""
    a = 4 * np.pi * x**2
    qxx = (8 * np.pi * np.cos(a) - 64 * np.pi**2 * x**2 * np.sin(a)) * np.sin(np.pi * y)
    qyy = -np.pi**2 * np.sin(a) * np.sin(np.pi * y)
    return qxx + qyy


def poisson_assemble(grid: StructuredGrid2D) -> LinearSystem:
    """Five-point discretization of -Laplace(q) = -f_s on the interior nodes.

    Dirichlet data from the manufactured solution are folded into ``b``,
    which keeps ``A`` symmetric positive definite.
    """
    n1, n2 = grid.n1, grid.n2
    m1, m2 = n1 - 2, n2 - 2
    h1, h2 = grid.h1, grid.h2
    x, y = grid.axis1(), grid.axis2()
    I, J = np.meshgrid(np.arange(1, n1 - 1), np.arange(1, n2 - 1))
    I, J = I.ravel(), J.ravel()
    k = (J - 1) * m1 + (I - 1)
    cx, cy = 1.0 / h1**2, 1.0 / h2**2

    rows = [k]
    cols = [k]
    vals = [np.full(len(k), 2 * cx + 2 * cy)]
    b = -poisson_source(x[I], y[J])
    for di, dj, c in ((-1, 0, cx), (1, 0, cx), (0, -1, cy), (0, 1, cy)):
        ii, jj = I + di, J + dj
        inner = (ii >= 1) & (ii <= n1 - 2) & (jj >= 1) & (jj <= n2 - 2)
        rows.append(k[inner])
        cols.append((jj[inner] - 1) * m1 + (ii[inner] - 1))
        vals.append(np.full(inner.sum(), -c))
        bnd = ~inner
        np.add.at(b, k[bnd], c * poisson_exact(x[ii[bnd]], y[jj[bnd]]))
    A = SparseMatrix.from_coo(np.concatenate(rows), np.concatenate(cols),
                              np.concatenate(vals), (m1 * m2, m1 * m2))
    q_ref = poisson_exact(x[I], y[J])
    return LinearSystem(A, b, q_ref)


def poisson_problem(grid: StructuredGrid2D) -> DiscreteProblem:
    system = poisson_assemble(grid)
    A, b = system.A, system.b
    coords = grid.coords().reshape(grid.n2, grid.n1, 2)[1:-1, 1:-1].reshape(-1, 2)
    return DiscreteProblem(
        name="poisson", dim=A.nrows,
        residual=lambda q: A.matvec(q) - b,
        jacobian=lambda q: A,
        q_ref=system.q_ref, layout={"q": slice(0, A.nrows)}, coords=coords,
        grid=grid, linear=True,
        meta={"system": system, "row_groups": {"pde": np.arange(A.nrows)}},
    )


def interior_grid(grid: StructuredGrid2D, field_values) -> np.ndarray:
    """Embed interior values into the full node array (boundary from the exact solution)."""
    X, Y = np.meshgrid(grid.axis1(), grid.axis2())
    full = poisson_exact(X, Y)
    full[1:-1, 1:-1] = np.asarray(field_values).reshape(grid.n2 - 2, grid.n1 - 2)
    return full


# --- Allen-Cahn --------------------------------------------------------------

AC_DIFFUSION = 1e-4
AC_REACTION = 5.0


def allen_cahn_initial(x):
    return x**2 * np.cos(np.pi * x)


def allen_cahn_grid(nx: int = 65, nt: int = 26) -> StructuredGrid2D:
    return StructuredGrid2D(nx, nt, (-1.0, 1.0), (0.0, 1.0), ("space", "time"))


def allen_cahn_march(grid: StructuredGrid2D, initial=None) -> np.ndarray:
    """Solve the forward-Euler space-time system directly, level by level."""
    nxu, nt = grid.n1 - 1, grid.n2
    h, dt = grid.h1, grid.h2
    x = grid.axis1()[:-1]
    q = np.empty((nt, nxu))
    q[0] = allen_cahn_initial(x) if initial is None else initial
    for j in range(1, nt):
        p = q[j - 1]
        lap = (np.roll(p, -1) - 2 * p + np.roll(p, 1)) / h**2
        q[j] = p + dt * (AC_DIFFUSION * lap - AC_REACTION * p**3 + AC_REACTION * p)
    return q.ravel()


def allen_cahn_problem(grid: StructuredGrid2D, initial=None) -> DiscreteProblem:
    """Space-time forward-Euler residual of the periodic Allen-Cahn equation.

    ``grid.n1`` counts nodes on [-1, 1] including x = 1, which duplicates
    x = -1 under periodicity and is dropped: the state holds ``n1 - 1``
    columns per time level. Rows at t = 0 enforce the initial condition;
    every other row is the explicit update from the previous level, scaled
    by the time step so that its diagonal entry is 1.
    """
    if grid.kinds != ("space", "time") or tuple(grid.span1) != (-1.0, 1.0):
        raise ValueError("Allen-Cahn needs a (space, time) grid spanning x in [-1, 1]")
    nxu, nt = grid.n1 - 1, grid.n2
    if nxu < 3:
        raise ValueError("need at least 3 unique periodic columns")
    h, dt = grid.h1, grid.h2
    eps, k = AC_DIFFUSION, AC_REACTION
    x = grid.axis1()[:-1]
    q0 = allen_cahn_initial(x) if initial is None else np.asarray(initial, dtype=np.float64)
    if q0.shape != (nxu,):
        raise ValueError("initial data must have one value per unique column")
    dim = nxu * nt
    d = dt * eps / h**2

    def residual(q):
        Q = np.asarray(q, dtype=np.float64).reshape(nt, nxu)
        P = Q[:-1]
        lap = np.roll(P, -1, axis=1) - 2 * P + np.roll(P, 1, axis=1)
        R = np.empty_like(Q)
        R[0] = Q[0] - q0
        R[1:] = Q[1:] - P - d * lap + dt * k * (P**3 - P)
        return R.ravel()

    col = np.arange(nxu)
    up_rows = (np.arange(1, nt)[:, None] * nxu + col).ravel()
    prev = up_rows - nxu
    prev_left = ((np.arange(0, nt - 1)[:, None] * nxu) + (col - 1) % nxu).ravel()
    prev_right = ((np.arange(0, nt - 1)[:, None] * nxu) + (col + 1) % nxu).ravel()
    rows = np.concatenate([np.arange(dim), up_rows, up_rows, up_rows])
    cols = np.concatenate([np.arange(dim), prev, prev_left, prev_right])
    m = len(up_rows)

    def jacobian(q):
        P = np.asarray(q, dtype=np.float64)[: dim - nxu]
        diag_prev = -1.0 + 2 * d + dt * (3 * k * P**2 - k)
        vals = np.concatenate([np.ones(dim), diag_prev, np.full(m, -d), np.full(m, -d)])
        return SparseMatrix.from_coo(rows, cols, vals, (dim, dim))

    coords = np.column_stack([np.tile(x, nt), np.repeat(grid.axis2(), nxu)])
    return DiscreteProblem(
        name="allen_cahn", dim=dim, residual=residual, jacobian=jacobian,
        q_ref=allen_cahn_march(grid, q0), layout={"q": slice(0, dim)}, coords=coords,
        grid=grid, meta={"dt": dt, "h": h,
                         "row_groups": {"pde": np.arange(nxu, dim), "ic": np.arange(nxu)}},
    )


# --- lid-driven cavity ------------------------------------------------------

def cavity_problem(grid: StructuredGrid2D, Re: float, q_ref=None) -> DiscreteProblem:
    """Steady incompressible Navier-Stokes in the unit cavity, collocated central differences.

    State ``[u; v; p]`` over all nodes. Rows follow the same layout: interior
    nodes carry x-momentum, y-momentum and continuity; boundary nodes carry
    velocity Dirichlet rows (lid u = 1 on the open top edge, walls zero) and
    a zero-normal-gradient pressure closure (corners average their two edge
    neighbours). The continuity row of the first interior node is replaced by
    the gauge p = 0 there.
    """
    if Re <= 0:
        raise ValueError("Reynolds number must be positive")
    n = grid.n1
    if grid.n2 != n or n < 5:
        raise ValueError("cavity needs a square grid with at least 5 nodes per axis")
    h = grid.h1
    N = n * n
    dim = 3 * N
    idx = np.arange(N).reshape(n, n)  # [j, i]
    inner = idx[1:-1, 1:-1].ravel()
    E, W, Nn, S = inner + 1, inner - 1, inner + n, inner - n
    gauge = idx[1, 1]

    bmask = np.ones((n, n), dtype=bool)
    bmask[1:-1, 1:-1] = False
    bnodes = idx[bmask]
    ub = np.zeros(N)
    ub[idx[-1, 1:-1]] = 1.0

    # pressure closure: p_b - mean(neighbours) = 0
    closure_rows, closure_cols, closure_vals = [], [], []
    for node in bnodes:
        j, i = divmod(node, n)
        corner = (i in (0, n - 1)) and (j in (0, n - 1))
        if corner:
            nb = [idx[j, 1 if i == 0 else n - 2], idx[1 if j == 0 else n - 2, i]]
        elif j == 0:
            nb = [idx[1, i]]
        elif j == n - 1:
            nb = [idx[n - 2, i]]
        elif i == 0:
            nb = [idx[j, 1]]
        else:
            nb = [idx[j, n - 2]]
        closure_rows += [node] * (1 + len(nb))
        closure_cols += [node] + nb
        closure_vals += [1.0] + [-1.0 / len(nb)] * len(nb)
    closure_rows = 2 * N + np.array(closure_rows)
    closure_cols = 2 * N + np.array(closure_cols)
    closure_vals = np.array(closure_vals)
    Cp = SparseMatrix.from_coo(closure_rows - 2 * N, closure_cols - 2 * N, closure_vals, (N, N))

    inv2h, invRe = 1.0 / (2 * h), 1.0 / (Re * h * h)
    cont = inner[inner != gauge]

    def residual(q):
        q = np.asarray(q, dtype=np.float64)
        u, v, p = q[:N], q[N:2 * N], q[2 * N:]
        R = np.empty(dim)
        ux = (u[E] - u[W]) * inv2h
        uy = (u[Nn] - u[S]) * inv2h
        vx = (v[E] - v[W]) * inv2h
        vy = (v[Nn] - v[S]) * inv2h
        lap_u = (u[E] + u[W] + u[Nn] + u[S] - 4 * u[inner]) * invRe
        lap_v = (v[E] + v[W] + v[Nn] + v[S] - 4 * v[inner]) * invRe
        R[inner] = u[inner] * ux + v[inner] * uy + (p[E] - p[W]) * inv2h - lap_u
        R[N + inner] = u[inner] * vx + v[inner] * vy + (p[Nn] - p[S]) * inv2h - lap_v
        R[bnodes] = u[bnodes] - ub[bnodes]
        R[N + bnodes] = v[bnodes]
        R[2 * N:] = Cp.matvec(p)
        R[2 * N + inner] = ux + vy
        R[2 * N + gauge] = p[gauge]
        return R

    c_i = cont
    def jacobian(q):
        q = np.asarray(q, dtype=np.float64)
        u, v = q[:N], q[N:2 * N]
        ui, vi = u[inner], v[inner]
        ux = (u[E] - u[W]) * inv2h
        uy = (u[Nn] - u[S]) * inv2h
        vx = (v[E] - v[W]) * inv2h
        vy = (v[Nn] - v[S]) * inv2h
        ones = np.ones(len(inner))
        r, c, val = [], [], []

        def add(rr, cc, vv):
            r.append(rr)
            c.append(cc)
            val.append(np.broadcast_to(vv, rr.shape).astype(np.float64))

        # x-momentum
        add(inner, inner, ux + 4 * invRe)
        add(inner, E, ui * inv2h - invRe)
        add(inner, W, -ui * inv2h - invRe)
        add(inner, Nn, vi * inv2h - invRe)
        add(inner, S, -vi * inv2h - invRe)
        add(inner, N + inner, uy)
        add(inner, 2 * N + E, inv2h * ones)
        add(inner, 2 * N + W, -inv2h * ones)
        # y-momentum
        rv = N + inner
        add(rv, inner, vx)
        add(rv, N + inner, vy + 4 * invRe)
        add(rv, N + E, ui * inv2h - invRe)
        add(rv, N + W, -ui * inv2h - invRe)
        add(rv, N + Nn, vi * inv2h - invRe)
        add(rv, N + S, -vi * inv2h - invRe)
        add(rv, 2 * N + Nn, inv2h * ones)
        add(rv, 2 * N + S, -inv2h * ones)
        # velocity Dirichlet rows
        add(bnodes, bnodes, 1.0)
        add(N + bnodes, N + bnodes, 1.0)
        # pressure closure on the boundary
        add(closure_rows, closure_cols, closure_vals)
        # continuity
        rc = 2 * N + c_i
        k = np.ones(len(c_i)) * inv2h
        add(rc, c_i + 1, k)
        add(rc, c_i - 1, -k)
        add(rc, N + c_i + n, k)
        add(rc, N + c_i - n, -k)
        add(np.array([2 * N + gauge]), np.array([2 * N + gauge]), 1.0)
        return SparseMatrix.from_coo(np.concatenate(r), np.concatenate(c),
                                     np.concatenate(val), (dim, dim))

    coords = grid.coords()
    return DiscreteProblem(
        name="cavity", dim=dim, residual=residual, jacobian=jacobian, q_ref=q_ref,
        layout={"u": slice(0, N), "v": slice(N, 2 * N), "p": slice(2 * N, 3 * N)},
        coords=coords, grid=grid,
        meta={"Re": Re, "gauge": int(gauge),
              "row_groups": {"pde": np.concatenate([inner, N + inner, 2 * N + cont]),
                             "bc": np.concatenate([bnodes, N + bnodes, 2 * N + bnodes,
                                                   [2 * N + gauge]])}},
    )


def cavity_initial(problem: DiscreteProblem) -> np.ndarray:
    """Quiescent interior with the lid velocity imposed on the boundary."""
    q = np.zeros(problem.dim)
    n = problem.grid.n1
    q[(n - 1) * n + 1:(n - 1) * n + n - 1] = 1.0
    return q


# --- linearization and Newton ----------------------------------------------

def linearize(problem: DiscreteProblem, q) -> LinearSystem:
    """Newton-step system A q* = b with A = J(q) and b = J(q) q - f(q)."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (problem.dim,):
        raise ValueError(f"state must have length {problem.dim}")
    A = problem.jacobian(q)
    return LinearSystem(A, A.matvec(q) - problem.residual(q), problem.q_ref)


def newton_outer(problem: DiscreteProblem, q0, n_linear: int, tol: float = 1e-8,
                 max_outer: int = 100, normal: bool = False, inner: str = "gmres",
                 q_ref=None, inner_tol: float = 1e-14, line_search: bool = True):
    """Newton iteration with a capped, non-restarted GMRES inner solve.

    Each outer step solves J dq = -f (or J^T J dq = -J^T f when ``normal``)
    with at most ``n_linear`` GMRES steps; ``inner="dense"`` uses a direct
    dense solve instead. With ``line_search`` the step is halved until ||f||
    decreases sufficiently. Stops when ||f|| / sqrt(dim) < tol.

    Returns ``(q, records)`` with one record per outer iteration (plus the
    initial state); ``iter`` counts cumulative inner iterations and ``lr``
    is the accepted Newton step length. Inner breakdowns are logged and
    the outer loop continues from the best inner iterate.
    """
    if n_linear < 1:
        raise ValueError("n_linear must be >= 1")
    q = np.array(q0, dtype=np.float64)
    q_ref = problem.q_ref if q_ref is None else q_ref
    scale = math.sqrt(problem.dim)
    t0 = time.perf_counter()

    def err(x):
        return relative_l2_error(x, q_ref) if q_ref is not None else math.nan

    f = problem.residual(q)
    loss = np.linalg.norm(f) / scale
    records = [ConvergenceRecord(0, loss, err(q), math.nan, 0.0)]
    total = 0
    for _ in range(max_outer):
        if loss < tol:
            break
        J = problem.jacobian(q)
        if inner == "dense":
            dq = np.linalg.solve(J.to_dense(), -f)
            used = 1
        else:
            op, rhs = (NormalEquations(J), -J.rmatvec(f)) if normal else (J, -f)
            dq, trace = gmres(op, rhs, restart=0, tol=inner_tol, max_iter=n_linear)
            used = max(trace.iterations, 1)
            if trace.status not in ("converged", "budget_exhausted"):
                log.warning("inner GMRES %s: %s", trace.status, trace.message)
            if not np.all(np.isfinite(dq)):
                log.warning("inner GMRES produced a non-finite step; skipping it")
                dq = np.zeros_like(q)
        total += used
        fnorm = np.linalg.norm(f)
        alpha = 1.0
        q_try = q + dq
        f_try = problem.residual(q_try)
        if line_search:
            # backtrack on ||f||; the capped GMRES step is a descent direction
            # whenever it reduces the linear residual
            for _ in range(40):
                nrm = np.linalg.norm(f_try)
                if math.isfinite(nrm) and nrm <= (1 - 1e-4 * alpha) * fnorm:
                    break
                alpha *= 0.5
                q_try = q + alpha * dq
                f_try = problem.residual(q_try)
        q, f = q_try, f_try
        loss = np.linalg.norm(f) / scale
        records.append(ConvergenceRecord(total, loss, err(q), alpha,
                                         1e3 * (time.perf_counter() - t0)))
        if not math.isfinite(loss):
            break
    return q, records


def newton_reference(problem: DiscreteProblem, q0=None, tol: float = 1e-12,
                     max_outer: int = 50) -> np.ndarray:
    """Converged discrete solution by Newton with direct inner solves."""
    if q0 is None:
        q0 = cavity_initial(problem) if problem.name == "cavity" else np.zeros(problem.dim)
    q, records = newton_outer(problem, q0, 1, tol=tol, max_outer=max_outer, inner="dense")
    if not records[-1].loss < tol:
        raise RuntimeError(f"Newton reference stalled at ||f||/sqrt(n) = {records[-1].loss:g}")
    return q
