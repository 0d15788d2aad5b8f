"""Sparse CSR operators, extreme eigenvalues and step-size bounds."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal

DENSE_CAP = 2000


class DimensionError(ValueError):
    pass


class NotPositiveDefiniteError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """Raised when an eigenvalue iteration exhausts its budget.

    ``estimate`` carries the best value found so far.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Compressed-sparse-row matrix with sorted, unique column indices per row."""

    nrows: int
    ncols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    _csr: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        offs = np.asarray(self.row_offsets, dtype=np.int64)
        cols = np.asarray(self.col_indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if len(offs) != self.nrows + 1 or offs[0] != 0:
            raise ValueError("row_offsets must have length nrows+1 and start at 0")
        if np.any(np.diff(offs) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if offs[-1] != len(vals) or len(vals) != len(cols):
            raise ValueError("row_offsets[-1], len(values), len(col_indices) disagree")
        if len(cols) and (cols.min() < 0 or cols.max() >= self.ncols):
            raise ValueError("column index out of range")
        # strictly increasing columns within each row
        if len(cols) > 1:
            step = np.diff(cols)
            row_start = np.zeros(len(cols), dtype=bool)
            row_start[offs[:-1][offs[:-1] < len(cols)]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise ValueError("column indices must be strictly increasing within a row")
        for name, arr in (("row_offsets", offs), ("col_indices", cols), ("values", vals)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        csr = sp.csr_matrix((vals, cols, offs), shape=(self.nrows, self.ncols))
        object.__setattr__(self, "_csr", csr)

    @classmethod
    def from_coo(cls, rows, cols, vals, shape) -> "SparseMatrix":
        """Assemble from triplets; duplicate entries are summed."""
        nrows, ncols = shape
        coo = sp.coo_matrix(
            (np.asarray(vals, dtype=np.float64), (np.asarray(rows), np.asarray(cols))),
            shape=(nrows, ncols),
        )
        csr = coo.tocsr()
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(nrows, ncols, csr.indptr, csr.indices, csr.data)

    @classmethod
    def from_dense(cls, M) -> "SparseMatrix":
        M = np.asarray(M, dtype=np.float64)
        if M.ndim != 2:
            raise DimensionError("dense input must be 2-D")
        rows, cols = np.nonzero(M)
        return cls.from_coo(rows, cols, M[rows, cols], M.shape)

    @classmethod
    def from_scipy(cls, S) -> "SparseMatrix":
        csr = sp.csr_matrix(S, dtype=np.float64)
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        idx = np.arange(n)
        return cls(n, n, np.arange(n + 1), idx, np.ones(n))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def to_scipy(self) -> sp.csr_matrix:
        return self._csr.copy()

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self._csr.T)

    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()

    def is_symmetric(self, rtol: float = 0.0) -> bool:
        if self.nrows != self.ncols:
            return False
        diff = abs(self._csr - self._csr.T)
        if diff.nnz == 0:
            return True
        scale = abs(self._csr).max() if self.nnz else 1.0
        return bool(diff.max() <= rtol * scale)

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.ncols,):
            raise DimensionError(f"matvec expects length {self.ncols}, got {x.shape}")
        return self._csr @ x

    def rmatvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.nrows,):
            raise DimensionError(f"transpose_matvec expects length {self.nrows}, got {x.shape}")
        return self._csr.T @ x

    def __matmul__(self, x):
        return self.matvec(x)


def matvec(A: SparseMatrix, x) -> np.ndarray:
    return A.matvec(x)


def transpose_matvec(A: SparseMatrix, x) -> np.ndarray:
    """Return A^T x without forming the transpose."""
    return A.rmatvec(x)


def _as_dense(A) -> np.ndarray:
    if isinstance(A, SparseMatrix):
        return A.to_dense()
    if sp.issparse(A):
        return A.toarray()
    return np.asarray(A, dtype=np.float64)


def dense_eig(A, dense_cap: int = DENSE_CAP) -> np.ndarray:
    """All eigenvalues of a (small) square matrix.

    Real and ascending for exactly symmetric input, complex otherwise.
    """
    M = _as_dense(A)
    n, m = M.shape
    if n != m:
        raise DimensionError("dense_eig needs a square matrix")
    if n > dense_cap:
        raise DimensionError(f"n={n} exceeds dense_cap={dense_cap}")
    if np.array_equal(M, M.T):
        return np.linalg.eigvalsh(M)
    return np.linalg.eigvals(M)


def lanczos_extremes(apply, n: int, tol: float = 1e-8, max_iter: int | None = None,
                     seed: int = 0, check_every: int = 5) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric operator.

    Lanczos with full reorthogonalization. Convergence is declared when both
    extreme Ritz values change by less than ``tol`` (relative) between checks
    and their residual bounds fall below ``sqrt(tol)``.
    """
    if max_iter is None:
        max_iter = 10 * n
    max_iter = min(max_iter, n)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    Q = np.zeros((max_iter + 1, n))
    Q[0] = v
    alpha = np.zeros(max_iter)
    beta = np.zeros(max_iter)
    prev = None
    est = (np.nan, np.nan)
    for k in range(max_iter):
        w = apply(Q[k])
        alpha[k] = w @ Q[k]
        w = w - alpha[k] * Q[k] - (beta[k - 1] * Q[k - 1] if k > 0 else 0.0)
        w -= Q[: k + 1].T @ (Q[: k + 1] @ w)
        w -= Q[: k + 1].T @ (Q[: k + 1] @ w)
        beta[k] = np.linalg.norm(w)
        m = k + 1
        breakdown = beta[k] <= 1e-14 * max(abs(alpha[: m]).max(), 1e-300)
        if breakdown or m == max_iter or m % check_every == 0:
            if m == 1:
                theta, S = np.array([alpha[0]]), np.ones((1, 1))
            elif m <= 64:
                theta, S = eigh_tridiagonal(alpha[:m], beta[: m - 1])
            else:  # only the two extreme Ritz pairs
                t0, s0 = eigh_tridiagonal(alpha[:m], beta[: m - 1], select="i", select_range=(0, 0))
                t1, s1 = eigh_tridiagonal(alpha[:m], beta[: m - 1], select="i",
                                          select_range=(m - 1, m - 1))
                theta, S = np.concatenate([t0, t1]), np.hstack([s0, s1])
            est = (theta[0], theta[-1])
            if breakdown:
                return est
            scale = max(abs(theta[0]), abs(theta[-1]))
            res_lo = beta[k] * abs(S[-1, 0])
            res_hi = beta[k] * abs(S[-1, -1])
            if prev is not None:
                dlo = abs(est[0] - prev[0]) / max(abs(est[0]), 1e-300)
                dhi = abs(est[1] - prev[1]) / max(abs(est[1]), 1e-300)
                small_res = (res_lo <= np.sqrt(tol) * max(abs(theta[0]), 1e-300 * scale)
                             and res_hi <= np.sqrt(tol) * abs(theta[-1]))
                if dlo < tol and dhi < tol and small_res:
                    return est
            prev = est
        if breakdown:
            break
        Q[k + 1] = w / beta[k]
    if max_iter == n:
        # a full Krylov basis spans the space: Ritz values are exact up to rounding
        return est
    raise ConvergenceError("Lanczos did not converge", estimate=est)


def condition_number_spd(A: SparseMatrix, tol: float = 1e-8, max_iter: int | None = None) -> float:
    """lambda_max / lambda_min of a symmetric positive definite matrix."""
    if A.nrows != A.ncols:
        raise DimensionError("condition number needs a square matrix")
    try:
        lo, hi = lanczos_extremes(A.matvec, A.nrows, tol=tol, max_iter=max_iter)
    except ConvergenceError as err:
        lo, hi = err.estimate
        raise ConvergenceError("condition number estimate did not converge",
                               estimate=hi / lo) from err
    if lo <= 0:
        raise NotPositiveDefiniteError(f"smallest eigenvalue estimate {lo:g} is not positive")
    return hi / lo


@dataclass(frozen=True)
class Spectrum:
    lambda_min_real: float
    lambda_max_real: float
    lambda_max_modulus: float
    eta_max: float
    method: str = "dense"


def eta_max_bound(A: SparseMatrix, dense_cap: int = DENSE_CAP, tol: float = 1e-8) -> Spectrum:
    """Largest stable step of q <- q - eta (A q - b): min over eigenvalues of 2 Re/|.|^2.

    Exact (dense eigendecomposition) up to ``dense_cap`` rows. Beyond that,
    symmetric matrices use Lanczos (the bound is 2/lambda_max). Nonsymmetric
    ones fall back to the conservative 2 lambda_min(sym(A)) / sigma_max(A)^2,
    which never exceeds the true bound because Re(lambda) >= lambda_min(sym(A))
    and |lambda| <= sigma_max(A).
    """
    n = A.nrows
    if n != A.ncols:
        raise DimensionError("eta_max_bound needs a square matrix")
    if n <= dense_cap:
        lam = np.asarray(dense_eig(A, dense_cap), dtype=np.complex128)
        re = lam.real
        if np.any(re <= 0):
            raise NotPositiveDefiniteError(
                f"eigenvalue with non-positive real part: min Re = {re.min():g}")
        mod2 = np.abs(lam) ** 2
        return Spectrum(float(re.min()), float(re.max()), float(np.sqrt(mod2.max())),
                        float(np.min(2 * re / mod2)), "dense")
    if A.is_symmetric():
        lo, hi = lanczos_extremes(A.matvec, n, tol=tol)
        if lo <= 0:
            raise NotPositiveDefiniteError(f"eigenvalue estimate {lo:g} is not positive")
        return Spectrum(lo, hi, hi, 2.0 / hi, "lanczos")
    S = A.to_scipy()
    H = 0.5 * (S + S.T)
    h_lo, h_hi = lanczos_extremes(lambda x: H @ x, n, tol=tol)
    _, s2 = lanczos_extremes(lambda x: A.rmatvec(A.matvec(x)), n, tol=tol)
    if h_lo <= 0:
        raise NotPositiveDefiniteError(
            "symmetric part is not positive definite; bound cannot be certified")
    smax = np.sqrt(s2)
    return Spectrum(h_lo, h_hi, smax, 2.0 * h_lo / s2, "conservative")


def write_mtx(path, A: SparseMatrix, comment: str = "") -> None:
    scipy.io.mmwrite(str(path), A.to_scipy(), comment=comment, field="real", symmetry="general")


def read_mtx(path) -> SparseMatrix:
    return SparseMatrix.from_scipy(scipy.io.mmread(str(Path(path))))
