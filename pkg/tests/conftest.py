import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sgrlab.problems import StructuredGrid2D, poisson_problem

settings.register_profile(
    "default", deadline=None, max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def poisson50():
    return poisson_problem(StructuredGrid2D(50, 50))


@pytest.fixture(scope="session")
def poisson25():
    return poisson_problem(StructuredGrid2D(25, 25))


def fd_jacobian(fun, q, eps=1e-6):
    """Central finite-difference Jacobian, column by column."""
    q = np.asarray(q, dtype=np.float64)
    cols = []
    for j in range(len(q)):
        e = np.zeros_like(q)
        e[j] = eps
        cols.append((fun(q + e) - fun(q - e)) / (2 * eps))
    return np.column_stack(cols)


def random_pd(rng, n, symmetric=False):
    """Random matrix whose eigenvalues all have positive real part."""
    M = rng.standard_normal((n, n))
    if symmetric:
        return M @ M.T + 0.5 * np.eye(n)
    lam = np.linalg.eigvals(M)
    return M + (0.5 - lam.real.min()) * np.eye(n)
