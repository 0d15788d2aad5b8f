"""Condition number of the Poisson matrix at several grid sizes."""

import time

from _common import parser
from sgrlab.linalg import condition_number_spd
from sgrlab.problems import StructuredGrid2D, poisson_assemble


def main():
    p = parser(__doc__)
    p.add_argument("--sizes", type=int, nargs="+", default=[25, 50, 100, 200])
    args = p.parse_args()
    print(f"{'grid':>10s} {'unknowns':>9s} {'kappa':>14s} {'secs':>6s}")
    for n in args.sizes:
        A = poisson_assemble(StructuredGrid2D(n, n)).A
        t0 = time.perf_counter()
        kappa = condition_number_spd(A)
        print(f"{n:>5d}x{n:<4d} {A.nrows:9d} {kappa:14.2f} {time.perf_counter() - t0:6.2f}")


if __name__ == "__main__":
    main()
