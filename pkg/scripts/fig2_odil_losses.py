"""ODIL on Poisson: quadratic (QP/GR) versus least-squares (MSE) losses."""

from _common import configs, parser, report, run_all


def main():
    args = parser(__doc__).parse_args()
    paths = configs(args.scale, "fig2_*.toml") + configs(args.scale, "odil_gd_*.toml")
    results = run_all(paths, args.jobs, args.output)
    report(results, 1e-3)


if __name__ == "__main__":
    main()
