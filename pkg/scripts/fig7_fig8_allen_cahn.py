"""ODIL on Allen-Cahn: SGR with Adam over omega, and the L-BFGS failure mode."""

from _common import configs, parser, report, run_all


def main():
    args = parser(__doc__).parse_args()
    adam = run_all(configs(args.scale, "fig8_*.toml"), args.jobs, args.output)
    report(adam, 1e-3)
    print()
    lbfgs = run_all(configs(args.scale, "fig7_*.toml"), args.jobs, args.output)
    report(lbfgs, 1e-3)


if __name__ == "__main__":
    main()
