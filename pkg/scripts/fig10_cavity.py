"""ODIL on the lid-driven cavity: SGR(0.97) versus plain MSE."""

from _common import configs, parser, report, run_all


def main():
    args = parser(__doc__).parse_args()
    results = run_all(configs(args.scale, "fig10_*.toml"), args.jobs, args.output)
    report(results, 5e-3)


if __name__ == "__main__":
    main()
