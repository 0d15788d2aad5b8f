"""PINNs-ND on Poisson: GR versus MSE loss over a fixed budget."""

from _common import configs, parser, report, run_all


def main():
    args = parser(__doc__).parse_args()
    results = run_all(configs(args.scale, "pinn_nd_*poisson*.toml"), args.jobs, args.output)
    report(results, 1e-2)


if __name__ == "__main__":
    main()
