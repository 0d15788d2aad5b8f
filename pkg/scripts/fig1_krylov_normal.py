"""CG and GMRES on A q = b versus the normal equations A^T A q = A^T b."""

from _common import configs, parser, report, run_all


def main():
    args = parser(__doc__).parse_args()
    results = run_all(configs(args.scale, "fig1_*.toml"), args.jobs, args.output)
    for thr in (1e-3, 1e-6):
        report(results, thr)
        print()


if __name__ == "__main__":
    main()
