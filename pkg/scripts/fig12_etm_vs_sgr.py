"""Explicit pseudo-time marching at its largest stable step versus SGR with lr decay."""

from _common import configs, parser, report, run_all


def main():
    args = parser(__doc__).parse_args()
    results = run_all(configs(args.scale, "fig12_*.toml"), args.jobs, args.output)
    for res in results:
        if "dtau" in res.info:
            print(f"{res.config.name}: dtau = {res.info['dtau']:.6e}")
    report(results, 1e-6)


if __name__ == "__main__":
    main()
