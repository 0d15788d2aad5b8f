"""Newton on Allen-Cahn: total inner GMRES iterations for several inner caps."""

from _common import configs, parser, run_all


def main():
    args = parser(__doc__).parse_args()
    results = run_all(configs(args.scale, "fig6_*.toml"), args.jobs, args.output)
    print(f"{'run':40s} {'status':17s} {'outer':>6s} {'inner':>8s} {'final loss':>11s}")
    for res in results:
        print(f"{res.config.name:40s} {res.status:17s} {res.info['outer_iterations']:6d} "
              f"{res.info['inner_iterations']:8d} {res.loss_history[-1]:11.3e}")


if __name__ == "__main__":
    main()
