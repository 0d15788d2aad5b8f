"""Command line: ``sgr-lab solve|bench|spectrum|compare``.

Exit codes: 0 converged, 2 diverged, 3 budget exhausted, 1 bad input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import harness

log = logging.getLogger("sgrlab")


def _run(path, output):
    cfg = harness.load_config(path)
    if output:
        cfg.run.output = output
    return harness.run_experiment(cfg)


def _summary(res) -> str:
    return (f"{res.config.name}: {res.status} after {res.iterations} iterations, "
            f"loss {res.loss_history[-1]:.3e}, rel_error {res.error_history[-1]:.3e}")


def cmd_solve(args) -> int:
    res = _run(args.config, args.output)
    print(_summary(res))
    return res.exit_code


def _configs_in(directory):
    paths = sorted(Path(directory).glob("*.toml")) + sorted(Path(directory).glob("*.json"))
    if not paths:
        raise ValueError(f"no configs found in {directory}")
    return paths


def _run_many(paths, jobs, output):
    workers = harness.worker_count(jobs)
    if workers == 1:
        return [_run(p, output) for p in paths]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run, paths, [output] * len(paths)))


def cmd_bench(args) -> int:
    paths = _configs_in(args.config_dir)
    for p in paths:  # fail on bad input before doing any work
        harness.load_config(p)
    results = _run_many(paths, args.jobs, args.output)
    for res in results:
        print(_summary(res))
    return max(res.exit_code for res in results)


def cmd_spectrum(args) -> int:
    report = harness.spectrum_report(harness.load_config(args.config))
    print(json.dumps(report, indent=2))
    return 0


def cmd_compare(args) -> int:
    if len(args.configs) < 2:
        raise ValueError("compare needs at least two configs")
    for p in args.configs:
        harness.load_config(p)
    results = _run_many(args.configs, args.jobs, args.output)
    report = harness.compare_runs(None, args.metric, args.threshold, args.budget, results=results)
    print(harness.format_report(report))
    return 0


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage, which would read as "diverged"."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sgr-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="run one experiment config")
    p.add_argument("config")
    p.add_argument("--output", default="", help="override run.output")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run every config in a directory")
    p.add_argument("config_dir")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output", default="")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("spectrum", help="condition number and GR step bound")
    p.add_argument("config")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("compare", help="iterations-to-threshold across runs")
    p.add_argument("configs", nargs="+")
    p.add_argument("--metric", choices=("rel_error", "loss"), default="rel_error")
    p.add_argument("--threshold", type=float, default=1e-3)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output", default="")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
