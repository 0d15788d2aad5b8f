"""Shared plumbing for the experiment scripts: pick configs, run them, print a table."""

from __future__ import annotations

import argparse
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from sgrlab import harness

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--scale", choices=("desk", "paper"), default="desk")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output", default="", help="override run.output for every config")
    return p


def configs(scale: str, pattern: str):
    paths = sorted((CONFIGS / scale).glob(pattern))
    if not paths:
        raise SystemExit(f"no configs match {pattern} under {CONFIGS / scale}")
    return paths


def _run(path, output):
    cfg = harness.load_config(path)
    if output:
        cfg.run.output = output
    return harness.run_experiment(cfg)


def run_all(paths, jobs=1, output=""):
    workers = harness.worker_count(jobs)
    if workers == 1:
        return [_run(p, output) for p in paths]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run, paths, [output] * len(paths)))


def report(results, threshold, metric="rel_error"):
    rep = harness.compare_runs(None, metric, threshold, results=results)
    print(harness.format_report(rep))
    return rep
