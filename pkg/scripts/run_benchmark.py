"""Desk-scale simulation benchmark: 6 scenario cells x 50 replications per master seed.

Writes ``runs/benchmark/seed<k>/{results,aggregate,timings}.csv`` plus a
``config.json`` that the acceptance tests use to recognise a matching run.

Usage:
    python scripts/run_benchmark.py [--seeds 0 1 2] [--replications 50] [--workers N]
"""

import argparse
import logging
import time
from dataclasses import replace
from pathlib import Path

from itrbal.experiment import ExperimentConfig, run_experiment, write_results

ROOT = Path(__file__).resolve().parents[1]


def benchmark_config(seed: int, replications: int = 50) -> ExperimentConfig:
    return replace(ExperimentConfig(), master_seed=seed, replications=replications,
                   output_dir=str(ROOT / "runs" / "benchmark" / f"seed{seed}"))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--replications", type=int, default=50)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    for s in args.seeds:
        cfg = benchmark_config(s, args.replications)
        t0 = time.time()
        rows, timings = run_experiment(
            cfg, workers=args.workers,
            progress=lambda k, n: logging.info("seed %d: %d/%d", s, k, n) if k % 25 == 0 else None)
        out = write_results(cfg, rows, timings)
        logging.info("seed %d done in %.0f s -> %s", s, time.time() - t0, out)
        print((out / "summary.txt").read_text())


if __name__ == "__main__":
    main()
