"""Command-line interface: simulate, weights, learn, tune, experiment, report."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import comparators as cmp
from .balance import BalanceHyperparams, solve_balancing_weights
from .config import load_config, override
from .data import Dataset, WeightSolution, load_dataset, standardize, write_dataset
from .experiment import ExperimentConfig, emit_report, read_rows, run_experiment, write_results
from .itr import learn_linear_rule
from .kernel import pooled_spec
from .mmd import group_mmds
from .simulation import ASSIGNMENTS, ScenarioConfig, generate, oracle_sidecar
from .tuning import TuningConfig, select_alpha

log = logging.getLogger("itrbal")

METHODS = ("balance", "ipw", "importance", "overlap", "ebal_s", "ebal_t",
           "oracle_importance", "oracle_overlap")


def _add_data_args(p):
    p.add_argument("--data", required=True, help="delimited data file with header")
    p.add_argument("--col-s", default="S")
    p.add_argument("--col-a", default="A")
    p.add_argument("--col-y", default="Y")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--standardize", action="store_true",
                   help="standardize covariates with pooled mean and sd")


def _load(args) -> Dataset:
    d = load_dataset(args.data, {"s": args.col_s, "a": args.col_a, "y": args.col_y}, args.delimiter)
    if args.standardize:
        d = Dataset(X=standardize(d.X), S=d.S, A=d.A, Y=d.Y, columns=d.columns)
    return d


def sidecar_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".oracle.csv")


def cmd_simulate(args):
    cfg = ScenarioConfig(args.scenario, args.kappa, args.n, args.seed)
    d, orc = generate(cfg)
    write_dataset(d, args.out)
    side = oracle_sidecar(d, orc)
    with open(sidecar_path(args.out), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "pi", "rho", "mu0", "mu1", "tau"])
        for i in range(d.n):
            w.writerow([i] + [repr(float(side[k][i])) for k in ("pi", "rho", "mu0", "mu1", "tau")])
    print(f"wrote {args.out} (n_s={d.n_s}, n_t={d.n_t}) and {sidecar_path(args.out)}")
    return 0


def _read_sidecar(path, d: Dataset):
    pi = np.full(d.n, np.nan)
    rho = np.full(d.n, np.nan)
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            i = int(r["row"])
            pi[i], rho[i] = float(r["pi"]), float(r["rho"])
    src = d.source_rows
    return pi[src], rho[src]


def compute_weights(d: Dataset, args) -> WeightSolution:
    m = args.method
    if m == "balance":
        spec = pooled_spec(d.X)
        if args.alpha is not None and args.lam is not None:
            return solve_balancing_weights(d, spec, BalanceHyperparams(args.alpha, args.lam))
        res = select_alpha(d, spec, TuningConfig(seed=args.seed))
        return res.solution
    if m in ("ipw", "importance", "overlap"):
        return cmp.estimated_weights(d, m)
    if m in ("ebal_s", "ebal_t"):
        target = "source_moments" if m == "ebal_s" else "target_moments"
        return cmp.entropy_balancing(d, target)
    if m in ("oracle_importance", "oracle_overlap"):
        if not args.oracle:
            raise SystemExit(f"--method {m} needs --oracle SIDECAR (written by `simulate`)")
        pi, rho = _read_sidecar(args.oracle, d)
        kind = m.split("_", 1)[1]
        ws = cmp.classical_weights(d, kind, pi, rho if kind == "importance" else None)
        return WeightSolution(w=ws.w, ess=ws.ess, method=m)
    raise SystemExit(f"unknown method {m!r}")


def cmd_weights(args):
    d = _load(args)
    ws = compute_weights(d, args)
    src = d.source_rows
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "group", "weight"])
        for k, i in enumerate(src):
            w.writerow([int(i), "treated" if d.A[k] == 1 else "control", repr(float(ws.w[k]))])
    spec = pooled_spec(d.X)
    t1, t0, c10 = group_mmds(d, ws.w, spec)
    diag = {"method": args.method, "alpha": _num(ws.alpha), "lambda": _num(ws.lam),
            "mmd_t1": t1, "mmd_t0": t0, "mmd_10": c10, "ess": ws.ess, "objective": _num(ws.objective)}
    diag_path = args.diagnostics or str(Path(args.out).with_suffix(".jsonl"))
    with open(diag_path, "a") as fh:
        fh.write(json.dumps(diag) + "\n")
    print(json.dumps(diag))
    return 0


def _num(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


def read_weights(path, d: Dataset) -> np.ndarray:
    pos = {int(i): k for k, i in enumerate(d.source_rows)}
    w = np.full(d.n_s, np.nan)
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            i = int(r["row"])
            if i not in pos:
                raise SystemExit(f"weights file row {i} is not a source row")
            w[pos[i]] = float(r["weight"])
    if np.isnan(w).any():
        raise SystemExit("weights file does not cover every source row")
    return w


def cmd_learn(args):
    d = _load(args)
    w = read_weights(args.weights, d)
    rule = learn_linear_rule(w, d, ridge=args.ridge)
    Path(args.out).write_text(json.dumps(rule.to_dict(), indent=2) + "\n")
    dec_path = args.decisions or str(Path(args.out).with_suffix(".decisions.csv"))
    dec = rule.decide(d.X_target)
    with open(dec_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "decision"])
        for i, v in zip(d.target_rows, dec):
            w.writerow([int(i), int(v)])
    print(json.dumps(rule.to_dict()))
    return 0


def cmd_tune(args):
    d = _load(args)
    spec = pooled_spec(d.X)
    kw = {"seed": args.seed, "n_subsamples": args.n_subsamples}
    if args.alpha_grid:
        kw["alpha_grid"] = [float(x) for x in args.alpha_grid.split(",")]
    if args.lambda_grid:
        kw["lambda_grid"] = [float(x) for x in args.lambda_grid.split(",")]
    res = select_alpha(d, spec, TuningConfig(**kw))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "tuning_report.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["alpha", "lambda", "value", "ess"], lineterminator="\n")
        w.writeheader()
        for row in res.report_rows():
            w.writerow({k: repr(float(v)) for k, v in row.items()})
    sel = {"alpha": res.alpha, "lambda": res.lam, "rule": res.rule.to_dict()}
    (out / "selected.json").write_text(json.dumps(sel, indent=2) + "\n")
    print(json.dumps(sel))
    return 0


def cmd_experiment(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    methods = tuple(args.methods.split(",")) if args.methods else None
    cfg = override(cfg, replications=args.replications, master_seed=args.seed,
                   output_dir=args.out, m_test=args.m_test, methods=methods)

    def progress(k, n):
        log.info("replication %d/%d done", k, n)

    rows, timings = run_experiment(cfg, workers=args.workers, progress=progress)
    out = write_results(cfg, rows, timings)
    failed = sum(r["status"] != "ok" for r in rows)
    print((out / "summary.txt").read_text(), end="")
    print(f"results in {out}; {failed} failed row(s)")
    return 0 if failed == 0 else 1


def cmd_report(args):
    rows = read_rows(args.results)
    files = emit_report(rows, args.out)
    print(Path(files["summary"]).read_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="itrbal", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("simulate", help="draw a simulated dataset and its oracle sidecar")
    p.add_argument("--scenario", choices=ASSIGNMENTS, default="linear")
    p.add_argument("--kappa", type=float, default=0.0)
    p.add_argument("--n", type=int, default=1600)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("weights", help="compute weights for the source rows")
    _add_data_args(p)
    p.add_argument("--method", choices=METHODS, default="balance")
    p.add_argument("--alpha", type=float, help="fixed alpha (balance only; tuned if omitted)")
    p.add_argument("--lam", "--lambda", dest="lam", type=float, help="fixed lambda (balance only)")
    p.add_argument("--oracle", help="oracle sidecar CSV for oracle_* methods")
    p.add_argument("--seed", type=int, default=0, help="tuning seed")
    p.add_argument("--out", required=True, help="weights CSV")
    p.add_argument("--diagnostics", help="JSON-lines diagnostics file (appended)")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("learn", help="learn a linear rule from weights")
    _add_data_args(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--ridge", type=float, default=1e-4)
    p.add_argument("--out", required=True, help="rule JSON")
    p.add_argument("--decisions", help="per-target-row decisions CSV")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("tune", help="select (alpha, lambda) by grid search")
    _add_data_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-subsamples", type=int, default=50)
    p.add_argument("--alpha-grid")
    p.add_argument("--lambda-grid")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("experiment", help="run the simulation benchmark")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--replications", type=int)
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--methods", help="comma-separated method keys")
    p.add_argument("--m-test", type=int)
    p.add_argument("--workers", type=int, help="worker processes (default: $ITRBAL_WORKERS or 1)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="aggregate a results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
