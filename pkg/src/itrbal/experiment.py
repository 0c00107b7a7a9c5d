"""Benchmark runs: simulate, weight, learn, evaluate and aggregate."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import comparators as cmp
from .balance import BalanceHyperparams, solve_balancing_weights
from .data import LinearRule
from .itr import learn_linear_rule
from .kernel import pooled_spec
from .simulation import (ASSIGNMENTS, ScenarioConfig, evaluate_rule, generate, optimal_linear_rule,
                         sample_target)
from .tuning import TuningConfig, select_alpha

log = logging.getLogger(__name__)

WORKERS_ENV = "ITRBAL_WORKERS"

BASE_METHODS = ("balance", "ipw", "importance", "overlap", "ebal_s", "ebal_t",
                "oracle_importance", "oracle_overlap", "treat_all")
FIXED_RE = re.compile(r"^balance_fixed\(\s*([0-9.eE+-]+)\s*,\s*([0-9.eE+-]+)\s*\)$")

RESULT_COLUMNS = ("scenario", "assignment", "kappa", "method", "replication", "status", "regret",
                  "accuracy", "value", "value2", "ess", "alpha_selected", "lambda_selected", "error")
AGG_COLUMNS = ("scenario", "assignment", "kappa", "method", "n_ok", "n_failed",
               "regret_median", "regret_q25", "regret_q75", "accuracy_median", "accuracy_q25",
               "accuracy_q75", "value2_median", "ess_median")


def parse_method(name: str):
    """Validate a method key; returns ``(base, params)``."""
    name = name.strip()
    if name in BASE_METHODS:
        return name, ()
    m = FIXED_RE.match(name)
    if m:
        a, lam = float(m.group(1)), float(m.group(2))
        BalanceHyperparams(a, lam)
        return "balance_fixed", (a, lam)
    raise ValueError(f"unknown method {name!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    scenarios: Sequence[ScenarioConfig] = tuple(
        ScenarioConfig(a, k) for a in ASSIGNMENTS for k in (0.0, 0.4))
    methods: Sequence[str] = ("balance", "ipw", "importance", "overlap", "ebal_s", "ebal_t",
                              "oracle_importance", "oracle_overlap")
    replications: int = 50
    tuning: TuningConfig = TuningConfig()
    output_dir: str = "runs/experiment"
    m_test: int = 100_000
    master_seed: int = 0
    ebal_squares: bool = False

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not self.methods:
            raise ValueError("methods must be non-empty")
        for m in self.methods:
            parse_method(m)
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        object.__setattr__(self, "methods", tuple(self.methods))


def replication_seed(master: int, rep: int) -> np.random.SeedSequence:
    # scenario-independent so that every design sees the same covariate draws
    return np.random.SeedSequence([master, rep])


def _weights_for(method, params, d, orc, tuning, ebal_squares):
    """Returns ``(weight_solution, rule_or_None, alpha, lambda)``."""
    if method == "balance":
        spec = pooled_spec(d.X)
        res = select_alpha(d, spec, tuning)
        return res.solution, res.rule, res.alpha, res.lam
    if method == "balance_fixed":
        spec = pooled_spec(d.X)
        a, lam = params
        ws = solve_balancing_weights(d, spec, BalanceHyperparams(a, lam))
        return ws, None, a, lam
    if method in ("ipw", "importance", "overlap"):
        return cmp.estimated_weights(d, method), None, math.nan, math.nan
    if method == "ebal_s":
        return cmp.entropy_balancing(d, "source_moments", ebal_squares), None, math.nan, math.nan
    if method == "ebal_t":
        return cmp.entropy_balancing(d, "target_moments", ebal_squares), None, math.nan, math.nan
    if method == "oracle_importance":
        return cmp.oracle_weights(d, "importance", orc), None, math.nan, math.nan
    if method == "oracle_overlap":
        return cmp.oracle_weights(d, "overlap", orc), None, math.nan, math.nan
    raise ValueError(method)


def run_replication(scenario: ScenarioConfig, methods, rep: int, master_seed: int,
                    tuning: TuningConfig, X_test: np.ndarray, ref: LinearRule,
                    ebal_squares: bool = False):
    """All methods on one simulated dataset; returns ``(rows, timings)``."""
    ss = replication_seed(master_seed, rep)
    data_seed = int(ss.generate_state(1)[0])
    tune_seed = int(ss.generate_state(2)[1])
    cfg = replace(scenario, seed=data_seed)
    d, orc = generate(cfg)
    tcfg = replace(tuning, seed=tune_seed)
    rows, timings = [], []
    for name in methods:
        method, params = parse_method(name)
        row = {"scenario": scenario.label, "assignment": scenario.assignment,
               "kappa": scenario.kappa, "method": name, "replication": rep}
        t0 = time.perf_counter()
        try:
            if method == "treat_all":
                rule, ess, a, lam = LinearRule.constant(d.p, True), math.nan, math.nan, math.nan
            else:
                ws, rule, a, lam = _weights_for(method, params, d, orc, tcfg, ebal_squares)
                if rule is None:
                    rule = learn_linear_rule(ws, d, ridge=tcfg.rule_ridge)
                ess = ws.ess
            ev = evaluate_rule(rule, cfg, ref, X_test=X_test, oracle=orc)
            row.update(status="ok", regret=ev.regret, accuracy=ev.accuracy, value=ev.value,
                       value2=ev.value2, ess=ess, alpha_selected=a, lambda_selected=lam, error="")
        except Exception as e:  # per-replication failures are recorded, not fatal
            log.warning("%s rep %d %s failed: %s", scenario.label, rep, name, e)
            row.update(status="failed", regret=math.nan, accuracy=math.nan, value=math.nan,
                       value2=math.nan, ess=math.nan, alpha_selected=math.nan,
                       lambda_selected=math.nan, error=f"{type(e).__name__}: {e}")
        ms = (time.perf_counter() - t0) * 1e3
        rows.append(row)
        timings.append({"scenario": scenario.label, "method": name, "replication": rep,
                        "wall_time_ms": ms})
    return rows, timings


def _job(args):
    return run_replication(*args)


def reference_rules(cfg: ExperimentConfig):
    """Shared target test sample and optimal linear rule per kappa."""
    X_test = sample_target(cfg.m_test, np.random.SeedSequence([cfg.master_seed, 0x7E57]))
    refs = {}
    for sc in cfg.scenarios:
        if sc.kappa not in refs:
            refs[sc.kappa] = optimal_linear_rule(sc, X_test=X_test)
    return X_test, refs


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None, progress=None):
    """Run every (scenario, replication) and return ``(rows, timings)``.

    Rows are sorted by (scenario order, replication, method order), so the
    output does not depend on the worker schedule.
    """
    X_test, refs = reference_rules(cfg)
    jobs = [(sc, cfg.methods, r, cfg.master_seed, cfg.tuning, X_test, refs[sc.kappa], cfg.ebal_squares)
            for sc in cfg.scenarios for r in range(cfg.replications)]
    workers = worker_count() if workers is None else workers
    results = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for k, res in enumerate(ex.map(_job, jobs)):
                results.append(res)
                if progress:
                    progress(k + 1, len(jobs))
    else:
        for k, job in enumerate(jobs):
            results.append(_job(job))
            if progress:
                progress(k + 1, len(jobs))
    rows = [r for res in results for r in res[0]]
    timings = [t for res in results for t in res[1]]
    return rows, timings


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_rows(path, rows, columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def read_rows(path):
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            for k in ("kappa", "regret", "accuracy", "value", "value2", "ess",
                      "alpha_selected", "lambda_selected"):
                if k in r:
                    r[k] = float(r[k]) if r[k] not in ("", None) else math.nan
            if "replication" in r:
                r["replication"] = int(r["replication"])
            out.append(r)
    return out


def aggregate(rows):
    """Median and quartiles per (scenario, method), in first-seen order."""
    cells = {}
    for r in rows:
        key = (r["scenario"], r["method"])
        cells.setdefault(key, []).append(r)
    out = []
    for (sc, m), rs in cells.items():
        ok = [r for r in rs if r["status"] == "ok"]

        def q(col, p):
            v = np.array([r[col] for r in ok], dtype=float)
            v = v[~np.isnan(v)]
            return float(np.percentile(v, p)) if v.size else math.nan

        out.append({"scenario": sc, "assignment": rs[0]["assignment"], "kappa": rs[0]["kappa"],
                    "method": m, "n_ok": len(ok), "n_failed": len(rs) - len(ok),
                    "regret_median": q("regret", 50), "regret_q25": q("regret", 25),
                    "regret_q75": q("regret", 75), "accuracy_median": q("accuracy", 50),
                    "accuracy_q25": q("accuracy", 25), "accuracy_q75": q("accuracy", 75),
                    "value2_median": q("value2", 50), "ess_median": q("ess", 50)})
    return out


PLOT_SCRIPT = '''"""Boxplots of regret and accuracy per scenario and method.

Usage: python plot_results.py [results.csv] [out.png]
"""
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

src = sys.argv[1] if len(sys.argv) > 1 else "results.csv"
dst = sys.argv[2] if len(sys.argv) > 2 else "results.png"
df = pd.read_csv(src)
df = df[df.status == "ok"]
scenarios = list(dict.fromkeys(df.scenario))
methods = list(dict.fromkeys(df.method))
fig, axes = plt.subplots(2, len(scenarios), figsize=(3.2 * len(scenarios), 7), squeeze=False)
for j, sc in enumerate(scenarios):
    sub = df[df.scenario == sc]
    for i, col in enumerate(["regret", "accuracy"]):
        ax = axes[i, j]
        ax.boxplot([sub[sub.method == m][col].dropna() for m in methods], showfliers=False)
        ax.set_xticks(range(1, len(methods) + 1))
        ax.set_xticklabels(methods, rotation=90, fontsize=7)
        ax.set_title(sc if i == 0 else "", fontsize=8)
        if j == 0:
            ax.set_ylabel(col)
fig.tight_layout()
fig.savefig(dst, dpi=150)
'''


def emit_report(rows, out) -> dict:
    """Write ``aggregate.csv``, ``summary.txt`` and ``plot_results.py`` into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    agg = aggregate(rows)
    if not rows:
        log.warning("no result rows; writing header-only aggregate")
    write_rows(out / "aggregate.csv", agg, AGG_COLUMNS)
    lines = []
    if not rows:
        lines.append("no results")
    cur = None
    for a in agg:
        if a["scenario"] != cur:
            cur = a["scenario"]
            lines.append(f"\n[{cur}]")
            lines.append(f"{'method':<28}{'n_ok':>6}{'fail':>6}{'regret(med)':>14}{'IQR':>22}{'acc(med)':>10}")
        lines.append(f"{a['method']:<28}{a['n_ok']:>6}{a['n_failed']:>6}{a['regret_median']:>14.5f}"
                     f"  [{a['regret_q25']:.5f}, {a['regret_q75']:.5f}]{a['accuracy_median']:>10.4f}")
    (out / "summary.txt").write_text("\n".join(lines).lstrip("\n") + "\n")
    (out / "plot_results.py").write_text(PLOT_SCRIPT)
    return {"aggregate": out / "aggregate.csv", "summary": out / "summary.txt",
            "plot": out / "plot_results.py"}


def config_record(cfg: ExperimentConfig) -> dict:
    """JSON-ready description of everything that determines the results CSV."""
    rec = asdict(cfg)
    rec.pop("output_dir")
    return rec


def write_results(cfg: ExperimentConfig, rows, timings, out=None) -> Path:
    out = Path(out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config_record(cfg), indent=1, sort_keys=True) + "\n")
    write_rows(out / "results.csv", rows, RESULT_COLUMNS)
    write_rows(out / "timings.csv", timings, ("scenario", "method", "replication", "wall_time_ms"))
    emit_report(rows, out)
    return out
