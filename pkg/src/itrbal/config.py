"""Experiment configuration files (TOML)."""

from __future__ import annotations

import sys
from dataclasses import fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .experiment import ExperimentConfig
from .simulation import ScenarioConfig
from .tuning import TuningConfig

EXAMPLE = """\
# itrbal experiment configuration
replications = 50
master_seed = 0
m_test = 100000
output_dir = "runs/experiment"
methods = ["balance", "ipw", "importance", "overlap", "ebal_s", "ebal_t",
           "oracle_importance", "oracle_overlap"]

[tuning]
subsample_fraction = 0.8
n_subsamples = 50
# alpha_grid = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
# lambda_grid = [0.001, 0.00316, 0.01, 0.0316, 0.1, 0.316, 1.0, 3.16, 10.0, 31.6, 100.0]

[[scenarios]]
assignment = "linear"
kappa = 0.0
n = 1600

[[scenarios]]
assignment = "linear"
kappa = 0.4
n = 1600
"""


def _known(cls, obj: dict, where: str) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(obj) - names
    if unknown:
        raise ValueError(f"unknown key(s) in {where}: {sorted(unknown)}")
    return obj


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    kw = {}
    if "scenarios" in raw:
        kw["scenarios"] = tuple(ScenarioConfig(**_known(ScenarioConfig, s, "scenarios"))
                                for s in raw.pop("scenarios"))
    if "tuning" in raw:
        kw["tuning"] = TuningConfig(**_known(TuningConfig, raw.pop("tuning"), "tuning"))
    kw.update(_known(ExperimentConfig, raw, "top level"))
    if "methods" in kw:
        kw["methods"] = tuple(kw["methods"])
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        return config_from_dict(tomllib.load(fh))


def override(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    """Apply non-``None`` overrides (CLI flags win over file keys)."""
    kw = {k: v for k, v in kw.items() if v is not None}
    tuning_keys = {f.name for f in fields(TuningConfig)}
    tkw = {k: kw.pop(k) for k in list(kw) if k in tuning_keys}
    if tkw:
        kw["tuning"] = replace(cfg.tuning, **tkw)
    return replace(cfg, **kw)
