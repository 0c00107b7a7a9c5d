"""Kernel balancing weights for learning treatment rules under covariate shift."""

from .balance import BalanceHyperparams, GramCache, assemble_qp, solve_balancing_weights
from .data import Dataset, DataError, LinearRule, WeightSolution, group_indices, load_dataset, write_dataset
from .itr import classification_view, estimate_value, learn_linear_rule
from .kernel import KernelSpec, gram, median_heuristic, pooled_spec
from .mmd import WeightedSample, group_mmds, mmd_squared
from .qp import QpError, QpProblem, QpSettings, solve_qp
from .tuning import TuningConfig, select_alpha, select_lambda

__version__ = "0.1.0"

__all__ = [
    "BalanceHyperparams", "GramCache", "assemble_qp", "solve_balancing_weights",
    "Dataset", "DataError", "LinearRule", "WeightSolution", "group_indices", "load_dataset",
    "write_dataset", "classification_view", "estimate_value", "learn_linear_rule",
    "KernelSpec", "gram", "median_heuristic", "pooled_spec", "WeightedSample", "group_mmds",
    "mmd_squared", "QpError", "QpProblem", "QpSettings", "solve_qp", "TuningConfig",
    "select_alpha", "select_lambda",
]
