"""Group bias metrics, Shapley feature attributions and drift monitoring for tabular models."""

__version__ = "0.1.0"

from .config import AnalysisConfig, load_config, validate
from .engine import run_job, run_monitor
from .explain import AttributionResult, Baseline, ShapConfig, exact_shapley, explain_dataset, kernel_shap
from .monitor import MonitorBaseline, bias_drift, bootstrap_bias, ndcg, ndcg_drift
from .tabular import FacetSpec, OutcomeSpec, TabularDataset, binarize_labels, parse_dataset, partition_groups

__all__ = [
    "AnalysisConfig", "load_config", "validate", "run_job", "run_monitor",
    "AttributionResult", "Baseline", "ShapConfig", "exact_shapley", "explain_dataset", "kernel_shap",
    "MonitorBaseline", "bias_drift", "bootstrap_bias", "ndcg", "ndcg_drift",
    "FacetSpec", "OutcomeSpec", "TabularDataset", "binarize_labels", "parse_dataset", "partition_groups",
]
