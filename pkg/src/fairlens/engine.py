"""Job orchestration: validate, pre-training bias, post-training bias, explanations.

A failure inside one step (or one metric) becomes a warning in the report;
only a job where no requested method produced anything is fatal.
"""

from __future__ import annotations

import hashlib
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .bias import (
    LABEL_FREE_METRICS,
    POST_TRAINING_METRICS,
    PRE_TRAINING_METRICS,
    FlipTestConfig,
    Undefined,
    flip_test,
    post_training_metrics,
    pre_training_metrics,
)
from .bias.pretraining import StratumDisparity
from .config import AnalysisConfig, FacetConfig, apply_column_kinds, check_columns, predictor_kwargs, resolve_predictor_target
from .errors import (
    EndpointUnreachable,
    FairlensError,
    FatalJobError,
    IncompatibleRule,
    MissingColumn,
)
from .explain import AttributionResult, Baseline, ShapConfig, auto_baseline, explain_dataset, impute_baseline
from .model import BinaryPredictionRule, ModelClient, PredictionSet, PredictorConfig, binarize_predictions
from .monitor import (
    MonitorBaseline,
    bias_drift,
    bootstrap_bias,
    bootstrap_metric,
    ndcg_drift,
)
from .tabular import FacetSpec, OutcomeSpec, TabularDataset, binarize_labels, parse_dataset, partition_groups, to_csv

log = logging.getLogger(__name__)

Transport = Callable[[bytes, str, str], tuple[int, bytes]]


@dataclass
class JobResult:
    report: dict[str, Any]
    attributions: AttributionResult | None = None
    timings: dict[str, float] = field(default_factory=dict)
    # request counters vary with retries, so they stay out of the report
    stats: dict[str, int] = field(default_factory=dict)


@dataclass
class JobContext:
    cfg: AnalysisConfig
    ds: TabularDataset
    workers: int = 1
    model_dir: str | Path | None = None
    config_dir: str | Path | None = None
    transport: Transport | None = None
    warnings: list[dict[str, str]] = field(default_factory=list)

    def warn(self, step: str, err: Exception | str, **extra) -> None:
        code = type(err).__name__ if isinstance(err, Exception) else "Notice"
        entry = {"step": step, "code": code, "message": str(err), **{k: str(v) for k, v in extra.items()}}
        log.warning("%s: %s", step, entry["message"])
        self.warnings.append(entry)


# ---------------------------------------------------------------- helpers

def encode_metric(value) -> dict[str, Any]:
    """Report entry for one metric value (float, Undefined, inf or (value, strata))."""
    strata = None
    if isinstance(value, tuple):
        value, strata = value
    if isinstance(value, Undefined):
        entry = {"value": "undefined", "flags": [value.reason]}
    elif math.isinf(value):
        entry = {"value": "inf" if value > 0 else "-inf", "flags": ["infinite"]}
    else:
        entry = {"value": float(value), "flags": []}
    if strata is not None:
        entry["strata"] = [_stratum_json(s) for s in strata]
        if any(s.flagged for s in strata):
            entry["flags"].append("strata with an empty label class counted as 0")
    return entry


def _stratum_json(s: StratumDisparity) -> dict[str, Any]:
    key = s.stratum_key
    if isinstance(key, (np.floating, float)):
        key = float(key)
    return {"stratum": key, "n": int(s.n_i), "dd": float(s.dd_i), "flagged": bool(s.flagged)}


def dataset_digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def feature_columns(cfg: AnalysisConfig, ds: TabularDataset) -> list[str]:
    """Model inputs: all columns except the label, facets and excluded columns."""
    drop = set()
    if cfg.label is not None:
        try:
            drop.add(ds.resolve(cfg.label))
        except MissingColumn:
            pass
    if not cfg.facet_is_feature:
        drop |= {ds.resolve(f.name_or_index) for f in cfg.facets}
    drop |= {ds.resolve(r) for r in cfg.excluded_columns}
    return [n for n in ds.names if n not in drop]


def build_client(ctx: JobContext) -> ModelClient:
    p = resolve_predictor_target(ctx.cfg, ctx.model_dir, ctx.config_dir)
    if p is None:
        raise EndpointUnreachable(
            f"model {ctx.cfg.predictor['model_name']!r} is not available (no <model-dir>/<name>.json)")
    return ModelClient(PredictorConfig(**predictor_kwargs(p)), transport=ctx.transport)


def model_features(client: ModelClient, ds: TabularDataset, default: list[str]) -> list[str]:
    names = client.expected_features
    if names is None:
        return default
    missing = [n for n in names if n not in ds]
    if missing:
        raise MissingColumn(f"model expects columns missing from the dataset: {missing}")
    return list(names)


def prediction_rule(cfg: AnalysisConfig, p: PredictionSet) -> BinaryPredictionRule:
    score_index = (cfg.predictor or {}).get("score_index")
    width = None if p.scores is None else p.scores.shape[1]
    lvt = cfg.label_values_or_threshold
    if cfg.probability_threshold is not None and p.scores is not None:
        return BinaryPredictionRule(score_threshold=float(cfg.probability_threshold), score_index=score_index)
    if p.predicted_labels is not None and isinstance(lvt, list):
        return BinaryPredictionRule(positive_classes=tuple(lvt))
    if width == 1 or (width and score_index is not None):
        if isinstance(lvt, (int, float)) and not isinstance(lvt, bool):
            return BinaryPredictionRule(score_threshold=float(lvt), score_index=score_index)
        return BinaryPredictionRule(score_threshold=0.5, score_index=score_index)
    raise IncompatibleRule("cannot derive binary predictions; set probability_threshold or score_index")


def rule_json(rule: BinaryPredictionRule) -> dict[str, Any]:
    if rule.score_threshold is not None:
        return {"score_threshold": rule.score_threshold, "score_index": rule.score_index}
    return {"positive_classes": list(rule.positive_classes)}


def _strata(ctx: JobContext):
    if ctx.cfg.group_variable is None:
        return None
    return ctx.ds.column(ctx.ds.resolve(ctx.cfg.group_variable)).values


def _partitions(ctx: JobContext, step: str) -> list[tuple[FacetConfig, np.ndarray]]:
    out = []
    for f in ctx.cfg.facets:
        try:
            spec = FacetSpec.from_config(f.name_or_index, f.value_or_threshold, f.at_or_below)
            out.append((f, partition_groups(ctx.ds, spec)))
        except FairlensError as e:
            ctx.warn(step, e, facet=f.key)
    return out


def _labels(ctx: JobContext) -> np.ndarray:
    return binarize_labels(ctx.ds, OutcomeSpec.from_config(ctx.cfg.label, ctx.cfg.label_values_or_threshold))


# ---------------------------------------------------------------- steps

def pre_training_step(ctx: JobContext) -> dict[str, Any] | None:
    cfg = ctx.cfg
    methods = [m for m in cfg.pre_methods if m != "CDDL" or cfg.group_variable is not None]
    try:
        labels = _labels(ctx)
    except FairlensError as e:
        ctx.warn("pre_training_bias", e)
        return None
    facets = []
    for f, is_d in _partitions(ctx, "pre_training_bias"):
        vals = pre_training_metrics(labels, is_d, methods, _strata(ctx), cfg.p, ctx.workers)
        facets.append({"facet": f.to_json(), "metrics": {k: encode_metric(v) for k, v in vals.items()}})
    if not facets:
        return None
    return {"methods": methods, "facets": facets}


def predict_step(ctx: JobContext, client: ModelClient, features: list[str]) -> PredictionSet:
    return client.predict(ctx.ds.matrix(features), features)


def post_training_step(ctx: JobContext, preds: PredictionSet, features: list[str],
                       labels: np.ndarray | None) -> dict[str, Any] | None:
    cfg = ctx.cfg
    try:
        rule = prediction_rule(cfg, preds)
        yhat = binarize_predictions(preds, rule)
    except FairlensError as e:
        ctx.warn("post_training_bias", e)
        return None
    methods = [m for m in cfg.post_methods if m != "CDDPL" or cfg.group_variable is not None]
    if labels is None:
        skipped = [m for m in methods if m not in LABEL_FREE_METRICS]
        if skipped:
            ctx.warn("post_training_bias", f"no ground-truth labels; skipped {', '.join(skipped)}")
        methods = [m for m in methods if m in LABEL_FREE_METRICS]
        labels = np.zeros(ctx.ds.row_count, dtype=np.int8)
    count_methods = [m for m in methods if m != "FT"]
    matrix = kinds = None
    if "FT" in methods:
        matrix = ctx.ds.matrix(features)
        kinds = ctx.ds.kinds(features)
    facets = []
    for f, is_d in _partitions(ctx, "post_training_bias"):
        vals = post_training_metrics(labels, yhat, is_d, count_methods, _strata(ctx), workers=ctx.workers)
        if "FT" in methods:
            try:
                vals["FT"] = flip_test(matrix, yhat, is_d, FlipTestConfig(k=cfg.flip_k), kinds=kinds, workers=ctx.workers)
            except FairlensError as e:
                ctx.warn("post_training_bias", e, facet=f.key, metric="FT")
        ordered = {m: vals[m] for m in methods if m in vals}
        facets.append({"facet": f.to_json(), "metrics": {k: encode_metric(v) for k, v in ordered.items()}})
    if not facets:
        return None
    return {"methods": methods, "prediction_rule": rule_json(rule), "facets": facets}


def load_baseline(ctx: JobContext, features: list[str], matrix: np.ndarray) -> Baseline:
    auto = auto_baseline(matrix, ctx.ds.kinds(features))
    src = ctx.cfg.shap.baseline
    if src is None:
        return auto
    if isinstance(src, list):
        rows = np.array(src, dtype=matrix.dtype)
        if rows.ndim != 2 or rows.shape[1] != len(features):
            raise ValueError(f"inline baseline rows must have {len(features)} values")
        return impute_baseline(Baseline(rows, "user-file"), auto)
    if "://" in src:
        ctx.warn("explanations", f"baseline {src!r} is a remote URI and is not fetched; using column means/modes")
        return auto
    path = Path(src)
    if not path.is_absolute() and not path.exists() and ctx.config_dir is not None:
        path = Path(ctx.config_dir) / path
    bds = parse_dataset(path.read_bytes(), ctx.cfg.dataset_type)
    if all(n in bds for n in features):
        bds = bds.select(features)
    elif len(bds.names) != len(features):
        raise ValueError(f"baseline file has {len(bds.names)} columns, expected {len(features)}")
    rows = bds.matrix(bds.names)
    if matrix.dtype != object:
        rows = rows.astype(np.float64)
    return impute_baseline(Baseline(rows, "user-file"), auto)


def explain_step(ctx: JobContext, client: ModelClient, features: list[str], rows: np.ndarray | None = None,
                 agg_method: str | None = None) -> AttributionResult:
    s = ctx.cfg.shap
    matrix = ctx.ds.matrix(features) if rows is None else rows
    baseline = load_baseline(ctx, features, matrix)
    score_index = (ctx.cfg.predictor or {}).get("score_index")

    def model(x: np.ndarray) -> np.ndarray:
        return client.scores(x, features, score_index)

    shap_cfg = ShapConfig(s.num_samples, s.mode, s.seed, agg_method or s.agg_method)
    result = explain_dataset(matrix, model, baseline, shap_cfg, features, ctx.workers)
    result.flags.insert(0, f"baseline: {baseline.source}")
    return result


def explanations_json(ctx: JobContext, res: AttributionResult) -> dict[str, Any]:
    s = ctx.cfg.shap
    return {
        "agg_method": res.agg_method,
        "mode": res.mode,
        "num_samples": s.num_samples,
        "seed": s.seed,
        "base_value": res.base_value,
        "global": {n: float(v) for n, v in zip(res.feature_names, res.global_importance)},
        "ranking": [[n, v] for n, v in res.ranking()],
        "local_file": "explanations_shap/out.csv",
        "flags": list(res.flags),
    }


# ---------------------------------------------------------------- job

def run_job(
    cfg: AnalysisConfig,
    ds: TabularDataset,
    workers: int = 1,
    model_dir: str | Path | None = None,
    config_dir: str | Path | None = None,
    transport: Transport | None = None,
    data_digest: str | None = None,
) -> JobResult:
    if workers < 1:
        raise ValueError("workers must be >= 1")
    ds = apply_column_kinds(cfg, ds)
    check_columns(cfg, ds)
    ctx = JobContext(cfg, ds, workers, model_dir, config_dir, transport)
    for w in cfg.warnings:
        ctx.warn("validate", w)
    timings: dict[str, float] = {}
    report: dict[str, Any] = {
        "job": {
            "config_digest": cfg.digest,
            "dataset_digest": data_digest or dataset_digest(to_csv(ds)),
            "row_count": ds.row_count,
            "config": cfg.raw,
            "metric_catalog": {"pre_training_bias": list(PRE_TRAINING_METRICS),
                               "post_training_bias": list(POST_TRAINING_METRICS)},
        },
    }
    produced = False
    stats: dict[str, int] = {}

    if cfg.pre_methods is not None:
        t0 = time.perf_counter()
        pre = pre_training_step(ctx)
        timings["pre_bias"] = time.perf_counter() - t0
        if pre is not None:
            report["pre_training_bias"] = pre
            produced = True

    attributions = None
    if cfg.post_methods is not None or cfg.shap is not None:
        client = features = None
        try:
            client = build_client(ctx)
            features = model_features(client, ds, feature_columns(cfg, ds))
        except FairlensError as e:
            if cfg.post_methods is not None:
                ctx.warn("post_training_bias", e)
            if cfg.shap is not None:
                ctx.warn("explanations", e)
        if client is not None and cfg.post_methods is not None:
            t0 = time.perf_counter()
            try:
                preds = predict_step(ctx, client, features)
                labels = _labels(ctx) if cfg.label is not None else None
                post = post_training_step(ctx, preds, features, labels)
                if post is not None:
                    report["post_training_bias"] = post
                    produced = True
            except FairlensError as e:
                ctx.warn("post_training_bias", e)
            timings["post_bias"] = time.perf_counter() - t0
        if client is not None and cfg.shap is not None:
            t0 = time.perf_counter()
            try:
                attributions = explain_step(ctx, client, features)
                report["explanations"] = explanations_json(ctx, attributions)
                produced = True
            except (FairlensError, ValueError, OSError) as e:
                ctx.warn("explanations", e)
            timings["shap"] = time.perf_counter() - t0
        if client is not None:
            stats = {"model_requests": client.stats.requests, "model_retries": client.stats.retries}

    report["warnings"] = ctx.warnings
    if not produced:
        raise FatalJobError("no requested method produced output: " +
                            "; ".join(f"{w['step']}: {w['message']}" for w in ctx.warnings))
    return JobResult(report, attributions, timings, stats)


# ---------------------------------------------------------------- monitoring

def _split_key(key: str, cfg: AnalysisConfig) -> tuple[FacetConfig, str]:
    if "/" in key:
        facet, metric = key.rsplit("/", 1)
        for f in cfg.facets:
            if f.key == facet:
                return f, metric
        raise MissingColumn(f"baseline range {key!r} names a facet absent from the config")
    return cfg.facets[0], key


def run_monitor(
    cfg: AnalysisConfig,
    baseline: MonitorBaseline,
    ds: TabularDataset,
    workers: int = 1,
    seed: int = 0,
    model_dir: str | Path | None = None,
    config_dir: str | Path | None = None,
    transport: Transport | None = None,
) -> dict[str, Any]:
    """Bootstrap each baselined bias metric on the live batch and check ranking drift."""
    ds = apply_column_kinds(cfg, ds)
    has_labels = cfg.label is not None
    try:
        if has_labels:
            ds.resolve(cfg.label)
    except MissingColumn:
        has_labels = False
    check_columns(cfg, ds, require_label=has_labels)
    ctx = JobContext(cfg, ds, workers, model_dir, config_dir, transport)
    if not has_labels:
        ctx.warn("monitor", "live data has no label column; only label-free metrics are monitored")
    labels = _labels(ctx) if has_labels else None
    parts = {f.key: is_d for f, is_d in _partitions(ctx, "monitor")}
    strata = _strata(ctx)

    needs_preds = any(_split_key(k, cfg)[1] in POST_TRAINING_METRICS for k in baseline.bias_ranges)
    needs_shap = bool(baseline.reference_importance) and cfg.shap is not None
    client = features = None
    yhat = None
    if needs_preds or needs_shap:
        try:
            client = build_client(ctx)
            features = model_features(client, ds, feature_columns(cfg, ds))
            if needs_preds:
                preds = predict_step(ctx, client, features)
                yhat = binarize_predictions(preds, prediction_rule(cfg, preds))
        except FairlensError as e:
            ctx.warn("monitor", e)

    alerts, boots = [], []
    for key, rng in sorted(baseline.bias_ranges.items()):
        try:
            facet, metric = _split_key(key, cfg)
        except MissingColumn as e:
            ctx.warn("monitor", e, metric=key)
            continue
        if facet.key not in parts:
            continue
        is_d = parts[facet.key]
        if metric not in LABEL_FREE_METRICS and labels is None:
            ctx.warn("monitor", "needs ground-truth labels; skipped", metric=key)
            continue
        if metric in POST_TRAINING_METRICS and yhat is None:
            ctx.warn("monitor", "no predictions available; skipped", metric=key)
            continue
        if metric in ("CDDL", "CDDPL") and strata is None:
            ctx.warn("monitor", "group_variable not configured; skipped", metric=key)
            continue
        try:
            if metric == "FT":
                res = _bootstrap_flip(ctx, features, yhat, is_d, cfg.resamples, seed)
            else:
                res = bootstrap_bias(labels, yhat, is_d, metric, cfg.resamples, seed, strata, workers)
        except FairlensError as e:
            ctx.warn("monitor", e, metric=key)
            continue
        res.metric = key
        boots.append(res.to_json())
        alerts.append(bias_drift(rng, res).to_json())

    ndcg = None
    if needs_shap and client is not None:
        try:
            attr = explain_step(ctx, client, features, agg_method="mean_abs")
            live = attr.ranking()
            ndcg, alert = ndcg_drift(baseline, live, cfg.ndcg_threshold)
            alerts.append(alert.to_json())
        except (FairlensError, ValueError, OSError) as e:
            ctx.warn("monitor", e, metric="ranking")

    return {
        "alerts": alerts,
        "bootstrap": boots,
        "ndcg": ndcg,
        "any_fired": any(a["fired"] for a in alerts),
        "row_count": ds.row_count,
        "warnings": ctx.warnings,
    }


def _bootstrap_flip(ctx: JobContext, features, yhat, is_d, resamples: int, seed: int):
    matrix = ctx.ds.matrix(features)
    kinds = ctx.ds.kinds(features)
    cfg = FlipTestConfig(k=ctx.cfg.flip_k)

    def stat(idx):
        try:
            return flip_test(matrix[idx], yhat[idx], is_d[idx], cfg, kinds=kinds)
        except FairlensError:
            return Undefined("too few neighbours")

    return bootstrap_metric(stat, len(is_d), resamples, seed, ctx.workers, "FT")
