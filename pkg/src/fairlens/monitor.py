"""Drift checks for deployed models.

Bias drift: a live metric's 95% percentile-bootstrap interval is compared to
a reference range; no overlap raises an alert.  Attribution drift: the live
feature ranking is scored by nDCG against the reference importances; below
0.90 raises an alert.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .bias.counts import GroupLabelCounts, Undefined, confusion
from .bias.posttraining import COUNT_METRICS, post_training_suite
from .bias.pretraining import class_imbalance, conditional_demographic_disparity, divergence_suite, dpl
from .errors import AllResamplesUndefined, ConfigError, FeatureSetMismatch, ZeroReferenceMass

NDCG_ALERT_THRESHOLD = 0.90
DEFAULT_RESAMPLES = 1000
CONFIDENCE = 0.95
LOW_SAMPLE_ROWS = 30
SCHEMA_VERSION = 1


# ---------------------------------------------------------------- baseline file

@dataclass
class MonitorBaseline:
    bias_ranges: dict[str, tuple[float, float]]
    reference_importance: list[tuple[str, float]]
    created_at: str = ""
    source_job: str = ""

    def __post_init__(self):
        for name, (lo, hi) in self.bias_ranges.items():
            if not lo <= hi:
                raise ConfigError(f"range min {lo} exceeds max {hi}", f"bias_ranges.{name}")
        scores = [s for _, s in self.reference_importance]
        if any(not math.isfinite(s) or s < 0 for s in scores):
            raise ConfigError("importance scores must be finite and nonnegative", "reference_importance")
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ConfigError("reference importance must be sorted descending", "reference_importance")

    def to_json(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "bias_ranges": {k: [lo, hi] for k, (lo, hi) in sorted(self.bias_ranges.items())},
            "reference_importance": [[f, s] for f, s in self.reference_importance],
            "created_at": self.created_at,
            "source_job": self.source_job,
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "MonitorBaseline":
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {doc.get('schema_version')!r}", "schema_version")
        ranges = {k: (float(v[0]), float(v[1])) for k, v in doc.get("bias_ranges", {}).items()}
        imp = [(str(f), float(s)) for f, s in doc.get("reference_importance", [])]
        return cls(ranges, imp, doc.get("created_at", ""), doc.get("source_job", ""))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "MonitorBaseline":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def baseline_from_report(report: dict[str, Any], margin: float = 0.1, created_at: str | None = None) -> MonitorBaseline:
    """Reference ranges of point +/- margin*|point| for every valued metric in a report."""
    if margin < 0:
        raise ConfigError("bias margin must be nonnegative", "--bias-margin")
    ranges: dict[str, tuple[float, float]] = {}
    facets = []
    for section in ("pre_training_bias", "post_training_bias"):
        facets.extend(report.get(section, {}).get("facets", []))
    multi = len({json.dumps(f["facet"], sort_keys=True) for f in facets}) > 1
    for f in facets:
        for name, entry in f["metrics"].items():
            v = entry.get("value")
            if isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v):
                key = f"{f['facet']['name_or_index']}/{name}" if multi else name
                ranges[key] = (v - margin * abs(v), v + margin * abs(v))
    imp = []
    expl = report.get("explanations")
    if expl:
        imp = sorted(((k, float(v)) for k, v in expl["global"].items()), key=lambda t: (-t[1], t[0]))
    stamp = created_at or datetime.now(timezone.utc).isoformat(timespec="seconds")
    return MonitorBaseline(ranges, imp, stamp, report.get("job", {}).get("config_digest", ""))


# ---------------------------------------------------------------- bootstrap

@dataclass
class BootstrapResult:
    metric: str
    point: float
    ci_low: float
    ci_high: float
    resamples: int
    undefined_resamples: int = 0
    confidence: float = CONFIDENCE
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> dict[str, Any]:
        return {
            "metric": self.metric, "point": self.point, "ci_low": self.ci_low, "ci_high": self.ci_high,
            "resamples": self.resamples, "undefined_resamples": self.undefined_resamples,
            "confidence": self.confidence, "flags": list(self.flags),
        }


def metric_from_rows(metric: str, labels, preds, is_d, strata=None) -> float | Undefined:
    """Evaluate one bias metric on (possibly resampled) rows."""
    if metric in COUNT_METRICS:
        lab = labels if labels is not None else np.zeros(len(preds), dtype=np.int8)
        c = confusion(lab, preds, is_d, require_both=False)
        if c.a.n == 0 or c.d.n == 0:
            return Undefined("empty group")
        return post_training_suite(c)[metric]
    if metric in ("CI", "DPL", "KL", "JS", "LP", "TVD", "KS"):
        ones = np.asarray(labels, dtype=bool)
        d = np.asarray(is_d, dtype=bool)
        c = GroupLabelCounts(int(np.sum(~d & ~ones)), int(np.sum(~d & ones)), int(np.sum(d & ~ones)), int(np.sum(d & ones)))
        if metric == "CI":
            return class_imbalance(c)
        if c.n_a == 0 or c.n_d == 0:
            return Undefined("empty group")
        return dpl(c) if metric == "DPL" else divergence_suite(c)[metric]
    if metric in ("CDDL", "CDDPL"):
        if strata is None:
            return Undefined("no strata")
        outcome = labels if metric == "CDDL" else preds
        return conditional_demographic_disparity(outcome, is_d, strata)[0]
    raise KeyError(f"metric {metric!r} cannot be bootstrapped from rows")


def percentile_interval(values: np.ndarray, confidence: float = CONFIDENCE) -> tuple[float, float]:
    tail = (1 - confidence) / 2 * 100
    lo, hi = np.percentile(values, [tail, 100 - tail])
    return float(lo), float(hi)


def bootstrap_metric(
    statistic: Callable[[np.ndarray], float | Undefined],
    n: int,
    resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
    workers: int = 1,
    name: str = "",
) -> BootstrapResult:
    """Percentile bootstrap of ``statistic(row_indices)``.

    Resample r draws its rows from a generator seeded with (seed, r), so the
    result does not depend on ``workers``.
    """
    if n <= 0:
        raise ValueError("live batch is empty")
    point = statistic(np.arange(n))

    def one(r: int):
        rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, r])
        v = statistic(rng.integers(0, n, size=n))
        return None if isinstance(v, Undefined) or not math.isfinite(v) else float(v)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(one, range(resamples)))
    else:
        values = [one(r) for r in range(resamples)]
    kept = np.array([v for v in values if v is not None])
    if kept.size == 0:
        raise AllResamplesUndefined(f"{name or 'metric'} is undefined on all {resamples} resamples")
    lo, hi = percentile_interval(kept)
    flags = []
    if n < LOW_SAMPLE_ROWS:
        flags.append("low-sample")
    if isinstance(point, Undefined):
        flags.append("point undefined on live batch")
        point_v = float("nan")
    else:
        point_v = float(point)
        if not lo <= point_v <= hi:
            flags.append("point outside interval")
    return BootstrapResult(name, point_v, lo, hi, resamples, resamples - int(kept.size), CONFIDENCE, flags)


def bootstrap_bias(
    labels: np.ndarray | None,
    preds: np.ndarray | None,
    is_d: np.ndarray,
    metric: str,
    resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
    strata: Sequence | None = None,
    workers: int = 1,
) -> BootstrapResult:
    labels = None if labels is None else np.asarray(labels)
    preds = None if preds is None else np.asarray(preds)
    is_d = np.asarray(is_d, dtype=bool)
    strata_arr = None if strata is None else np.asarray(strata, dtype=object)

    def stat(idx):
        return metric_from_rows(
            metric,
            None if labels is None else labels[idx],
            None if preds is None else preds[idx],
            is_d[idx],
            None if strata_arr is None else strata_arr[idx],
        )

    return bootstrap_metric(stat, len(is_d), resamples, seed, workers, metric)


# ---------------------------------------------------------------- alerts

@dataclass
class DriftAlert:
    kind: str  # "bias" | "explainability"
    detail: str
    observed: float | tuple[float, float]
    reference: float | tuple[float, float]
    fired: bool

    def to_json(self) -> dict[str, Any]:
        return {
            "kind": self.kind, "detail": self.detail, "fired": self.fired,
            "observed": list(self.observed) if isinstance(self.observed, tuple) else self.observed,
            "reference": list(self.reference) if isinstance(self.reference, tuple) else self.reference,
        }


def intervals_overlap(a: tuple[float, float], b: tuple[float, float]) -> bool:
    """Closed intervals; touching endpoints overlap."""
    return a[0] <= b[1] and b[0] <= a[1]


def bias_drift(baseline_range: tuple[float, float], live: BootstrapResult) -> DriftAlert:
    lo, hi = baseline_range
    if lo > hi:
        raise ValueError("invalid reference range")
    ci = (live.ci_low, live.ci_high)
    return DriftAlert("bias", live.metric, ci, (lo, hi), not intervals_overlap(ci, (lo, hi)))


def ndcg(reference: Sequence[tuple[str, float]], live: Sequence[tuple[str, float]]) -> float:
    """nDCG of the live ranking, gains taken from the reference importances.

    Live ties are broken by reference rank.
    """
    ref = dict(reference)
    if len(ref) != len(reference):
        raise FeatureSetMismatch("duplicate features in reference")
    live_names = [f for f, _ in live]
    if set(live_names) != set(ref) or len(live_names) != len(ref):
        raise FeatureSetMismatch(
            f"live features {sorted(live_names)} differ from reference {sorted(ref)}")
    ref_rank = {f: i for i, (f, _) in enumerate(sorted(reference, key=lambda t: -t[1]))}
    ideal = sorted(ref.values(), reverse=True)
    ordered = sorted(live, key=lambda t: (-t[1], ref_rank[t[0]]))
    discounts = 1.0 / np.log2(np.arange(2, len(ref) + 2))
    idcg = float(np.dot(ideal, discounts))
    if idcg <= 0:
        raise ZeroReferenceMass("all reference importances are zero")
    dcg = float(np.dot([ref[f] for f, _ in ordered], discounts))
    return dcg / idcg


def ndcg_drift(reference: MonitorBaseline | Sequence[tuple[str, float]], live_importance: Sequence[tuple[str, float]],
               threshold: float = NDCG_ALERT_THRESHOLD) -> tuple[float, DriftAlert]:
    ref = reference.reference_importance if isinstance(reference, MonitorBaseline) else reference
    score = ndcg(ref, live_importance)
    return score, DriftAlert("explainability", "ranking", score, threshold, score < threshold)
