"""Drift monitoring on German credit: baseline, a quiet batch, a drifted batch.

    python3 demos/monitoring_demo.py

A reference report fixes metric ranges (value +/- 10%) and a feature
ranking.  Each live batch is bootstrapped; a bias alert fires when the 95%
interval misses the range, a ranking alert when nDCG drops below 0.90.
"""

import numpy as np

from fairlens import run_job, run_monitor
from fairlens.config import parse_config
from fairlens.bench import OversampleSpec, bundled_model_spec, oversample
from fairlens.datasets import FACET, LABEL, load_german_credit
from fairlens.monitor import baseline_from_report

CONFIG = {
    "dataset_type": "text/csv",
    "label": LABEL,
    "label_values_or_threshold": [1],
    "facet": [{"name_or_index": FACET, "value_or_threshold": [1]}],
    "methods": {
        "pre_training_bias": {"methods": ["CI", "DPL"]},
        "post_training_bias": {"methods": ["DPPL", "DI"]},
        "shap": {"num_samples": 130, "seed": 0},
    },
    "predictor": {"local_model": bundled_model_spec()},
    "monitor": {"resamples": 300},
}


def summarize(name, result):
    print(f"\n{name}: {result['row_count']} rows, nDCG {result['ndcg']:.3f}")
    for boot, alert in zip(result["bootstrap"], result["alerts"]):
        lo, hi = alert["reference"]
        mark = "ALERT" if alert["fired"] else "ok"
        print(f"  {boot['metric']:5s} CI [{boot['ci_low']:+.3f}, {boot['ci_high']:+.3f}]"
              f"  reference [{lo:+.3f}, {hi:+.3f}]  {mark}")
    rank = [a for a in result["alerts"] if a["kind"] == "explainability"]
    if rank:
        print(f"  ranking {'ALERT' if rank[0]['fired'] else 'ok'}")


def main():
    cfg = parse_config(CONFIG)
    german = load_german_credit()

    # ## Reference evaluation
    reference = run_job(cfg, german).report
    baseline = baseline_from_report(reference, margin=0.1)
    print("reference ranges:")
    for k, (lo, hi) in sorted(baseline.bias_ranges.items()):
        print(f"  {k:5s} [{lo:+.3f}, {hi:+.3f}]")
    print("reference top features:", [f for f, _ in baseline.reference_importance[:5]])

    # ## A batch from the same population
    # Rows resampled from the reference data: intervals should overlap.
    quiet = oversample(OversampleSpec(german, 600, seed=11))
    summarize("same population", run_monitor(cfg, baseline, quiet, seed=1))

    # ## A drifted batch
    # Good-risk foreign workers are under-represented and applicants with
    # no checking account are absent, which moves both the label-rate gap
    # and what the model attends to.
    labels = german.column(LABEL).values
    fw = german.column(FACET).values
    keep = np.flatnonzero(german.column("A14").values == 0)
    rng = np.random.default_rng(5)
    keep = keep[~((fw[keep] == 1) & (labels[keep] == 1)) | (rng.random(len(keep)) < 0.4)]
    drifted = oversample(OversampleSpec(german.take(keep), 600, seed=12))
    result = run_monitor(cfg, baseline, drifted, seed=1)
    summarize("drifted", result)
    print("\nexit code the CLI would return:", 2 if result["any_fired"] else 0)


if __name__ == "__main__":
    main()
