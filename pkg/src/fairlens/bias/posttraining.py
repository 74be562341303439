"""Post-training bias metrics over per-group confusion counts."""

from __future__ import annotations

from typing import Any, Sequence

import numpy as np

from .counts import ConfusionByGroup, Undefined, confusion, ratio
from .pretraining import conditional_demographic_disparity


def _diff(x, y):
    if isinstance(x, Undefined) or isinstance(y, Undefined):
        return Undefined()
    return x - y


def dppl(c: ConfusionByGroup):
    return _diff(ratio(c.a.pred_pos, c.a.n), ratio(c.d.pred_pos, c.d.n))


def disparate_impact(c: ConfusionByGroup):
    q_hat_a = ratio(c.a.pred_pos, c.a.n)
    q_hat_d = ratio(c.d.pred_pos, c.d.n)
    if isinstance(q_hat_a, Undefined) or isinstance(q_hat_d, Undefined):
        return Undefined()
    return ratio(q_hat_d, q_hat_a)


def post_training_suite(c: ConfusionByGroup) -> dict[str, Any]:
    """All count-based post-training metrics.

    Difference metrics are group a minus group d, except TE which follows its
    usual definition FN_d/FP_d - FN_a/FP_a.
    """
    a, d = c.a, c.d
    return {
        "DPPL": dppl(c),
        "DI": disparate_impact(c),
        "DCA": _diff(ratio(a.label_pos, a.pred_pos), ratio(d.label_pos, d.pred_pos)),
        "DCR": _diff(ratio(a.label_neg, a.pred_neg), ratio(d.label_neg, d.pred_neg)),
        "AD": _diff(ratio(a.tp + a.tn, a.n), ratio(d.tp + d.tn, d.n)),
        "RD": _diff(ratio(a.tp, a.label_pos), ratio(d.tp, d.label_pos)),
        "DAR": _diff(ratio(a.tp, a.pred_pos), ratio(d.tp, d.pred_pos)),
        "DRR": _diff(ratio(a.tn, a.pred_neg), ratio(d.tn, d.pred_neg)),
        "TE": _diff(ratio(d.fn, d.fp), ratio(a.fn, a.fp)),
    }


COUNT_METRICS = ("DPPL", "DI", "DCA", "DCR", "AD", "RD", "DAR", "DRR", "TE")


def cddpl(preds: np.ndarray, is_d: np.ndarray, strata: Sequence):
    """Conditional demographic disparity of predicted labels."""
    return conditional_demographic_disparity(preds, is_d, strata)


def post_training_metrics(
    labels: np.ndarray,
    preds: np.ndarray,
    is_d: np.ndarray,
    methods: Sequence[str],
    strata: Sequence | None = None,
    features: np.ndarray | None = None,
    kinds: Sequence | None = None,
    flip_k: int = 5,
    workers: int = 1,
) -> dict[str, Any]:
    from .fliptest import FlipTestConfig, flip_test

    conf = confusion(labels, preds, is_d, workers=workers)
    suite = post_training_suite(conf)
    out: dict[str, Any] = {}
    for name in methods:
        if name in suite:
            out[name] = suite[name]
        elif name == "CDDPL":
            out[name] = Undefined("group_variable not configured") if strata is None else cddpl(preds, is_d, strata)
        elif name == "FT":
            if features is None:
                out[name] = Undefined("no features available")
            else:
                out[name] = flip_test(features, preds, is_d, FlipTestConfig(k=flip_k), kinds=kinds, workers=workers)
        else:
            raise KeyError(f"unknown post-training metric {name!r}")
    return out
