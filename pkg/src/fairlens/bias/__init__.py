"""Group bias metrics before and after training."""

from .counts import (
    ConfusionByGroup,
    GroupConfusion,
    GroupLabelCounts,
    Undefined,
    confusion,
    tally,
)
from .fliptest import FlipTestConfig, flip_test
from .posttraining import cddpl, post_training_metrics, post_training_suite
from .pretraining import (
    StratumDisparity,
    cddl,
    class_imbalance,
    divergence_suite,
    dpl,
    pre_training_metrics,
)

# "all" expands to these, frozen per release and echoed into every report
PRE_TRAINING_METRICS = ("CI", "DPL", "KL", "JS", "LP", "TVD", "KS", "CDDL")
POST_TRAINING_METRICS = ("DPPL", "DI", "DCA", "DCR", "RD", "DAR", "DRR", "AD", "TE", "CDDPL", "FT")
LABEL_FREE_METRICS = ("DPPL", "DI", "CDDPL", "FT")

DESCRIPTIONS = {
    "CI": "Class imbalance: (n_a - n_d) / n. Negative when group d is the larger group.",
    "DPL": "Difference in positive proportions of observed labels: q_a - q_d.",
    "KL": "KL divergence of the label distribution of a from that of d, in nats.",
    "JS": "Jensen-Shannon divergence between the label distributions of a and d, in nats.",
    "LP": "Lp norm of the difference between the label distributions of a and d.",
    "TVD": "Total variation distance: half the L1 distance between label distributions.",
    "KS": "Kolmogorov-Smirnov: largest label-probability gap between the groups.",
    "CDDL": "Conditional demographic disparity in labels, weighted over strata of the group variable.",
    "DPPL": "Difference in positive proportions of predicted labels.",
    "DI": "Disparate impact: ratio of predicted positive rates, d over a.",
    "DCA": "Difference in conditional acceptance: observed over predicted positives, a minus d.",
    "DCR": "Difference in conditional rejection: observed over predicted negatives, a minus d.",
    "RD": "Recall difference, a minus d.",
    "DAR": "Difference in acceptance rates (precision), a minus d.",
    "DRR": "Difference in rejection rates (negative predictive value), a minus d.",
    "AD": "Accuracy difference, a minus d.",
    "TE": "Treatment equality: FN_d/FP_d - FN_a/FP_a (note: d term first).",
    "CDDPL": "Conditional demographic disparity of predicted labels.",
    "FT": "Flip test: (F+ - F-) / n_d over k nearest neighbours in group a.",
}

__all__ = [
    "ConfusionByGroup", "GroupConfusion", "GroupLabelCounts", "Undefined", "confusion", "tally",
    "FlipTestConfig", "flip_test", "cddpl", "post_training_metrics", "post_training_suite",
    "StratumDisparity", "cddl", "class_imbalance", "divergence_suite", "dpl", "pre_training_metrics",
    "PRE_TRAINING_METRICS", "POST_TRAINING_METRICS", "LABEL_FREE_METRICS", "DESCRIPTIONS",
]
