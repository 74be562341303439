"""Pre-training bias metrics: computed from labels and group membership only."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from ..errors import LengthMismatch
from .counts import GroupLabelCounts, Undefined, tally


def class_imbalance(c: GroupLabelCounts) -> float:
    return (c.n_a - c.n_d) / c.n


def dpl(c: GroupLabelCounts) -> float | Undefined:
    """Difference in positive label rates, q_a - q_d."""
    if c.n_a == 0 or c.n_d == 0:
        return Undefined("empty group")
    return c.q_a - c.q_d


# ---------------------------------------------------------------- demographic disparity

@dataclass(frozen=True)
class StratumDisparity:
    stratum_key: Any
    n_i: int
    dd_i: float
    # True when n^(0) or n^(1) was zero inside the stratum and that term was taken as 0
    flagged: bool = False


def demographic_disparity(outcomes: np.ndarray, is_d: np.ndarray) -> tuple[float, bool]:
    """DD = n_d^(0)/n^(0) - n_d^(1)/n^(1); an undefined term counts as 0 and sets the flag."""
    outcomes = np.asarray(outcomes, dtype=np.int8)
    is_d = np.asarray(is_d, dtype=bool)
    n1 = int(outcomes.sum())
    n0 = len(outcomes) - n1
    nd1 = int(outcomes[is_d].sum())
    nd0 = int(is_d.sum()) - nd1
    flagged = n0 == 0 or n1 == 0
    neg = nd0 / n0 if n0 else 0.0
    pos = nd1 / n1 if n1 else 0.0
    return neg - pos, flagged


def _stratum_keys(strata: Sequence) -> tuple[list, np.ndarray]:
    keys: dict = {}
    codes = np.empty(len(strata), dtype=np.intp)
    for i, v in enumerate(strata):
        if isinstance(v, float) and math.isnan(v):
            v = None
        codes[i] = keys.setdefault(v, len(keys))
    return list(keys), codes


def conditional_demographic_disparity(
    outcomes: np.ndarray, is_d: np.ndarray, strata: Sequence
) -> tuple[float, list[StratumDisparity]]:
    """Size-weighted mean of per-stratum DD; strata reported in first-seen order."""
    if not (len(outcomes) == len(is_d) == len(strata)):
        raise LengthMismatch("outcomes, groups and strata must have equal length")
    keys, codes = _stratum_keys(strata)
    outcomes = np.asarray(outcomes, dtype=np.int8)
    is_d = np.asarray(is_d, dtype=bool)
    parts = []
    total = 0.0
    for k, key in enumerate(keys):
        rows = codes == k
        dd, flagged = demographic_disparity(outcomes[rows], is_d[rows])
        n_i = int(rows.sum())
        parts.append(StratumDisparity(key, n_i, dd, flagged))
        total += n_i * dd
    return total / len(outcomes), parts


cddl = conditional_demographic_disparity


# ---------------------------------------------------------------- label-distribution divergences

def _xlog_ratio(x: float, y: float) -> float:
    if x == 0:
        return 0.0
    if y == 0:
        return math.inf
    return x * math.log(x / y)


def kl_divergence(q_a: float, q_d: float) -> float:
    """KL(P_a || P_d) in nats; +inf when P_d gives zero mass where P_a does not."""
    return _xlog_ratio(q_a, q_d) + _xlog_ratio(1 - q_a, 1 - q_d)


def js_divergence(q_a: float, q_d: float) -> float:
    m = (q_a + q_d) / 2
    return 0.5 * (kl_divergence(q_a, m) + kl_divergence(q_d, m))


def lp_norm(q_a: float, q_d: float, p: float = 2.0) -> float:
    if p < 1:
        raise ValueError("p must be >= 1")
    diffs = (abs(q_a - q_d), abs((1 - q_a) - (1 - q_d)))
    if math.isinf(p):
        return max(diffs)
    return (diffs[0] ** p + diffs[1] ** p) ** (1 / p)


def total_variation(q_a: float, q_d: float) -> float:
    return 0.5 * lp_norm(q_a, q_d, 1.0)


def kolmogorov_smirnov(q_a: float, q_d: float) -> float:
    return max(abs(q_a - q_d), abs((1 - q_a) - (1 - q_d)))


def divergence_suite(c: GroupLabelCounts, p: float = 2.0) -> dict[str, float]:
    q_a, q_d = c.q_a, c.q_d
    return {
        "KL": kl_divergence(q_a, q_d),
        "JS": js_divergence(q_a, q_d),
        "LP": lp_norm(q_a, q_d, p),
        "TVD": total_variation(q_a, q_d),
        "KS": kolmogorov_smirnov(q_a, q_d),
    }


def pre_training_metrics(
    labels: np.ndarray,
    is_d: np.ndarray,
    methods: Sequence[str],
    strata: Sequence | None = None,
    p: float = 2.0,
    workers: int = 1,
) -> dict[str, Any]:
    """Evaluate the requested pre-training metrics.

    CDDL maps to ``(value, strata)``; every other metric maps to a float or
    :class:`Undefined`.
    """
    c = tally(labels, is_d, workers=workers)
    out: dict[str, Any] = {}
    div = None
    for name in methods:
        if name == "CI":
            out[name] = class_imbalance(c)
        elif name == "DPL":
            out[name] = dpl(c)
        elif name in ("KL", "JS", "LP", "TVD", "KS"):
            div = div or divergence_suite(c, p)
            out[name] = div[name]
        elif name == "CDDL":
            if strata is None:
                out[name] = Undefined("group_variable not configured")
            else:
                out[name] = conditional_demographic_disparity(labels, is_d, strata)
        else:
            raise KeyError(f"unknown pre-training metric {name!r}")
    return out
