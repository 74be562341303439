"""Counterfactual flip test: do nearest neighbours across groups get the same prediction?"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import InsufficientNeighbors, LengthMismatch
from ..tabular import ColumnKind

# cap on the (d rows x a rows x features) broadcast held in memory at once
_BLOCK_CELLS = 2_000_000


@dataclass(frozen=True)
class FlipTestConfig:
    k: int = 5
    distance: str = "normalized-euclidean-plus-hamming"
    vote: str = "majority"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")


def _split_features(features: np.ndarray, kinds: Sequence | None):
    features = np.asarray(features)
    if features.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    m = features.shape[1]
    if kinds is None:
        kinds = [ColumnKind.NUMERIC if features.dtype != object else ColumnKind.CATEGORICAL] * m
    num_idx = [j for j, k in enumerate(kinds) if ColumnKind(k) is ColumnKind.NUMERIC]
    cat_idx = [j for j, k in enumerate(kinds) if ColumnKind(k) is ColumnKind.CATEGORICAL]
    num = features[:, num_idx].astype(np.float64) if num_idx else np.zeros((len(features), 0))
    lo = np.nanmin(num, axis=0) if num_idx else np.zeros(0)
    hi = np.nanmax(num, axis=0) if num_idx else np.zeros(0)
    span = np.where(hi > lo, hi - lo, 1.0)
    num = (num - lo) / span
    codes = np.zeros((len(features), len(cat_idx)), dtype=np.int64)
    for c, j in enumerate(cat_idx):
        seen: dict = {}
        for i, v in enumerate(features[:, j]):
            codes[i, c] = -1 if v is None else seen.setdefault(v, len(seen))
    return num, codes


def neighbour_distances(num_d, cat_d, num_a, cat_a) -> np.ndarray:
    """Distance matrix [d rows x a rows]: Euclidean on scaled numerics plus categorical mismatches."""
    diff = num_d[:, None, :] - num_a[None, :, :]
    # a missing numeric cell is as far as the column's full range
    diff = np.where(np.isnan(diff), 1.0, diff)
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if cat_d.shape[1]:
        mismatch = cat_d[:, None, :] != cat_a[None, :, :]
        mismatch |= (cat_d[:, None, :] < 0) | (cat_a[None, :, :] < 0)
        dist = dist + mismatch.sum(axis=2)
    return dist


def flip_test(
    features: np.ndarray,
    preds: np.ndarray,
    is_d: np.ndarray,
    cfg: FlipTestConfig = FlipTestConfig(),
    kinds: Sequence | None = None,
    workers: int = 1,
) -> float:
    """(F+ - F-) / n_d with a majority vote over the k nearest rows of group a.

    A tied vote (possible for even k) keeps the d row's own prediction.
    Distance ties are broken by a-row position.
    """
    preds = np.asarray(preds, dtype=np.int8)
    is_d = np.asarray(is_d, dtype=bool)
    if not (len(features) == len(preds) == len(is_d)):
        raise LengthMismatch("features, predictions and groups must have equal length")
    num, cat = _split_features(features, kinds)
    a_rows = np.flatnonzero(~is_d)
    d_rows = np.flatnonzero(is_d)
    if len(a_rows) < cfg.k:
        raise InsufficientNeighbors(f"k={cfg.k} but group a has {len(a_rows)} rows")
    if len(d_rows) == 0:
        raise InsufficientNeighbors("group d is empty")
    num_a, cat_a, pred_a = num[a_rows], cat[a_rows], preds[a_rows]
    width = max(1, num.shape[1] + cat.shape[1])
    block = max(1, _BLOCK_CELLS // (len(a_rows) * width))

    def votes(start: int) -> np.ndarray:
        rows = d_rows[start:start + block]
        dist = neighbour_distances(num[rows], cat[rows], num_a, cat_a)
        nearest = np.argsort(dist, axis=1, kind="stable")[:, :cfg.k]
        return pred_a[nearest].sum(axis=1)

    starts = range(0, len(d_rows), block)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            positives = np.concatenate(list(pool.map(votes, starts)))
    else:
        positives = np.concatenate([votes(s) for s in starts])
    own = preds[d_rows]
    consensus = np.where(2 * positives > cfg.k, 1, np.where(2 * positives < cfg.k, 0, own))
    f_plus = int(np.sum((own == 0) & (consensus == 1)))
    f_minus = int(np.sum((own == 1) & (consensus == 0)))
    return (f_plus - f_minus) / len(d_rows)
