"""Group/label/prediction count families that every bias metric is built from."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateFacet, LengthMismatch


@dataclass(frozen=True)
class Undefined:
    """Marker for a metric whose formula divides by zero on the given counts."""

    reason: str = "zero denominator"

    def __bool__(self) -> bool:
        return False


def ratio(num: float, den: float) -> float | Undefined:
    return num / den if den else Undefined()


# rows per reduction task; bias reductions favour large chunks
CHUNK_ROWS = 1 << 18


@dataclass(frozen=True)
class GroupLabelCounts:
    n_a0: int
    n_a1: int
    n_d0: int
    n_d1: int

    @property
    def n_a(self) -> int:
        return self.n_a0 + self.n_a1

    @property
    def n_d(self) -> int:
        return self.n_d0 + self.n_d1

    @property
    def n(self) -> int:
        return self.n_a + self.n_d

    @property
    def n0(self) -> int:
        return self.n_a0 + self.n_d0

    @property
    def n1(self) -> int:
        return self.n_a1 + self.n_d1

    @property
    def q_a(self) -> float:
        return self.n_a1 / self.n_a

    @property
    def q_d(self) -> float:
        return self.n_d1 / self.n_d

    def swapped(self) -> "GroupLabelCounts":
        return GroupLabelCounts(self.n_d0, self.n_d1, self.n_a0, self.n_a1)


@dataclass(frozen=True)
class GroupConfusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def label_pos(self) -> int:
        return self.tp + self.fn

    @property
    def label_neg(self) -> int:
        return self.tn + self.fp

    @property
    def pred_pos(self) -> int:
        return self.tp + self.fp

    @property
    def pred_neg(self) -> int:
        return self.tn + self.fn


@dataclass(frozen=True)
class ConfusionByGroup:
    a: GroupConfusion
    d: GroupConfusion

    @property
    def labels(self) -> GroupLabelCounts:
        return GroupLabelCounts(self.a.label_neg, self.a.label_pos, self.d.label_neg, self.d.label_pos)

    def swapped(self) -> "ConfusionByGroup":
        return ConfusionByGroup(self.d, self.a)


def _check(*vectors: np.ndarray) -> int:
    n = len(vectors[0])
    if any(len(v) != n for v in vectors):
        raise LengthMismatch(f"vector lengths differ: {[len(v) for v in vectors]}")
    return n


def cell_histogram(codes: np.ndarray, size: int, workers: int = 1) -> np.ndarray:
    """Chunked ``bincount``; integer sums make the result independent of ``workers``."""
    n = len(codes)
    if workers <= 1 or n <= CHUNK_ROWS:
        return np.bincount(codes, minlength=size)
    starts = range(0, n, CHUNK_ROWS)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(lambda s: np.bincount(codes[s:s + CHUNK_ROWS], minlength=size), starts)
        return np.sum(list(parts), axis=0)


def tally(labels: np.ndarray, is_d: np.ndarray, workers: int = 1, require_both: bool = True) -> GroupLabelCounts:
    """Count labels per group; ``is_d`` is True for rows of the disadvantaged group."""
    _check(labels, is_d)
    codes = np.asarray(is_d, dtype=np.intp) * 2 + np.asarray(labels, dtype=np.intp)
    h = cell_histogram(codes, 4, workers)
    c = GroupLabelCounts(int(h[0]), int(h[1]), int(h[2]), int(h[3]))
    if require_both and (c.n_a == 0 or c.n_d == 0):
        raise DegenerateFacet("one of the groups is empty")
    return c


def confusion(labels: np.ndarray, preds: np.ndarray, is_d: np.ndarray, workers: int = 1,
              require_both: bool = True) -> ConfusionByGroup:
    _check(labels, preds, is_d)
    codes = (np.asarray(is_d, dtype=np.intp) * 4
             + np.asarray(labels, dtype=np.intp) * 2
             + np.asarray(preds, dtype=np.intp))
    h = [int(v) for v in cell_histogram(codes, 8, workers)]
    # code = group*4 + label*2 + pred
    a = GroupConfusion(tp=h[3], fp=h[1], tn=h[0], fn=h[2])
    d = GroupConfusion(tp=h[7], fp=h[5], tn=h[4], fn=h[6])
    if require_both and (a.n == 0 or d.n == 0):
        raise DegenerateFacet("one of the groups is empty")
    return ConfusionByGroup(a, d)
