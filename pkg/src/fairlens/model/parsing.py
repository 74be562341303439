"""Model response parsing and binarization of predictions."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from ..errors import IncompatibleRule, ResponseShapeMismatch
from ..tabular import ColumnKind, make_column, member_mask

CSV = "text/csv"
JSONLINES = "application/jsonlines"


@dataclass(frozen=True)
class PredictionSet:
    scores: np.ndarray | None = None  # [rows x K]
    predicted_labels: np.ndarray | None = None  # object array of raw labels

    def __post_init__(self):
        if self.scores is None and self.predicted_labels is None:
            raise ValueError("a prediction set needs scores or labels")
        if self.scores is not None and self.predicted_labels is not None:
            if len(self.scores) != len(self.predicted_labels):
                raise ResponseShapeMismatch("score and label counts differ")

    @property
    def row_count(self) -> int:
        return len(self.scores) if self.scores is not None else len(self.predicted_labels)

    def __eq__(self, other):
        if not isinstance(other, PredictionSet):
            return NotImplemented
        return (_arr_eq(self.scores, other.scores)
                and _arr_eq(self.predicted_labels, other.predicted_labels))

    @staticmethod
    def concat(parts: Sequence["PredictionSet"]) -> "PredictionSet":
        scores = [p.scores for p in parts]
        labels = [p.predicted_labels for p in parts]
        if any(s is None for s in scores):
            cat_scores = None
        else:
            widths = {s.shape[1] for s in scores}
            if len(widths) > 1:
                raise ResponseShapeMismatch(f"score vectors of differing lengths {sorted(widths)}")
            cat_scores = np.concatenate(scores)
        cat_labels = None if any(lb is None for lb in labels) else np.concatenate(labels)
        return PredictionSet(cat_scores, cat_labels)

    def positive_scores(self, score_index: int | None = None) -> np.ndarray:
        """The single score per row used for thresholding and attribution."""
        if self.scores is None:
            raise IncompatibleRule("predictions carry no scores")
        if score_index is None:
            if self.scores.shape[1] != 1:
                raise IncompatibleRule(
                    f"{self.scores.shape[1]} scores per row; set score_index to pick the positive class")
            score_index = 0
        return self.scores[:, score_index]


def _arr_eq(x, y) -> bool:
    if x is None or y is None:
        return x is None and y is None
    return x.shape == y.shape and bool(np.all(x == y))


def _field(record, selector, line: int):
    try:
        return record[selector]
    except (IndexError, KeyError, TypeError):
        raise ResponseShapeMismatch(f"response line {line}: no field {selector!r}") from None


def _as_scores(value, line: int) -> list[float]:
    if isinstance(value, str):
        v = value.strip()
        try:
            value = json.loads(v) if v.startswith("[") else float(v)
        except ValueError:
            raise ResponseShapeMismatch(f"response line {line}: cannot read scores from {value!r}") from None
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value):
        raise ResponseShapeMismatch(f"response line {line}: scores must be numbers")
    if not all(math.isfinite(x) for x in value):
        raise ResponseShapeMismatch(f"response line {line}: non-finite score")
    return [float(x) for x in value]


def _records(body: bytes, content_type: str) -> list:
    text = body.decode("utf-8")
    if content_type == CSV:
        return [r for r in csv.reader(io.StringIO(text, newline="")) if r]
    out = []
    for i, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError:
                raise ResponseShapeMismatch(f"response line {i}: invalid JSON") from None
    return out


def parse_response(
    body: bytes,
    content_type: str = CSV,
    label: int | str | None = None,
    probability: int | str | None = None,
    label_headers: Sequence[str] | None = None,
) -> PredictionSet:
    """Parse one response body into a PredictionSet.

    With only a score vector and ``label_headers``, the predicted label is
    the header of the highest score; ties go to the lowest index.
    """
    if label is None and probability is None:
        raise ValueError("need a label or probability selector")
    records = _records(body, content_type)
    labels: list[Any] = []
    scores: list[list[float]] = []
    for i, rec in enumerate(records, start=1):
        if label is not None:
            labels.append(_field(rec, label, i))
        if probability is not None:
            scores.append(_as_scores(_field(rec, probability, i), i))
    score_arr = None
    if probability is not None:
        widths = {len(s) for s in scores}
        if len(widths) > 1:
            raise ResponseShapeMismatch(f"score vectors of differing lengths {sorted(widths)}")
        width = widths.pop() if widths else (len(label_headers) if label_headers else 1)
        if label_headers is not None and width != len(label_headers):
            raise ResponseShapeMismatch(f"{width} scores per row but {len(label_headers)} label headers")
        score_arr = np.array(scores, dtype=np.float64).reshape(len(scores), width)
    label_arr = None
    if label is not None:
        label_arr = make_column("label", labels, ColumnKind.CATEGORICAL).values.copy()
    elif label_headers is not None:
        label_arr = np.array([label_headers[int(j)] for j in np.argmax(score_arr, axis=1)], dtype=object)
    return PredictionSet(score_arr, label_arr)


# ---------------------------------------------------------------- binarization

@dataclass(frozen=True)
class BinaryPredictionRule:
    positive_classes: tuple | None = None
    score_threshold: float | None = None
    score_index: int | None = None

    def __post_init__(self):
        if (self.positive_classes is None) == (self.score_threshold is None):
            raise ValueError("exactly one of positive_classes / score_threshold must be set")


def binarize_predictions(p: PredictionSet, rule: BinaryPredictionRule) -> np.ndarray:
    """0/1 predictions; in threshold mode a score equal to the threshold is negative."""
    if rule.score_threshold is not None:
        if p.scores is None:
            raise IncompatibleRule("threshold rule needs scores")
        return (p.positive_scores(rule.score_index) > rule.score_threshold).astype(np.int8)
    if p.predicted_labels is None:
        raise IncompatibleRule("class-set rule needs predicted labels")
    col = make_column("pred", list(p.predicted_labels), ColumnKind.CATEGORICAL)
    return member_mask(col, rule.positive_classes).astype(np.int8)
