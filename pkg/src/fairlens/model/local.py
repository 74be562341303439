"""Bundled in-process predictors that stand in for a hosted model endpoint.

A local model spec is a JSON document with a ``type`` key:

* ``{"type": "linear", "weights": [..], "bias": 0.0, "link": "identity" | "logistic"}``
* ``{"type": "constant", "value": 0.25}``
* ``{"type": "stumps", "bias": 0.0, "link": "logistic",
  "stumps": [{"feature": 0, "threshold": 1.5, "left": -0.2, "right": 0.3}, ...]}``
  where a row adds ``left`` when ``x[feature] <= threshold`` and ``right`` otherwise.

Every spec may carry ``"features": [names]``, the dataset columns the model
expects, in order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import ArityMismatch, ConfigError


def _link(z: np.ndarray, link: str) -> np.ndarray:
    if link == "logistic":
        return 1.0 / (1.0 + np.exp(-z))
    return z


@dataclass(frozen=True)
class LinearModel:
    weights: tuple[float, ...]
    bias: float = 0.0
    link: str = "identity"
    features: tuple[str, ...] | None = None

    @property
    def arity(self) -> int:
        return len(self.weights)

    def predict_scores(self, rows: np.ndarray) -> np.ndarray:
        rows = _as_matrix(rows, self.arity)
        return _link(rows @ np.asarray(self.weights, dtype=np.float64) + self.bias, self.link)


@dataclass(frozen=True)
class ConstantModel:
    value: float
    arity: int | None = None
    features: tuple[str, ...] | None = None

    def predict_scores(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows)
        if self.arity is not None:
            rows = _as_matrix(rows, self.arity)
        return np.full(len(rows), float(self.value))


@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float
    left: float
    right: float


@dataclass(frozen=True)
class StumpEnsemble:
    stumps: tuple[Stump, ...]
    bias: float = 0.0
    link: str = "identity"
    arity: int | None = None
    features: tuple[str, ...] | None = None

    def predict_scores(self, rows: np.ndarray) -> np.ndarray:
        need = self.arity or (max((s.feature for s in self.stumps), default=-1) + 1)
        rows = _as_matrix(rows, need if self.arity else None, at_least=need)
        z = np.full(len(rows), float(self.bias))
        for s in self.stumps:
            z += np.where(rows[:, s.feature] <= s.threshold, s.left, s.right)
        return _link(z, self.link)


LocalModel = LinearModel | ConstantModel | StumpEnsemble


def _as_matrix(rows, arity: int | None, at_least: int = 0) -> np.ndarray:
    try:
        rows = np.asarray(rows, dtype=np.float64)
    except (TypeError, ValueError):
        raise ArityMismatch("local models need numeric features") from None
    if rows.ndim == 1:
        rows = rows[None, :]
    if arity is not None and rows.shape[1] != arity:
        raise ArityMismatch(f"model expects {arity} features, got {rows.shape[1]}")
    if rows.shape[1] < at_least:
        raise ArityMismatch(f"model reads feature {at_least - 1}, rows have {rows.shape[1]}")
    return rows


def model_from_spec(spec: dict[str, Any]) -> LocalModel:
    kind = spec.get("type")
    features = tuple(spec["features"]) if spec.get("features") is not None else None
    try:
        if kind == "linear":
            link = spec.get("link", "identity")
            if link not in ("identity", "logistic"):
                raise ConfigError(f"unknown link {link!r}", "link")
            return LinearModel(tuple(float(w) for w in spec["weights"]), float(spec.get("bias", 0.0)), link, features)
        if kind == "constant":
            arity = len(features) if features else spec.get("arity")
            return ConstantModel(float(spec["value"]), arity, features)
        if kind == "stumps":
            stumps = tuple(
                Stump(int(s["feature"]), float(s["threshold"]), float(s["left"]), float(s["right"]))
                for s in spec["stumps"]
            )
            arity = len(features) if features else spec.get("arity")
            return StumpEnsemble(stumps, float(spec.get("bias", 0.0)), spec.get("link", "identity"), arity, features)
    except KeyError as e:
        raise ConfigError(f"local model spec is missing {e.args[0]!r}") from None
    raise ConfigError(f"unknown local model type {kind!r}", "type")


def model_to_spec(model: LocalModel) -> dict[str, Any]:
    if isinstance(model, LinearModel):
        spec = {"type": "linear", "weights": list(model.weights), "bias": model.bias, "link": model.link}
    elif isinstance(model, ConstantModel):
        spec = {"type": "constant", "value": model.value}
        if model.arity is not None:
            spec["arity"] = model.arity
    else:
        spec = {
            "type": "stumps", "bias": model.bias, "link": model.link,
            "stumps": [vars(s).copy() for s in model.stumps],
        }
        if model.arity is not None:
            spec["arity"] = model.arity
    if model.features is not None:
        spec["features"] = list(model.features)
    return spec


def load_local_model(source: str | Path | dict) -> LocalModel:
    if isinstance(source, dict):
        return model_from_spec(source)
    with open(source, "r", encoding="utf-8") as fh:
        return model_from_spec(json.load(fh))


def local_predict(model: LocalModel, rows: np.ndarray):
    from .parsing import PredictionSet

    scores = model.predict_scores(rows)
    return PredictionSet(scores=scores.reshape(-1, 1), predicted_labels=None)
