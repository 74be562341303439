"""Convert a fitted depth-1 gradient-boosted classifier into a stumps spec.

Works on any estimator exposing the scikit-learn attributes used below
(``estimators_``, ``learning_rate``, ``decision_function``) without importing
scikit-learn itself.
"""

from __future__ import annotations

from typing import Any, Sequence

import numpy as np


def stumps_from_boosting(model: Any, features: Sequence[str]) -> dict[str, Any]:
    """Stumps spec (logistic link) reproducing ``model.predict_proba(X)[:, 1]``."""
    lr = float(model.learning_rate)
    stumps = []
    constant = 0.0
    for est in np.asarray(model.estimators_)[:, 0]:
        t = est.tree_
        if t.children_left[0] == -1:
            constant += lr * float(t.value[0].ravel()[0])
            continue
        if t.max_depth > 1:
            raise ValueError("only depth-1 trees can be exported as stumps")
        left, right = t.children_left[0], t.children_right[0]
        stumps.append({
            "feature": int(t.feature[0]),
            "threshold": float(t.threshold[0]),
            "left": lr * float(t.value[left].ravel()[0]),
            "right": lr * float(t.value[right].ravel()[0]),
        })
    # the prior log-odds: whatever the trees do not explain at one probe row
    probe = np.zeros((1, len(features)))
    tree_sum = sum(s["left"] if probe[0, s["feature"]] <= s["threshold"] else s["right"] for s in stumps)
    bias = float(np.ravel(model.decision_function(probe))[0]) - tree_sum
    return {"type": "stumps", "bias": bias, "link": "logistic", "stumps": stumps, "features": list(features)}
