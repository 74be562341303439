import json
from pathlib import Path

import numpy as np
import pytest

from fairlens.datasets import german_credit_csv, bundled_german_raw, load_german_credit

# Ten-row running example: group a is the first six rows, group d the last four.
# a: TP=3 FP=1 TN=1 FN=1   d: TP=1 FP=1 TN=2 FN=0
RUN_LABELS = np.array([1, 1, 1, 0, 0, 1, 1, 0, 0, 0], dtype=np.int8)
RUN_PREDS = np.array([1, 1, 1, 1, 0, 0, 1, 1, 0, 0], dtype=np.int8)
RUN_IS_D = np.array([False] * 6 + [True] * 4)


@pytest.fixture
def running_example():
    return RUN_LABELS.copy(), RUN_PREDS.copy(), RUN_IS_D.copy()


def running_example_csv() -> bytes:
    """The running example as a dataset whose local model reproduces RUN_PREDS.

    Feature ``x`` equals the prediction, so a linear model with weight 1 and
    threshold 0.5 predicts exactly RUN_PREDS.
    """
    lines = ["x,z,group,y"]
    for i in range(10):
        lines.append(f"{int(RUN_PREDS[i])},{i % 3},{int(RUN_IS_D[i])},{int(RUN_LABELS[i])}")
    return ("\n".join(lines) + "\n").encode()


def running_example_config(**overrides) -> dict:
    cfg = {
        "dataset_type": "text/csv",
        "label": "y",
        "label_values_or_threshold": [1],
        "facet": [{"name_or_index": "group", "value_or_threshold": [1]}],
        "methods": {
            "pre_training_bias": {"methods": "all"},
            "post_training_bias": {"methods": "all", "flip_test_k": 1},
            "shap": {"num_samples": 100, "agg_method": "mean_abs"},
        },
        "predictor": {"local_model": {"type": "linear", "weights": [1.0, 0.0], "bias": 0.0,
                                      "features": ["x", "z"]}},
    }
    cfg.update(overrides)
    return cfg


@pytest.fixture(scope="session")
def german():
    return load_german_credit()


@pytest.fixture(scope="session")
def german_csv_bytes():
    return german_credit_csv(bundled_german_raw())


@pytest.fixture(scope="session")
def german_csv_path(tmp_path_factory, german_csv_bytes):
    p = tmp_path_factory.mktemp("german") / "german.csv"
    p.write_bytes(german_csv_bytes)
    return p


@pytest.fixture(scope="session")
def german_model_spec():
    root = Path(__file__).resolve().parents[1]
    return json.loads((root / "src" / "fairlens" / "data" / "german_gbm.json").read_text())
