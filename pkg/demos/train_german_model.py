"""Fit a boosted-stumps credit model and save it as a local model spec.

The saved spec is what the bundled benchmarks and the demo config use as
their "deployed" model.  Needs scikit-learn (the ``test`` extra).

    python3 demos/train_german_model.py [output.json]
"""

import json
import sys
from pathlib import Path

import numpy as np
from sklearn.ensemble import GradientBoostingClassifier
from sklearn.model_selection import train_test_split

from fairlens.datasets import FACET, LABEL, load_german_credit
from fairlens.model import stumps_from_boosting


def fit(seed: int = 0):
    ds = load_german_credit()
    features = [n for n in ds.names if n not in (LABEL, FACET)]
    X = ds.matrix(features)
    y = (ds.column(LABEL).values == 1).astype(int)  # 1 = good credit
    idx = np.arange(ds.row_count)
    train, test = train_test_split(idx, test_size=0.3, stratify=y, random_state=seed)
    gbm = GradientBoostingClassifier(max_depth=1, n_estimators=100, learning_rate=0.1, random_state=seed)
    gbm.fit(X[train], y[train])
    return gbm, features, ds, train, test


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "src/fairlens/data/german_gbm.json"
    gbm, features, ds, train, test = fit()
    spec = stumps_from_boosting(gbm, features)
    X = ds.matrix(features)
    print(f"held-out accuracy {gbm.score(X[test], (ds.column(LABEL).values[test] == 1).astype(int)):.3f}")
    out.write_text(json.dumps(spec, indent=1) + "\n")
    print(f"wrote {out} ({len(spec['stumps'])} stumps over {len(features)} features)")


if __name__ == "__main__":
    main()
