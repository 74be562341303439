"""Worker scaling against an HTTP endpoint, plus bias metrics on a larger oversample.

    python3 demos/scaling_demo.py [rows]

Attribution time is dominated by model calls.  A local ``ModelServer``
sleeps 30 ms per request to stand in for network latency, so extra workers
overlap the waits even on a single CPU.  Reports stay byte-identical.
"""

import sys

from fairlens.bench import ModelServer, bench_config, bundled_model_spec, german_fixture, scaling_run, timings_csv
from fairlens.bias import POST_TRAINING_METRICS
from fairlens.config import parse_config
from fairlens.datasets import FACET, LABEL

LATENCY = 0.03


def main(rows: int = 60):
    # ## Attributions through a slow endpoint
    data = german_fixture(rows, seed=0)
    with ModelServer(bundled_model_spec(), latency=LATENCY) as srv:
        cfg = bench_config("shap", {"endpoint_url": srv.url, "max_concurrent_requests": 4}, num_samples=130)
        records, digests = scaling_run(data, cfg, [1, 2, 4])
        print(f"{srv.requests} requests served, at most {srv.max_in_flight} in flight")
    print(timings_csv(records).decode(), end="")
    base = next(r.wall_seconds for r in records if r.workers == 1)
    for r in records:
        print(f"  workers={r.workers}: speedup x{base / r.wall_seconds:.2f}")
    print("reports identical across worker counts:", len(set(digests.values())) == 1)

    # ## Bias metrics on 100k rows
    # Pre-training metrics are counting passes; post-training ones need a
    # prediction per row from the local model.  The flip test compares every
    # group-d row with every group-a row, so it is left out at this size.
    big = german_fixture(100_000, seed=0)
    cfg = parse_config({
        "dataset_type": "text/csv", "label": LABEL, "label_values_or_threshold": [1],
        "facet": [{"name_or_index": FACET, "value_or_threshold": [1]}], "group_variable": "A151",
        "methods": {"pre_training_bias": {"methods": "all"},
                    "post_training_bias": {"methods": [m for m in POST_TRAINING_METRICS if m != "FT"]}},
        "predictor": {"local_model": bundled_model_spec()},
    })
    records, _ = scaling_run(big, cfg, [1])
    print()
    print(timings_csv(records).decode(), end="")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 60)
