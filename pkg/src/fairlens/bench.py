"""Desk-scale timing harness: oversampled fixtures and runs across worker counts."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from typing import Any, Sequence

import numpy as np

from .config import AnalysisConfig, parse_config
from .datasets import FACET, LABEL, load_german_credit
from .engine import run_job
from .model.local import LocalModel, load_local_model
from .report import canonical_json
from .tabular import TabularDataset, parse_dataset

PHASES = ("pre_bias", "post_bias", "shap")


@dataclass(frozen=True)
class OversampleSpec:
    source: TabularDataset
    target_rows: int
    seed: int = 0


def oversample(spec: OversampleSpec) -> TabularDataset:
    """Rows drawn uniformly with replacement, deterministic for a seed."""
    if spec.target_rows <= 0:
        raise ValueError("target_rows must be positive")
    if spec.source.row_count == 0:
        raise ValueError("source dataset is empty")
    rng = np.random.default_rng(spec.seed)
    return spec.source.take(rng.integers(0, spec.source.row_count, size=spec.target_rows))


@dataclass(frozen=True)
class TimingRecord:
    phase: str
    rows: int
    workers: int
    wall_seconds: float

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")
        if not self.wall_seconds > 0:
            raise ValueError("wall_seconds must be positive")


def bundled_model_spec() -> dict[str, Any]:
    return json.loads(resources.files("fairlens").joinpath("data/german_gbm.json").read_text(encoding="utf-8"))


def bench_config(phase: str, predictor: dict[str, Any], num_samples: int = 200, seed: int = 0) -> AnalysisConfig:
    """German credit job config for one harness phase (``bias`` or ``shap``)."""
    doc: dict[str, Any] = {
        "dataset_type": "text/csv",
        "label": LABEL,
        "label_values_or_threshold": [1],
        "facet": [{"name_or_index": FACET, "value_or_threshold": [1]}],
        "group_variable": "A151",
        "methods": {},
        "predictor": predictor,
    }
    if phase == "bias":
        doc["methods"]["pre_training_bias"] = {"methods": "all"}
        doc["methods"]["post_training_bias"] = {"methods": "all"}
    elif phase == "shap":
        doc["methods"]["shap"] = {"num_samples": num_samples, "agg_method": "mean_abs", "seed": seed}
    else:
        raise ValueError(f"unknown phase {phase!r}; use bias or shap")
    return parse_config(doc)


def report_digest(report: dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(report)).hexdigest()


def scaling_run(ds: TabularDataset, cfg: AnalysisConfig, workers: Sequence[int],
                transport=None) -> tuple[list[TimingRecord], dict[int, str]]:
    """One job per worker count; returns per-phase timings and report digests."""
    if not workers or any(w < 1 for w in workers):
        raise ValueError("worker counts must be >= 1")
    records, digests = [], {}
    for w in workers:
        res = run_job(cfg, ds, workers=w, transport=transport)
        digests[w] = report_digest(res.report)
        for phase in PHASES:
            if phase in res.timings:
                records.append(TimingRecord(phase, ds.row_count, w, max(res.timings[phase], 1e-9)))
    return records, digests


def timings_csv(records: Sequence[TimingRecord]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["phase", "rows", "workers", "wall_seconds"])
    for r in records:
        w.writerow([r.phase, r.rows, r.workers, f"{r.wall_seconds:.6f}"])
    return buf.getvalue().encode("utf-8")


def german_fixture(rows: int, seed: int = 0) -> TabularDataset:
    src = load_german_credit()
    return src if rows == src.row_count else oversample(OversampleSpec(src, rows, seed))


# ---------------------------------------------------------------- local endpoint

class ModelServer:
    """Serve a local model over HTTP (CSV in, one score per line out).

    ``latency`` seconds are slept per request to mimic a remote endpoint.
    ``fail_first`` makes each distinct payload fail that many times with 503.
    """

    def __init__(self, model: LocalModel | dict | str, latency: float = 0.0, fail_first: int = 0):
        self.model = model if hasattr(model, "predict_scores") else load_local_model(model)
        self.latency = latency
        self.fail_first = fail_first
        self.failures: dict[bytes, int] = {}
        self.in_flight = 0
        self.max_in_flight = 0
        self.requests = 0
        self._lock = threading.Lock()
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/invocations"

    def _handle(self, body: bytes) -> tuple[int, bytes]:
        with self._lock:
            self.requests += 1
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
            key = hashlib.sha256(body).digest()
            seen = self.failures.get(key, 0)
            if seen < self.fail_first:
                self.failures[key] = seen + 1
        try:
            if self.latency:
                time.sleep(self.latency)
            if seen < self.fail_first:
                return 503, b"busy"
            ds = parse_dataset(body, "csv", header_hint=False)
            scores = self.model.predict_scores(ds.matrix(ds.names))
            return 200, "".join(f"{repr(float(s))}\n" for s in scores).encode()
        finally:
            with self._lock:
                self.in_flight -= 1

    def __enter__(self) -> "ModelServer":
        outer = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"
            # headers and body go out as separate writes; without this each
            # keep-alive response waits on the peer's delayed ACK
            disable_nagle_algorithm = True

            def do_POST(self):
                body = self.rfile.read(int(self.headers.get("Content-Length", 0)))
                status, payload = outer._handle(body)
                self.send_response(status)
                self.send_header("Content-Type", "text/csv")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join()
