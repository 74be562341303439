"""Batched, retrying prediction client for remote endpoints and local models."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import requests

from ..errors import (
    ConfigError,
    EndpointUnreachable,
    NonRetriableModelError,
    PayloadTooLarge,
    ResponseShapeMismatch,
)
from ..tabular import TabularDataset, format_number
from .local import LocalModel, load_local_model
from .parsing import CSV, JSONLINES, PredictionSet, parse_response

log = logging.getLogger(__name__)

DEFAULT_MAX_PAYLOAD = 6 * 1024 * 1024
BACKOFF_BASE = 0.1
BACKOFF_CAP = 10.0
RETRIABLE_STATUS = {408, 429, 500, 502, 503, 504}


@dataclass
class PredictorConfig:
    endpoint_url: str | None = None
    local_model: str | Path | dict | LocalModel | None = None
    content_type: str = CSV
    accept_type: str | None = None
    label: int | str | None = None
    probability: int | str | None = None
    label_headers: list[str] | None = None
    max_payload_bytes: int = DEFAULT_MAX_PAYLOAD
    max_retries: int = 3
    max_concurrent_requests: int = 4
    timeout_seconds: float = 60.0

    def __post_init__(self):
        if (self.endpoint_url is None) == (self.local_model is None):
            raise ConfigError("exactly one of endpoint_url / local_model is required", "predictor")
        if self.content_type not in (CSV, JSONLINES):
            raise ConfigError(f"unsupported content type {self.content_type!r}", "predictor.content_type")
        if self.accept_type is None:
            self.accept_type = self.content_type
        if self.endpoint_url is not None and self.label is None and self.probability is None:
            if self.accept_type != CSV:
                raise ConfigError("JSONLines responses need a label or probability field", "predictor")
            # a bare score per CSV line is the common single-output case
            self.probability = 0
        if self.max_payload_bytes <= 0 or self.max_concurrent_requests <= 0 or self.max_retries < 0:
            raise ConfigError("payload size and concurrency must be positive, retries nonnegative", "predictor")


def serialize_rows(rows: np.ndarray, names: Sequence[str], content_type: str) -> list[bytes]:
    """One serialized line (newline included) per row."""
    out = []
    if content_type == CSV:
        for row in rows:
            buf = io.StringIO()
            csv.writer(buf, lineterminator="\n").writerow([_csv_cell(v) for v in row])
            out.append(buf.getvalue().encode("utf-8"))
    else:
        for row in rows:
            rec = {n: _json_cell(v) for n, v in zip(names, row)}
            out.append((json.dumps(rec, separators=(",", ":")) + "\n").encode("utf-8"))
    return out


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else format_number(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _json_cell(v):
    if isinstance(v, (float, np.floating)):
        return None if math.isnan(v) else float(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def plan_batches(lines: Sequence[bytes], max_bytes: int) -> list[tuple[int, int]]:
    """Greedy [start, end) row ranges whose joined size stays within ``max_bytes``."""
    batches = []
    start, size = 0, 0
    for i, line in enumerate(lines):
        if len(line) > max_bytes:
            raise PayloadTooLarge(f"row {i} serializes to {len(line)} bytes > max_payload_bytes={max_bytes}")
        if size + len(line) > max_bytes and i > start:
            batches.append((start, i))
            start, size = i, 0
        size += len(line)
    if start < len(lines):
        batches.append((start, len(lines)))
    return batches


class HttpTransport:
    """POSTs payloads with one ``requests.Session`` per thread."""

    def __init__(self, url: str, timeout: float = 60.0):
        self.url = url
        self.timeout = timeout
        self._local = threading.local()

    def _session(self) -> requests.Session:
        s = getattr(self._local, "session", None)
        if s is None:
            s = self._local.session = requests.Session()
        return s

    def __call__(self, body: bytes, content_type: str, accept: str) -> tuple[int, bytes]:
        r = self._session().post(
            self.url, data=body, timeout=self.timeout,
            headers={"Content-Type": content_type, "Accept": accept},
        )
        return r.status_code, r.content


@dataclass
class ClientStats:
    requests: int = 0
    retries: int = 0
    rows: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def add(self, **kw):
        with self._lock:
            for k, v in kw.items():
                setattr(self, k, getattr(self, k) + v)


class ModelClient:
    """Shared, thread-safe prediction client.

    At most ``max_concurrent_requests`` payloads are in flight at once, no
    matter how many threads call :meth:`predict`.  Responses are reassembled
    in batch order.
    """

    def __init__(
        self,
        cfg: PredictorConfig,
        transport: Callable[[bytes, str, str], tuple[int, bytes]] | None = None,
        sleep: Callable[[float], None] = time.sleep,
        backoff_base: float = BACKOFF_BASE,
        backoff_cap: float = BACKOFF_CAP,
    ):
        self.cfg = cfg
        self.sleep = sleep
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.stats = ClientStats()
        self._gate = threading.BoundedSemaphore(cfg.max_concurrent_requests)
        self._jitter = random.Random()
        self.model: LocalModel | None = None
        self.transport = None
        if cfg.local_model is not None:
            src = cfg.local_model
            self.model = src if hasattr(src, "predict_scores") else load_local_model(src)
        else:
            self.transport = transport or HttpTransport(cfg.endpoint_url, cfg.timeout_seconds)

    @property
    def expected_features(self) -> tuple[str, ...] | None:
        return getattr(self.model, "features", None)

    def predict(self, rows: np.ndarray, names: Sequence[str]) -> PredictionSet:
        n = len(rows)
        self.stats.add(rows=n)
        if self.model is not None:
            scores = self.model.predict_scores(rows)
            return PredictionSet(scores=np.asarray(scores, dtype=np.float64).reshape(-1, 1))
        lines = serialize_rows(rows, names, self.cfg.content_type)
        batches = plan_batches(lines, self.cfg.max_payload_bytes)
        if len(batches) == 1:
            parts = [self._predict_batch(lines, *batches[0])]
        else:
            with ThreadPoolExecutor(max_workers=min(len(batches), self.cfg.max_concurrent_requests)) as pool:
                parts = list(pool.map(lambda b: self._predict_batch(lines, *b), batches))
        result = PredictionSet.concat(parts)
        if result.row_count != n:
            raise ResponseShapeMismatch(f"expected {n} predictions, got {result.row_count}")
        return result

    def scores(self, rows: np.ndarray, names: Sequence[str], score_index: int | None = None) -> np.ndarray:
        return self.predict(rows, names).positive_scores(score_index)

    def _predict_batch(self, lines: Sequence[bytes], start: int, end: int) -> PredictionSet:
        body = b"".join(lines[start:end])
        payload = self._post(body)
        p = parse_response(payload, self.cfg.accept_type, self.cfg.label, self.cfg.probability, self.cfg.label_headers)
        if p.row_count != end - start:
            raise ResponseShapeMismatch(f"rows {start}..{end - 1}: sent {end - start}, received {p.row_count}")
        return p

    def backoff_delay(self, attempt: int) -> float:
        """Full-jitter exponential back-off for retry ``attempt`` (0-based)."""
        return self._jitter.uniform(0.0, min(self.backoff_cap, self.backoff_base * 2 ** attempt))

    def _post(self, body: bytes) -> bytes:
        last = "no attempt made"
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                self.stats.add(retries=1)
                self.sleep(self.backoff_delay(attempt - 1))
            try:
                with self._gate:
                    self.stats.add(requests=1)
                    status, content = self.transport(body, self.cfg.content_type, self.cfg.accept_type)
            except (requests.ConnectionError, requests.Timeout, ConnectionError, TimeoutError) as e:
                last = f"{type(e).__name__}: {e}"
                log.debug("transport failure (attempt %d): %s", attempt + 1, last)
                continue
            if 200 <= status < 300:
                return content
            if status in RETRIABLE_STATUS:
                last = f"HTTP {status}"
                log.debug("retriable status %d (attempt %d)", status, attempt + 1)
                continue
            raise NonRetriableModelError(f"model endpoint returned HTTP {status}", status)
        raise EndpointUnreachable(f"gave up after {self.cfg.max_retries + 1} attempts; last error: {last}")


def predict_batchwise(ds: TabularDataset, cfg: PredictorConfig | ModelClient, features: Sequence[str]) -> PredictionSet:
    client = cfg if isinstance(cfg, ModelClient) else ModelClient(cfg)
    return client.predict(ds.matrix(features), features)
