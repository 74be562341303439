"""Command line: ``run``, ``baseline``, ``monitor`` and ``bench``.

Exit codes: 0 success, 1 error, 2 drift alert (``monitor`` only).
A ``run`` whose endpoint is unreachable still exits 0 when pre-training
results were produced; the report lists the omitted steps as warnings.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .bench import ModelServer, bench_config, bundled_model_spec, german_fixture, scaling_run, timings_csv
from .config import AnalysisConfig, load_config
from .engine import dataset_digest, run_job, run_monitor
from .errors import ConfigError, FairlensError, MalformedRow
from .monitor import MonitorBaseline, baseline_from_report
from .report import atomic_write, canonical_json, emit_reports
from .tabular import TabularDataset, parse_dataset

log = logging.getLogger("fairlens")

EXIT_OK, EXIT_ERROR, EXIT_ALERT = 0, 1, 2


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def configure_logging() -> None:
    level = os.environ.get("FAIRLENS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def read_dataset(cfg: AnalysisConfig, path: str | Path, fmt: str | None = None) -> tuple[TabularDataset, bytes]:
    data = Path(path).read_bytes()
    fmt = fmt or cfg.dataset_type
    try:
        ds = parse_dataset(data, fmt, headers=cfg.headers)
    except MalformedRow as e:
        if cfg.headers is not None and "headers supplied" in str(e):
            raise ConfigError(str(e), "headers") from None
        raise
    return ds, data


def _workers(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("--workers must be >= 1")
    return n


def _worker_list(value: str) -> list[int]:
    try:
        out = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("--workers takes a comma-separated list of integers") from None
    if not out or any(w < 1 for w in out):
        raise argparse.ArgumentTypeError("worker counts must be >= 1")
    return out


def cmd_run(args) -> int:
    cfg = load_config(Path(args.config))
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    ds, data = read_dataset(cfg, args.dataset, args.dataset_format)
    started = _now()
    t0 = time.perf_counter()
    res = run_job(cfg, ds, workers=args.workers, model_dir=args.model_dir,
                  config_dir=Path(args.config).resolve().parent, data_digest=dataset_digest(data))
    run_log = {"started_at": started, "finished_at": _now(), "wall_seconds": time.perf_counter() - t0,
               "workers": args.workers, "step_seconds": res.timings, "client": res.stats, "version": __version__}
    emit_reports(res.report, args.output, res.attributions, cfg.report_title, run_log)
    print(Path(args.output) / "analysis.json")
    return EXIT_OK


def cmd_baseline(args) -> int:
    report = json.loads(Path(args.from_report).read_text(encoding="utf-8"))
    base = baseline_from_report(report, args.bias_margin)
    atomic_write(args.output, (json.dumps(base.to_json(), indent=2, sort_keys=True) + "\n").encode("utf-8"))
    print(args.output)
    return EXIT_OK


def cmd_monitor(args) -> int:
    base = MonitorBaseline.load(args.baseline)
    cfg = load_config(Path(args.config))
    ds, _ = read_dataset(cfg, args.dataset, args.dataset_format)
    result = run_monitor(cfg, base, ds, workers=args.workers, seed=args.seed or 0, model_dir=args.model_dir,
                         config_dir=Path(args.config).resolve().parent)
    out = Path(args.output)
    atomic_write(out / "monitor.json", canonical_json(result))
    for a in result["alerts"]:
        if a["fired"]:
            print(f"ALERT {a['kind']}: {a['detail']} observed {a['observed']} vs {a['reference']}")
    return EXIT_ALERT if result["any_fired"] else EXIT_OK


def cmd_bench(args) -> int:
    ds = german_fixture(args.rows, args.seed)
    spec = bundled_model_spec()
    records = []
    if args.endpoint_latency_ms is not None:
        with ModelServer(spec, latency=args.endpoint_latency_ms / 1000.0) as srv:
            predictor = {"endpoint_url": srv.url, "content_type": "text/csv",
                         "max_concurrent_requests": max(args.workers)}
            cfg = bench_config(args.phase, predictor, args.num_samples, args.seed)
            records, digests = scaling_run(ds, cfg, args.workers)
    else:
        cfg = bench_config(args.phase, {"local_model": spec}, args.num_samples, args.seed)
        records, digests = scaling_run(ds, cfg, args.workers)
    atomic_write(args.output, timings_csv(records))
    if len(set(digests.values())) != 1:
        print("error: analysis digests differ across worker counts", file=sys.stderr)
        return EXIT_ERROR
    print(args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fairlens", description="Bias metrics, Shapley attributions and drift checks.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an analysis job")
    r.add_argument("--config", required=True)
    r.add_argument("--dataset", required=True)
    r.add_argument("--dataset-format", choices=["csv", "jsonlines"])
    r.add_argument("--output", required=True)
    r.add_argument("--workers", type=_workers, default=1)
    r.add_argument("--seed", type=int)
    r.add_argument("--model-dir", help="directory holding <model_name>.json local model specs")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("baseline", help="derive a monitoring baseline from a report")
    b.add_argument("--from-report", required=True)
    b.add_argument("--bias-margin", type=float, default=0.1)
    b.add_argument("--output", required=True)
    b.set_defaults(func=cmd_baseline)

    m = sub.add_parser("monitor", help="check a live batch against a baseline")
    m.add_argument("--baseline", required=True)
    m.add_argument("--config", required=True)
    m.add_argument("--dataset", required=True)
    m.add_argument("--dataset-format", choices=["csv", "jsonlines"])
    m.add_argument("--output", required=True)
    m.add_argument("--workers", type=_workers, default=1)
    m.add_argument("--seed", type=int)
    m.add_argument("--model-dir")
    m.set_defaults(func=cmd_monitor)

    h = sub.add_parser("bench", help="time jobs across worker counts")
    h.add_argument("--rows", type=int, required=True)
    h.add_argument("--workers", type=_worker_list, required=True)
    h.add_argument("--phase", choices=["shap", "bias"], required=True)
    h.add_argument("--output", required=True)
    h.add_argument("--num-samples", type=int, default=200)
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--endpoint-latency-ms", type=float,
                   help="serve the model over local HTTP with this per-request latency")
    h.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors; 2 is reserved for drift alerts
        return EXIT_OK if e.code in (0, None) else EXIT_ERROR
    try:
        return args.func(args)
    except FairlensError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
