"""Report files: canonical ``analysis.json``, local SHAP CSV and a static HTML page."""

from __future__ import annotations

import html
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from .bias import DESCRIPTIONS
from .explain import AttributionResult

SIG_DIGITS = 12


def round_float(x: float) -> float:
    r = float(f"{x:.{SIG_DIGITS}g}")
    return 0.0 if r == 0 else r  # folds -0.0


def canonicalize(obj: Any) -> Any:
    """JSON-ready copy with floats rounded to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): canonicalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonicalize(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return round_float(x)
    if isinstance(obj, np.ndarray):
        return canonicalize(obj.tolist())
    return obj


def canonical_json(obj: Any) -> bytes:
    return (json.dumps(canonicalize(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def atomic_write(path: str | Path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def local_csv(res: AttributionResult) -> bytes:
    lines = [",".join(_csv_name(n) for n in res.feature_names)]
    for row in res.local:
        lines.append(",".join(repr(round_float(float(v))) for v in row))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _csv_name(name: str) -> str:
    if any(c in name for c in ',"\n'):
        return '"' + name.replace('"', '""') + '"'
    return name


# ---------------------------------------------------------------- HTML

_CSS = """
body{font-family:system-ui,sans-serif;margin:2em;max-width:60em;color:#222}
table{border-collapse:collapse;margin:1em 0}
th,td{border:1px solid #ccc;padding:.3em .7em;text-align:left}
th{background:#f3f3f3}
td.num{text-align:right;font-variant-numeric:tabular-nums}
abbr{text-decoration:underline dotted;cursor:help}
.undef{color:#a33}
.warn{background:#fff6e0;border-left:4px solid #e0a000;padding:.4em .8em;margin:.3em 0}
"""


def format_value(entry: dict[str, Any]) -> tuple[str, str]:
    """(display text, css class) for a metric entry."""
    v = entry["value"]
    if v == "undefined":
        reason = entry["flags"][0] if entry.get("flags") else "zero denominator"
        return f"undefined ({reason})", "undef"
    if isinstance(v, str):
        return v, "undef"
    return f"{v:.4f}", "num"


def _metric_table(section: dict[str, Any]) -> str:
    out = []
    for facet in section["facets"]:
        f = facet["facet"]
        out.append(f"<h3>Facet {html.escape(str(f['name_or_index']))} "
                   f"(group d: {html.escape(json.dumps(f['value_or_threshold']))})</h3>")
        out.append("<table><tr><th>Metric</th><th>Value</th><th>Flags</th></tr>")
        for name, entry in facet["metrics"].items():
            text, cls = format_value(entry)
            tip = html.escape(DESCRIPTIONS.get(name, name), quote=True)
            # an undefined value already shows its reason
            rest = entry.get("flags", [])[1:] if entry["value"] == "undefined" else entry.get("flags", [])
            flags = html.escape("; ".join(rest))
            out.append(f'<tr><td><abbr title="{tip}">{html.escape(name)}</abbr></td>'
                       f'<td class="{cls}">{html.escape(text)}</td><td>{flags}</td></tr>')
        out.append("</table>")
    return "\n".join(out)


def bar_chart_svg(items: list[tuple[str, float]], width: int = 640, bar: int = 18, label_w: int = 200) -> str:
    """Horizontal bar chart as inline SVG."""
    if not items:
        return ""
    top = max(v for _, v in items) or 1.0
    h = bar * len(items) + 10
    span = width - label_w - 70
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{h}" role="img" '
             f'aria-label="global feature importance">']
    for i, (name, v) in enumerate(items):
        y = 5 + i * bar
        w = max(0.0, v / top * span)
        parts.append(f'<text x="{label_w - 6}" y="{y + bar * 0.7:.1f}" text-anchor="end" font-size="12">'
                     f'{html.escape(name)}</text>')
        parts.append(f'<rect x="{label_w}" y="{y + 2}" width="{w:.2f}" height="{bar - 4}" fill="#4a7bb7">'
                     f'<title>{html.escape(name)}: {v:.6g}</title></rect>')
        parts.append(f'<text x="{label_w + w + 4:.2f}" y="{y + bar * 0.7:.1f}" font-size="11">{v:.4g}</text>')
    parts.append("</svg>")
    return "".join(parts)


def render_html(report: dict[str, Any], title: str = "Analysis Report", max_bars: int = 30) -> str:
    job = report.get("job", {})
    body = [f"<h1>{html.escape(title)}</h1>",
            f"<p>{job.get('row_count', '?')} rows; config {job.get('config_digest', '')[:12]}, "
            f"dataset {job.get('dataset_digest', '')[:12]}</p>"]
    if report.get("warnings"):
        body.append("<h2>Warnings</h2>")
        for w in report["warnings"]:
            body.append(f'<div class="warn"><b>{html.escape(w["step"])}</b> [{html.escape(w["code"])}]: '
                        f'{html.escape(w["message"])}</div>')
    if "pre_training_bias" in report:
        body.append("<h2>Pre-training bias</h2>")
        body.append(_metric_table(report["pre_training_bias"]))
    if "post_training_bias" in report:
        body.append("<h2>Post-training bias</h2>")
        body.append(f"<p>Prediction rule: {html.escape(json.dumps(report['post_training_bias']['prediction_rule']))}</p>")
        body.append(_metric_table(report["post_training_bias"]))
    if "explanations" in report:
        e = report["explanations"]
        body.append("<h2>Feature importance</h2>")
        body.append(f"<p>Aggregation {html.escape(e['agg_method'])}, mode {html.escape(e['mode'])}, "
                    f"base value {e['base_value']:.6g}. Local values: "
                    f"<code>{html.escape(e['local_file'])}</code></p>")
        body.append(bar_chart_svg([(n, float(v)) for n, v in e["ranking"][:max_bars]]))
    return ("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
            f"<title>{html.escape(title)}</title><style>{_CSS}</style></head><body>\n"
            + "\n".join(body) + "\n</body></html>\n")


def emit_reports(report: dict[str, Any], out_dir: str | Path, attributions: AttributionResult | None = None,
                 title: str = "Analysis Report", run_log: dict[str, Any] | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    data = canonical_json(report)
    atomic_write(out / "analysis.json", data)
    written.append(out / "analysis.json")
    if attributions is not None and "explanations" in report:
        atomic_write(out / "explanations_shap" / "out.csv", local_csv(attributions))
        written.append(out / "explanations_shap" / "out.csv")
    atomic_write(out / "report.html", render_html(json.loads(data), title).encode("utf-8"))
    written.append(out / "report.html")
    if run_log is not None:
        atomic_write(out / "run_log.json", canonical_json(run_log))
        written.append(out / "run_log.json")
    return written
