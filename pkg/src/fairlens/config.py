"""Analysis configuration: schema validation, defaults and cross-field rules.

Unknown keys are errors.  Every error names the offending JSON path, e.g.
``facet[0].name_or_index``.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema

from .bias import PRE_TRAINING_METRICS, POST_TRAINING_METRICS
from .errors import ColumnNotFound, ConfigError, CrossFieldError, MissingColumn, SchemaError
from .explain import AGG_METHODS
from .model.client import DEFAULT_MAX_PAYLOAD
from .tabular import ColumnKind, TabularDataset

_REF = {"oneOf": [{"type": "string", "minLength": 1}, {"type": "integer", "minimum": 0}]}
_SELECTOR = {"oneOf": [{"type": "string", "minLength": 1}, {"type": "integer", "minimum": 0}]}
_SCALAR = {"type": ["string", "number", "integer", "boolean"]}
_VALUES_OR_THRESHOLD = {"oneOf": [{"type": "array", "minItems": 1, "items": _SCALAR}, {"type": "number"}]}


def _methods_list(catalog):
    return {"oneOf": [
        {"const": "all"},
        {"type": "array", "minItems": 1, "uniqueItems": True, "items": {"enum": list(catalog)}},
    ]}


SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["methods"],
    "properties": {
        "dataset_type": {"enum": ["text/csv", "application/jsonlines"]},
        "label": _REF,
        "label_values_or_threshold": _VALUES_OR_THRESHOLD,
        "facet": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name_or_index", "value_or_threshold"],
                "properties": {
                    "name_or_index": _REF,
                    "value_or_threshold": _VALUES_OR_THRESHOLD,
                    "threshold_direction": {"enum": ["at_or_below", "above"]},
                },
            },
        },
        "group_variable": _REF,
        "headers": {"type": "array", "minItems": 1, "uniqueItems": True, "items": {"type": "string", "minLength": 1}},
        "column_kinds": {"type": "object", "additionalProperties": {"enum": ["numeric", "categorical"]}},
        "excluded_columns": {"type": "array", "items": _REF},
        "facet_is_feature": {"type": "boolean"},
        "probability_threshold": {"type": "number"},
        "monitor": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "resamples": {"type": "integer", "minimum": 1},
                "ndcg_threshold": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "methods": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "shap": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "baseline": {"oneOf": [
                            {"type": "string", "minLength": 1},
                            {"type": "array", "minItems": 1, "items": {"type": "array"}},
                        ]},
                        "num_samples": {"type": "integer", "minimum": 1},
                        "agg_method": {"enum": list(AGG_METHODS)},
                        "mode": {"enum": ["auto", "exact", "sampled"]},
                        "seed": {"type": "integer"},
                    },
                },
                "pre_training_bias": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["methods"],
                    "properties": {
                        "methods": _methods_list(PRE_TRAINING_METRICS),
                        "p": {"type": "number", "minimum": 1},
                    },
                },
                "post_training_bias": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["methods"],
                    "properties": {
                        "methods": _methods_list(POST_TRAINING_METRICS),
                        "flip_test_k": {"type": "integer", "minimum": 1},
                    },
                },
                "report": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"name": {"type": "string", "minLength": 1}, "title": {"type": "string"}},
                },
            },
        },
        "predictor": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "endpoint_url": {"type": "string", "pattern": "^https?://"},
                "local_model": {"oneOf": [{"type": "string", "minLength": 1}, {"type": "object"}]},
                "model_name": {"type": "string", "minLength": 1},
                # accepted for compatibility with hosted-endpoint configs; unused locally
                "instance_type": {"type": "string"},
                "initial_instance_count": {"type": "integer", "minimum": 1},
                "content_type": {"enum": ["text/csv", "application/jsonlines"]},
                "accept_type": {"enum": ["text/csv", "application/jsonlines"]},
                "label": _SELECTOR,
                "probability": _SELECTOR,
                "label_headers": {"type": "array", "minItems": 1, "items": {"type": "string"}},
                "max_payload_bytes": {"type": "integer", "minimum": 1},
                "max_retries": {"type": "integer", "minimum": 0},
                "max_concurrent_requests": {"type": "integer", "minimum": 1},
                "timeout_seconds": {"type": "number", "exclusiveMinimum": 0},
                "score_index": {"type": "integer", "minimum": 0},
            },
        },
    },
}


def json_path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


@dataclass(frozen=True)
class FacetConfig:
    name_or_index: str | int
    value_or_threshold: Any
    at_or_below: bool = True

    def to_json(self) -> dict[str, Any]:
        return {"name_or_index": self.name_or_index, "value_or_threshold": self.value_or_threshold}

    @property
    def key(self) -> str:
        return str(self.name_or_index)


@dataclass
class ShapSettings:
    baseline: str | list | None = None
    num_samples: int = 3000
    agg_method: str = "mean_abs"
    mode: str = "auto"
    seed: int = 0


@dataclass
class AnalysisConfig:
    raw: dict[str, Any]
    dataset_type: str = "text/csv"
    label: str | int | None = None
    label_values_or_threshold: Any = None
    facets: list[FacetConfig] = field(default_factory=list)
    group_variable: str | int | None = None
    pre_methods: list[str] | None = None
    post_methods: list[str] | None = None
    shap: ShapSettings | None = None
    report_name: str = "report"
    report_title: str = "Analysis Report"
    predictor: dict[str, Any] | None = None
    p: float = 2.0
    flip_k: int = 5
    headers: list[str] | None = None
    column_kinds: dict[str, str] = field(default_factory=dict)
    excluded_columns: list[str | int] = field(default_factory=list)
    facet_is_feature: bool = False
    probability_threshold: float | None = None
    resamples: int = 1000
    ndcg_threshold: float = 0.90
    warnings: list[str] = field(default_factory=list)

    @property
    def digest(self) -> str:
        return hashlib.sha256(canonical_bytes(self.raw)).hexdigest()

    def with_seed(self, seed: int) -> "AnalysisConfig":
        """Copy with the SHAP seed overridden (bound into the config digest)."""
        raw = copy.deepcopy(self.raw)
        if self.shap is None:
            return self
        raw["methods"].setdefault("shap", {})["seed"] = seed
        return parse_config(raw)


def canonical_bytes(doc: Any) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _expand(methods, catalog) -> list[str]:
    return list(catalog) if methods == "all" else list(methods)


def parse_config(doc: Any) -> AnalysisConfig:
    """Schema-check a decoded config and apply defaults and cross-field rules."""
    validator = jsonschema.Draft7Validator(SCHEMA)
    problems = sorted(
        ((json_path(e.absolute_path) or "<root>", _describe(e)) for e in validator.iter_errors(doc)),
        key=lambda t: t)
    if problems:
        raise SchemaError(problems)
    m = doc["methods"]
    cfg = AnalysisConfig(raw=copy.deepcopy(doc))
    cfg.dataset_type = doc.get("dataset_type", "text/csv")
    cfg.label = doc.get("label")
    cfg.label_values_or_threshold = doc.get("label_values_or_threshold")
    cfg.facets = [
        FacetConfig(f["name_or_index"], f["value_or_threshold"], f.get("threshold_direction", "at_or_below") == "at_or_below")
        for f in doc.get("facet", [])
    ]
    cfg.group_variable = doc.get("group_variable")
    cfg.headers = doc.get("headers")
    cfg.column_kinds = dict(doc.get("column_kinds", {}))
    cfg.excluded_columns = list(doc.get("excluded_columns", []))
    cfg.facet_is_feature = bool(doc.get("facet_is_feature", False))
    cfg.probability_threshold = doc.get("probability_threshold")
    cfg.resamples = doc.get("monitor", {}).get("resamples", 1000)
    cfg.ndcg_threshold = doc.get("monitor", {}).get("ndcg_threshold", 0.90)
    if "pre_training_bias" in m:
        cfg.pre_methods = _expand(m["pre_training_bias"]["methods"], PRE_TRAINING_METRICS)
        cfg.p = float(m["pre_training_bias"].get("p", 2.0))
    if "post_training_bias" in m:
        cfg.post_methods = _expand(m["post_training_bias"]["methods"], POST_TRAINING_METRICS)
        cfg.flip_k = m["post_training_bias"].get("flip_test_k", 5)
    if "shap" in m:
        s = m["shap"]
        cfg.shap = ShapSettings(s.get("baseline"), s.get("num_samples", 3000), s.get("agg_method", "mean_abs"),
                                s.get("mode", "auto"), s.get("seed", 0))
    rep = m.get("report", {})
    cfg.report_name = rep.get("name", "report")
    cfg.report_title = rep.get("title", "Analysis Report")
    cfg.predictor = copy.deepcopy(doc.get("predictor")) if "predictor" in doc else None
    _cross_field(cfg, m)
    return cfg


def _describe(e: jsonschema.ValidationError) -> str:
    if e.validator == "additionalProperties":
        return e.message.replace("Additional properties are not allowed", "unknown key(s)")
    if e.validator == "oneOf":
        return f"{e.instance!r} is not a valid value here"
    return e.message


def _cross_field(cfg: AnalysisConfig, m: dict) -> None:
    if cfg.pre_methods is None and cfg.post_methods is None and cfg.shap is None:
        raise CrossFieldError("enable at least one of shap, pre_training_bias, post_training_bias", "methods")
    if (cfg.post_methods is not None or cfg.shap is not None) and cfg.predictor is None:
        which = "post_training_bias" if cfg.post_methods is not None else "shap"
        raise CrossFieldError(f"methods.{which} needs a predictor block", "predictor")
    if cfg.pre_methods is not None or cfg.post_methods is not None:
        if cfg.label is None:
            raise CrossFieldError("bias metrics need a label column", "label")
        if cfg.label_values_or_threshold is None:
            raise CrossFieldError("bias metrics need label_values_or_threshold", "label_values_or_threshold")
        if not cfg.facets:
            raise CrossFieldError("bias metrics need at least one facet", "facet")
    for section, methods, name in (("pre_training_bias", cfg.pre_methods, "CDDL"),
                                   ("post_training_bias", cfg.post_methods, "CDDPL")):
        if methods is None or name not in methods or cfg.group_variable is not None:
            continue
        if m[section]["methods"] == "all":
            cfg.warnings.append(f"{name} skipped: group_variable not configured")
        else:
            raise CrossFieldError(f"{name} requested without group_variable", f"methods.{section}.methods")
    conditional = {"CDDL"} & set(cfg.pre_methods or []) | {"CDDPL"} & set(cfg.post_methods or [])
    if cfg.group_variable is not None and not conditional:
        cfg.warnings.append("group_variable is set but neither CDDL nor CDDPL is requested")
    if cfg.predictor is not None:
        p = cfg.predictor
        targets = [k for k in ("endpoint_url", "local_model", "model_name") if k in p]
        if len(targets) != 1:
            raise CrossFieldError("exactly one of endpoint_url, local_model, model_name is required", "predictor")
        if "label_headers" in p and "probability" not in p and "endpoint_url" in p:
            raise CrossFieldError("label_headers needs a probability selector", "predictor.label_headers")
        ctype = p.get("accept_type", p.get("content_type", "text/csv"))
        if "endpoint_url" in p and ctype == "application/jsonlines" and "label" not in p and "probability" not in p:
            raise CrossFieldError("JSONLines responses need a label or probability selector", "predictor")
    if cfg.headers is not None and cfg.dataset_type != "text/csv":
        raise CrossFieldError("headers apply to CSV datasets only", "headers")


def load_config(data: bytes | str | Path | dict) -> AnalysisConfig:
    if isinstance(data, dict):
        return parse_config(data)
    if isinstance(data, Path):
        data = data.read_bytes()
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise SchemaError([("<root>", f"malformed JSON: {e}")]) from None
    return parse_config(doc)


# ---------------------------------------------------------------- dataset checks

def dataset_kinds(cfg: AnalysisConfig) -> dict[str, ColumnKind]:
    return {k: ColumnKind(v) for k, v in cfg.column_kinds.items()}


def apply_column_kinds(cfg: AnalysisConfig, ds: TabularDataset) -> TabularDataset:
    for name, kind in dataset_kinds(cfg).items():
        if name not in ds:
            raise ColumnNotFound(f"no column named {name!r}", f"column_kinds.{name}")
        ds = ds.retype(name, kind)
    return ds


def check_columns(cfg: AnalysisConfig, ds: TabularDataset, require_label: bool = True) -> None:
    """Every column the config references must exist in ``ds``."""
    refs: list[tuple[str, Any]] = []
    if cfg.label is not None and require_label:
        refs.append(("label", cfg.label))
    refs += [(f"facet[{i}].name_or_index", f.name_or_index) for i, f in enumerate(cfg.facets)]
    if cfg.group_variable is not None:
        refs.append(("group_variable", cfg.group_variable))
    refs += [(f"excluded_columns[{i}]", r) for i, r in enumerate(cfg.excluded_columns)]
    for path, ref in refs:
        try:
            ds.resolve(ref)
        except MissingColumn as e:
            raise ColumnNotFound(str(e), path) from None
    for name in cfg.column_kinds:
        if name not in ds:
            raise ColumnNotFound(f"no column named {name!r}", f"column_kinds.{name}")


def validate(config: bytes | str | Path | dict, dataset: TabularDataset | None = None) -> AnalysisConfig:
    cfg = load_config(config)
    if dataset is not None:
        check_columns(cfg, dataset)
    return cfg


def resolve_predictor_target(cfg: AnalysisConfig, model_dir: str | Path | None, config_dir: str | Path | None = None):
    """Predictor block with ``model_name`` / relative ``local_model`` resolved to a file.

    An unresolvable model name yields None, handled by the engine as an
    unreachable endpoint.
    """
    p = dict(cfg.predictor or {})
    if "model_name" in p:
        name = p.pop("model_name")
        for root in [model_dir, config_dir]:
            if root is not None and (Path(root) / f"{name}.json").is_file():
                p["local_model"] = str(Path(root) / f"{name}.json")
                break
        else:
            return None
    elif isinstance(p.get("local_model"), str) and config_dir is not None:
        path = Path(p["local_model"])
        if not path.is_absolute() and not path.exists():
            p["local_model"] = str(Path(config_dir) / path)
    for k in ("instance_type", "initial_instance_count"):
        p.pop(k, None)
    return p


def predictor_kwargs(p: dict[str, Any]) -> dict[str, Any]:
    keys = ("endpoint_url", "local_model", "content_type", "accept_type", "label", "probability",
            "label_headers", "max_payload_bytes", "max_retries", "max_concurrent_requests", "timeout_seconds")
    out = {k: p[k] for k in keys if k in p}
    out.setdefault("max_payload_bytes", DEFAULT_MAX_PAYLOAD)
    return out
