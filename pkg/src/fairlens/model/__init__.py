"""Black-box model access: local predictors, HTTP endpoints, response parsing."""

from .client import ModelClient, PredictorConfig, plan_batches, predict_batchwise, serialize_rows
from .local import (
    ConstantModel,
    LinearModel,
    Stump,
    StumpEnsemble,
    load_local_model,
    local_predict,
    model_from_spec,
    model_to_spec,
)
from .export import stumps_from_boosting
from .parsing import CSV, JSONLINES, BinaryPredictionRule, PredictionSet, binarize_predictions, parse_response

__all__ = [
    "ModelClient", "PredictorConfig", "plan_batches", "predict_batchwise", "serialize_rows",
    "ConstantModel", "LinearModel", "Stump", "StumpEnsemble", "load_local_model", "local_predict",
    "model_from_spec", "model_to_spec", "stumps_from_boosting",
    "CSV", "JSONLINES", "BinaryPredictionRule", "PredictionSet", "binarize_predictions", "parse_response",
]
