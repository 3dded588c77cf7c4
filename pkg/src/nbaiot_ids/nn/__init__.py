from nbaiot_ids.nn.model import (
    Model,
    ModelConfig,
    backward,
    convnext_block_forward,
    convnext_stage,
    forward,
    init_model,
    closed_form_param_estimate,
    param_breakdown,
    param_count,
    param_shapes,
    predict_proba,
)
from nbaiot_ids.nn.serialize import load_model, model_from_bytes, model_to_bytes, save_model

__all__ = [
    "Model",
    "ModelConfig",
    "backward",
    "convnext_block_forward",
    "convnext_stage",
    "forward",
    "init_model",
    "load_model",
    "model_from_bytes",
    "model_to_bytes",
    "closed_form_param_estimate",
    "param_breakdown",
    "param_count",
    "param_shapes",
    "predict_proba",
    "save_model",
]
