"""Self-attention duration model: architecture, training, checkpoints."""

from .net import (
    DurationNetConfig,
    DurationNetParams,
    DurationSample,
    attention,
    backward,
    clone_params,
    desk_config,
    forward,
    gaussian_bias,
    init_params,
    iter_tensors,
    l1_loss,
    full_config,
    predict_durations,
    sinusoidal_encoding,
    tiny_config,
    zeros_like_params,
    zeros_params,
)
from .training import (
    TrainLogEntry,
    evaluate_mae,
    gradient_check,
    noam_lr,
    overfit_single,
    phone_mean_baseline_mae,
    train,
)

__all__ = [
    "DurationNetConfig",
    "DurationNetParams",
    "DurationSample",
    "TrainLogEntry",
    "attention",
    "backward",
    "clone_params",
    "desk_config",
    "evaluate_mae",
    "forward",
    "full_config",
    "gaussian_bias",
    "gradient_check",
    "init_params",
    "iter_tensors",
    "l1_loss",
    "noam_lr",
    "overfit_single",
    "phone_mean_baseline_mae",
    "predict_durations",
    "sinusoidal_encoding",
    "tiny_config",
    "train",
    "zeros_like_params",
    "zeros_params",
]
