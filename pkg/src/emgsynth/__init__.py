"""Angle-conditioned multichannel EMG synthesis and evaluation toolkit."""

from .dataset import (
    DatasetError,
    DatasetManifest,
    EmgSequence,
    JointAngleSequence,
    NormStats,
    PairedSample,
    load_dataset,
    save_dataset,
    split_dataset,
    window_pairs,
)
from .losses import adversarial_losses, kl_loss, total_objective
from .metrics import dtw_exact, envelope, envelope_cc, fast_dtw, fft_mse
from .model import ModelConfig, Synthesizer, build_discriminator, load_checkpoint, save_checkpoint
from .toyoracle import ToyOracleConfig, generate_toy_dataset
from .training import TrainConfig, lr_at, sgd_update, train

__version__ = "0.1.0"

__all__ = [
    "DatasetError",
    "DatasetManifest",
    "EmgSequence",
    "JointAngleSequence",
    "ModelConfig",
    "NormStats",
    "PairedSample",
    "Synthesizer",
    "ToyOracleConfig",
    "TrainConfig",
    "adversarial_losses",
    "build_discriminator",
    "dtw_exact",
    "envelope",
    "envelope_cc",
    "fast_dtw",
    "fft_mse",
    "generate_toy_dataset",
    "kl_loss",
    "load_checkpoint",
    "load_dataset",
    "lr_at",
    "save_checkpoint",
    "save_dataset",
    "sgd_update",
    "split_dataset",
    "total_objective",
    "train",
    "window_pairs",
]
