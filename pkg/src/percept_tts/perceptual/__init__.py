"""Perceptual loss through a frozen MOS predictor and the combined objective."""

from percept_tts.perceptual.loss import LossBreakdown, combined_loss, perceptual_loss
from percept_tts.perceptual.schedule import LambdaSchedule, lambda_at
from percept_tts.perceptual.train import (
    PerceptualTrainingConfig,
    TrainBatch,
    TtsTrainConfig,
    collate,
    conventional_forward,
    conventional_train_step,
    perceptual_train_step,
    score_generated_mel,
    train_tts,
)

__all__ = [
    "LambdaSchedule",
    "LossBreakdown",
    "PerceptualTrainingConfig",
    "TrainBatch",
    "TtsTrainConfig",
    "collate",
    "combined_loss",
    "conventional_forward",
    "conventional_train_step",
    "lambda_at",
    "perceptual_loss",
    "perceptual_train_step",
    "score_generated_mel",
    "train_tts",
]
