"""Frame-level convolutional-recurrent MOS predictor and its training loop."""

from percept_tts.mosnet.metrics import MosPredictionMetrics, compute_mos_metrics, eval_mos_predictor
from percept_tts.mosnet.model import (
    MOSNET_MAGIC,
    MosPredictor,
    MosPredictorConfig,
    load_mos_predictor,
    mos_forward,
    save_mos_predictor,
)
from percept_tts.mosnet.train import MosTrainConfig, train_mos

__all__ = [
    "MOSNET_MAGIC",
    "MosPredictionMetrics",
    "MosPredictor",
    "MosPredictorConfig",
    "MosTrainConfig",
    "compute_mos_metrics",
    "eval_mos_predictor",
    "load_mos_predictor",
    "mos_forward",
    "save_mos_predictor",
    "train_mos",
]
