"""Utterance-level validation metrics for the MOS predictor."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from percept_tts.dataio.dataset import RatedUtterance
from percept_tts.errors import DataError
from percept_tts.mosnet.model import MosPredictor, score_batch


@dataclass
class MosPredictionMetrics:
    lcc: Optional[float]  # None when undefined (zero variance)
    srcc: Optional[float]
    mse: float

    def to_dict(self) -> dict:
        return {"lcc": self.lcc, "srcc": self.srcc, "mse": self.mse}


def compute_mos_metrics(predictions, labels) -> MosPredictionMetrics:
    """LCC / SRCC / MSE between predicted and true utterance scores.

    Zero-variance predictions or labels leave the correlations undefined
    (None), never 0.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise DataError("predictions and labels must be equal-length vectors")
    if predictions.size < 2:
        raise DataError("need at least two utterances for correlation metrics")

    mse = float(np.mean((predictions - labels) ** 2))
    if np.std(predictions) == 0.0 or np.std(labels) == 0.0:
        return MosPredictionMetrics(lcc=None, srcc=None, mse=mse)
    lcc = float(stats.pearsonr(predictions, labels).statistic)
    srcc = float(stats.spearmanr(predictions, labels).statistic)
    return MosPredictionMetrics(lcc=lcc, srcc=srcc, mse=mse)


def eval_mos_predictor(model: MosPredictor, testset: list[RatedUtterance]) -> MosPredictionMetrics:
    if len(testset) < 2:
        raise DataError("eval_mos_predictor needs at least two utterances")
    predictions = score_batch(model, [u.mel for u in testset])
    labels = np.asarray([u.mos for u in testset], dtype=np.float64)
    return compute_mos_metrics(predictions, labels)
