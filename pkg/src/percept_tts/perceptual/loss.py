"""Perceptual loss against a reference quality score and the combined objective."""

import math
from dataclasses import dataclass

import numpy as np
import torch

from percept_tts.errors import DataError, NumericalError


def perceptual_loss(predicted_mos, mos_target: float = 5.0):
    """L1 distance between the target score and the prediction.

    Scalars give |target - pred|; batches give the mean of per-utterance
    absolute differences. Predictions above the target are not clamped;
    overshoot is penalized symmetrically. Works on floats, numpy arrays
    and torch tensors (staying differentiable for tensors).
    """
    if isinstance(predicted_mos, torch.Tensor):
        if not torch.all(torch.isfinite(predicted_mos)):
            raise NumericalError("predicted MOS contains non-finite values")
        return torch.abs(mos_target - predicted_mos).mean()
    arr = np.asarray(predicted_mos, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericalError("predicted MOS contains non-finite values")
    return float(np.mean(np.abs(mos_target - arr)))


def combined_loss(l_con, l_per, lam: float):
    """(lam * l_con + l_per) / (lam + 1) - a convex combination of the two."""
    if lam < 0:
        raise DataError(f"lambda must be >= 0, got {lam}")
    return (lam * l_con + l_per) / (lam + 1.0)


@dataclass(frozen=True)
class LossBreakdown:
    l_con: float
    l_per: float
    lam: float
    total: float

    @classmethod
    def make(cls, l_con: float, l_per: float, lam: float) -> "LossBreakdown":
        return cls(
            l_con=float(l_con),
            l_per=float(l_per),
            lam=float(lam),
            total=float(combined_loss(float(l_con), float(l_per), lam)),
        )

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.l_con, self.l_per, self.lam, self.total)):
            raise NumericalError(f"non-finite loss breakdown: {self}")
