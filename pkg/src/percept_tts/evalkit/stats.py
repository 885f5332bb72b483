"""MOS aggregation and paired significance testing."""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from percept_tts.errors import DataError


@dataclass
class MosSummary:
    mean: float
    ci95_halfwidth: Optional[float]  # None when n == 1
    n: int


def mos_aggregate(scores) -> MosSummary:
    """Mean opinion score with a two-sided Student-t 95% confidence interval.

    Halfwidth is t_{0.975, n-1} * s / sqrt(n) with the sample standard
    deviation; undefined (None) for a single score.
    """
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size == 0:
        raise DataError("mos_aggregate needs at least one score")
    mean = float(arr.mean())
    if arr.size == 1:
        return MosSummary(mean=mean, ci95_halfwidth=None, n=1)
    s = float(arr.std(ddof=1))
    t = float(stats.t.ppf(0.975, arr.size - 1))
    return MosSummary(mean=mean, ci95_halfwidth=t * s / math.sqrt(arr.size), n=int(arr.size))


def paired_t_test(a, b) -> Optional[float]:
    """Two-sided paired t-test p-value; None when all differences are zero.

    t = mean(d) / (s_d / sqrt(n)) with n-1 degrees of freedom.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError("paired_t_test needs two equal-length 1-D score vectors")
    if a.size < 2:
        raise DataError("paired_t_test needs at least two pairs")
    d = a - b
    s_d = float(d.std(ddof=1))
    if s_d == 0.0:
        return None
    t = float(d.mean()) / (s_d / math.sqrt(d.size))
    return float(2.0 * stats.t.sf(abs(t), d.size - 1))
