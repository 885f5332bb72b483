"""Intelligibility score histograms and the FCR / TMSR ratios.

FCR = (N4 + N5) / N_tot is the share of ratings where the sentence meaning
came through fully; TMSR = N3 / (N1 + N2 + N3) is, among the degraded
ratings, the share where the sentence still made sense.
"""

from dataclasses import dataclass
from typing import Optional

from percept_tts.errors import DataError


@dataclass(frozen=True)
class ScoreHistogram:
    """Counts of intelligibility ratings 1..5."""

    n1: int
    n2: int
    n3: int
    n4: int
    n5: int

    def __post_init__(self):
        for name in ("n1", "n2", "n3", "n4", "n5"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise DataError(f"{name} must be a non-negative integer, got {value!r}")

    @property
    def n_total(self) -> int:
        return self.n1 + self.n2 + self.n3 + self.n4 + self.n5

    @classmethod
    def from_scores(cls, scores) -> "ScoreHistogram":
        counts = [0] * 5
        for score in scores:
            idx = int(score)
            if idx != score or not 1 <= idx <= 5:
                raise DataError(f"intelligibility score {score!r} is not an integer in 1..5")
            counts[idx - 1] += 1
        return cls(*counts)

    def scaled(self, k: int) -> "ScoreHistogram":
        return ScoreHistogram(self.n1 * k, self.n2 * k, self.n3 * k, self.n4 * k, self.n5 * k)


def fcr(hist: ScoreHistogram) -> float:
    """Fully-conveyed ratio (N4 + N5) / N_tot."""
    if hist.n_total == 0:
        raise DataError("fcr is undefined for an empty histogram")
    return (hist.n4 + hist.n5) / hist.n_total


def tmsr(hist: ScoreHistogram) -> Optional[float]:
    """Though-makes-sense ratio N3 / (N1 + N2 + N3); None when no rating is below 4."""
    denom = hist.n1 + hist.n2 + hist.n3
    if denom == 0:
        return None
    return hist.n3 / denom
