"""Epoch-indexed weight schedule for the conventional-loss side of the mix."""

from dataclasses import dataclass

from percept_tts.errors import DataError


@dataclass(frozen=True)
class LambdaSchedule:
    """Linear decay from lambda0 by decay_per_epoch, clamped at lambda_min."""

    lambda0: float
    decay_per_epoch: float
    lambda_min: float

    def __post_init__(self):
        if not self.lambda0 >= self.lambda_min >= 0:
            raise DataError("need lambda0 >= lambda_min >= 0")
        if self.decay_per_epoch < 0:
            raise DataError("decay_per_epoch must be >= 0")

    def to_dict(self) -> dict:
        return {
            "lambda0": self.lambda0,
            "decay_per_epoch": self.decay_per_epoch,
            "lambda_min": self.lambda_min,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LambdaSchedule":
        return cls(
            lambda0=float(data["lambda0"]),
            decay_per_epoch=float(data["decay_per_epoch"]),
            lambda_min=float(data["lambda_min"]),
        )


def lambda_at(schedule: LambdaSchedule, epoch: int) -> float:
    """max(lambda0 - decay_per_epoch * epoch, lambda_min); epochs are 0-based."""
    if epoch < 0:
        raise DataError(f"epoch must be >= 0, got {epoch}")
    return max(schedule.lambda0 - schedule.decay_per_epoch * epoch, schedule.lambda_min)
