"""Listening-test rating tables.

CSV with header ``system_id,utt_id,rater_id,test,score``. Naturalness
scores live on the 1.0..5.0 half-point grid; intelligibility scores are
integers 1..5.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

from percept_tts.errors import DataError

EXPECTED_HEADER = ["system_id", "utt_id", "rater_id", "test", "score"]
VALID_TESTS = ("naturalness", "intelligibility")


@dataclass(frozen=True)
class RatingRecord:
    system_id: str
    utt_id: str
    rater_id: str
    test: str  # "naturalness" | "intelligibility"
    score: float

    def __post_init__(self):
        if self.test not in VALID_TESTS:
            raise DataError(f"unknown test {self.test!r}")
        _validate_score(self.test, self.score)


def _validate_score(test: str, score: float) -> None:
    if not 1.0 <= score <= 5.0:
        raise DataError(f"score {score} outside [1, 5]")
    if test == "naturalness":
        if round(score * 2) != score * 2:
            raise DataError(f"naturalness score {score} not on the 0.5 grid")
    else:
        if round(score) != score:
            raise DataError(f"intelligibility score {score} is not an integer")


def load_ratings(path) -> list[RatingRecord]:
    """Parse a ratings CSV; errors carry the offending line number."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"ratings file {path} does not exist")
    records = []
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            return []
        if [h.strip() for h in header] != EXPECTED_HEADER:
            raise DataError(f"{path}:1: header must be {','.join(EXPECTED_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 5:
                raise DataError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            system_id, utt_id, rater_id, test, score_text = (cell.strip() for cell in row)
            try:
                score = float(score_text)
            except ValueError:
                raise DataError(f"{path}:{lineno}: score {score_text!r} is not a number") from None
            try:
                records.append(RatingRecord(system_id, utt_id, rater_id, test, score))
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return records
