"""Phone error rate with long/short sentence stratification.

PER pools edits at the corpus level: 100 * sum(edit distances) /
sum(reference lengths), with unit substitution/insertion/deletion costs.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from percept_tts.errors import DataError

LONG = "long"
SHORT = "short"


def levenshtein(ref: Sequence, hyp: Sequence) -> int:
    """Edit distance with unit costs, two-row dynamic programming."""
    if len(ref) == 0:
        return len(hyp)
    if len(hyp) == 0:
        return len(ref)
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, start=1):
        curr = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, start=1):
            curr[j] = min(
                prev[j] + 1,  # deletion
                curr[j - 1] + 1,  # insertion
                prev[j - 1] + (r != h),  # substitution / match
            )
        prev = curr
    return prev[-1]


def per(ref: Sequence[str], hyp: Sequence[str]) -> float:
    """Phone error rate in percent; insertions can push it above 100."""
    if len(ref) == 0:
        raise DataError("reference phone sequence is empty")
    return 100.0 * levenshtein(ref, hyp) / len(ref)


@dataclass
class PerResult:
    long_per: Optional[float]
    short_per: Optional[float]
    overall_per: float
    counts: dict  # class -> {"pairs": int, "ref_len": int, "edits": int}


def per_breakdown(pairs: list[tuple[Sequence[str], Sequence[str], str]]) -> PerResult:
    """Pooled PER per sentence class plus the overall number.

    Args:
        pairs: (reference phones, hypothesis phones, class) triples where
            class is "long" or "short".

    Returns:
        PerResult; a class absent from the input is reported as None,
        not as 0.
    """
    if not pairs:
        raise DataError("per_breakdown needs at least one pair")
    counts = {
        LONG: {"pairs": 0, "ref_len": 0, "edits": 0},
        SHORT: {"pairs": 0, "ref_len": 0, "edits": 0},
    }
    total_len = 0
    total_edits = 0
    for ref, hyp, cls in pairs:
        if cls not in counts:
            raise DataError(f"unknown sentence class {cls!r}")
        if len(ref) == 0:
            raise DataError("reference phone sequence is empty")
        edits = levenshtein(ref, hyp)
        counts[cls]["pairs"] += 1
        counts[cls]["ref_len"] += len(ref)
        counts[cls]["edits"] += edits
        total_len += len(ref)
        total_edits += edits

    def pooled(cls):
        if counts[cls]["pairs"] == 0:
            return None
        return 100.0 * counts[cls]["edits"] / counts[cls]["ref_len"]

    return PerResult(
        long_per=pooled(LONG),
        short_per=pooled(SHORT),
        overall_per=100.0 * total_edits / total_len,
        counts=counts,
    )


def load_phone_file(path) -> dict[str, list[str]]:
    """Read "utt_id<TAB>space-separated phones" lines."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"phone file {path} does not exist")
    table: dict[str, list[str]] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        parts = raw.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected 'utt_id<TAB>phones'")
        utt_id = parts[0].strip()
        if utt_id in table:
            raise DataError(f"{path}:{lineno}: duplicate utt_id {utt_id!r}")
        table[utt_id] = parts[1].split()
    return table


def load_class_file(path) -> dict[str, str]:
    """Read "utt_id<TAB>long|short" lines."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"class file {path} does not exist")
    table: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        parts = raw.split("\t")
        if len(parts) != 2 or parts[1].strip() not in (LONG, SHORT):
            raise DataError(f"{path}:{lineno}: expected 'utt_id<TAB>long|short'")
        table[parts[0].strip()] = parts[1].strip()
    return table


def pairs_from_files(ref_path, hyp_path, class_path) -> list[tuple[list[str], list[str], str]]:
    refs = load_phone_file(ref_path)
    hyps = load_phone_file(hyp_path)
    classes = load_class_file(class_path)
    pairs = []
    for utt_id, ref in refs.items():
        if utt_id not in hyps:
            raise DataError(f"utt_id {utt_id!r} missing from hypothesis file")
        if utt_id not in classes:
            raise DataError(f"utt_id {utt_id!r} missing from class file")
        pairs.append((ref, hyps[utt_id], classes[utt_id]))
    return pairs
