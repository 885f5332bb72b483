"""Character-level text encoding."""

from dataclasses import dataclass

import numpy as np

from percept_tts.errors import DataError

PAD_ID = 0


@dataclass
class TextSequence:
    token_ids: np.ndarray  # (N,) int64, all >= 1
    length: int

    def __post_init__(self):
        self.token_ids = np.asarray(self.token_ids, dtype=np.int64)
        if self.token_ids.ndim != 1 or self.token_ids.size == 0:
            raise DataError("text sequence must contain at least one token")
        if np.any(self.token_ids < 1):
            raise DataError("token ids must be >= 1 (0 is reserved for padding)")
        if self.length != self.token_ids.size:
            raise DataError("length field disagrees with token count")


def build_vocab(texts) -> dict[str, int]:
    """Deterministic character vocabulary; id 0 stays reserved for padding."""
    chars = sorted({ch for text in texts for ch in text})
    if not chars:
        raise DataError("cannot build a vocabulary from empty texts")
    return {ch: i + 1 for i, ch in enumerate(chars)}


def encode_text(text: str, vocab: dict[str, int]) -> TextSequence:
    if not text:
        raise DataError("cannot encode empty text")
    ids = []
    for ch in text:
        if ch not in vocab:
            raise DataError(f"character {ch!r} not in vocabulary")
        ids.append(vocab[ch])
    return TextSequence(token_ids=np.asarray(ids, dtype=np.int64), length=len(ids))
