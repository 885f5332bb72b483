"""Corpus manifests and WAV reading.

Manifest lines are UTF-8, tab-separated: utt_id, audio_path, text and an
optional space-separated phone string. Lines starting with '#' are ignored.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from percept_tts.errors import DataError


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    audio_path: str
    text: str
    phones: tuple[str, ...] | None = None


@dataclass
class AudioManifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for entry in self.entries:
            if entry.utt_id in seen:
                raise DataError(f"duplicate utt_id {entry.utt_id!r} in manifest")
            seen.add(entry.utt_id)
            if not entry.text:
                raise DataError(f"entry {entry.utt_id!r} has empty text")
            if entry.phones is not None and len(entry.phones) == 0:
                raise DataError(f"entry {entry.utt_id!r} has an empty phone list")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def load_manifest(path) -> AudioManifest:
    """Parse a manifest file; errors carry the offending line number."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest {path} does not exist")
    entries = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) not in (3, 4):
            raise DataError(
                f"{path}:{lineno}: expected 3 or 4 tab-separated fields, got {len(parts)}"
            )
        utt_id, audio_path, text = parts[0].strip(), parts[1].strip(), parts[2]
        if not utt_id:
            raise DataError(f"{path}:{lineno}: empty utt_id")
        if utt_id in seen:
            raise DataError(
                f"{path}:{lineno}: duplicate utt_id {utt_id!r} (first seen on line {seen[utt_id]})"
            )
        seen[utt_id] = lineno
        if not text.strip():
            raise DataError(f"{path}:{lineno}: empty text for {utt_id!r}")
        phones = None
        if len(parts) == 4:
            phones = tuple(parts[3].split())
            if not phones:
                raise DataError(f"{path}:{lineno}: phone field present but empty")
        entries.append(ManifestEntry(utt_id, audio_path, text.strip(), phones))
    return AudioManifest(entries)


def read_wav(path, expected_sample_rate: int | None = None) -> np.ndarray:
    """Read a 16-bit PCM WAV file as float32 in [-1, 1)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"audio file {path} does not exist")
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if data.dtype != np.int16:
        raise DataError(f"{path}: expected 16-bit PCM, got dtype {data.dtype}")
    if expected_sample_rate is not None and rate != expected_sample_rate:
        raise DataError(
            f"{path}: sample rate {rate} does not match configured {expected_sample_rate}"
        )
    if data.ndim > 1:
        data = data[:, 0]
    return (data.astype(np.float32)) / 32768.0


def write_wav(path, waveform: np.ndarray, sample_rate: int) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    clipped = np.clip(np.asarray(waveform, dtype=np.float64), -1.0, 32767.0 / 32768.0)
    wavfile.write(path, sample_rate, (clipped * 32768.0).astype(np.int16))
