"""Rated-utterance datasets and the MOS-corpus augmentation step.

The augmentation mixes the rated MOS corpus with the (unrated) TTS corpus,
assuming studio-quality TTS recordings deserve the top score. The assumed
score is configurable for sensitivity studies; the default is 5.0.
"""

from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

from percept_tts.dataio.manifest import AudioManifest, read_wav
from percept_tts.dataio.mel import MelConfig, MelSpectrogram, extract_mel
from percept_tts.errors import DataError


class UtteranceOrigin(str, Enum):
    MOS_CORPUS = "mos_corpus"
    TTS_CORPUS = "tts_corpus"


@dataclass
class RatedUtterance:
    utt_id: str
    mel: MelSpectrogram
    mos: float
    origin: UtteranceOrigin

    def __post_init__(self):
        if not 1.0 <= self.mos <= 5.0:
            raise DataError(f"{self.utt_id}: mos {self.mos} outside [1, 5]")

    @property
    def key(self) -> tuple[str, str]:
        """De-duplication key; same utt_id in the two corpora never collides."""
        return (self.origin.value, self.utt_id)


def augment_mos_dataset(
    mos_set: list[RatedUtterance],
    tts_manifest: AudioManifest,
    mel_config: MelConfig,
    assumed_mos: float = 5.0,
    enabled: bool = True,
    mel_loader=None,
) -> list[RatedUtterance]:
    """Append one assumed-top-score utterance per TTS manifest entry.

    Args:
        mos_set: Rated utterances, nominally from the MOS corpus; entries
            are passed through untouched, so feeding an already augmented
            set back in is harmless once de-duplicated by key.
        tts_manifest: TTS corpus to fold in.
        mel_config: Analysis parameters used when mels are extracted here.
        assumed_mos: Ground-truth score assigned to TTS-corpus utterances.
        enabled: When False (the no-augmentation ablation) the input set is
            returned unchanged (as a copy).
        mel_loader: Optional ``entry -> MelSpectrogram`` override, used to
            read pre-computed caches instead of decoding audio.

    Returns:
        New list: the original entries followed by one TTS-corpus entry per
        manifest row, in manifest order.
    """
    out = list(mos_set)
    if not enabled:
        return out
    for entry in tts_manifest:
        if mel_loader is not None:
            mel = mel_loader(entry)
        else:
            if not Path(entry.audio_path).exists():
                raise DataError(f"entry {entry.utt_id!r}: audio path {entry.audio_path} unreadable")
            mel = extract_mel(read_wav(entry.audio_path, mel_config.sample_rate), mel_config)
        out.append(
            RatedUtterance(
                utt_id=entry.utt_id,
                mel=mel,
                mos=assumed_mos,
                origin=UtteranceOrigin.TTS_CORPUS,
            )
        )
    return out


def dedupe_by_key(utterances: list[RatedUtterance]) -> list[RatedUtterance]:
    """Keep the first occurrence of each (origin, utt_id) pair."""
    seen = set()
    out = []
    for utt in utterances:
        if utt.key not in seen:
            seen.add(utt.key)
            out.append(utt)
    return out


def mean_mos_by_utterance(records, test: str = "naturalness") -> dict[str, float]:
    """Average listening-test scores per utterance, for predictor training labels."""
    totals: dict[str, list[float]] = {}
    for rec in records:
        if rec.test == test:
            totals.setdefault(rec.utt_id, []).append(rec.score)
    return {utt: sum(scores) / len(scores) for utt, scores in totals.items()}


def with_mos(utt: RatedUtterance, mos: float) -> RatedUtterance:
    return replace(utt, mos=mos)
