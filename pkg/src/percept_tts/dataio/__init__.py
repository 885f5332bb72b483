"""Dataset ingestion: manifests, ratings, mel extraction and augmentation."""

from percept_tts.dataio.dataset import RatedUtterance, UtteranceOrigin, augment_mos_dataset
from percept_tts.dataio.manifest import AudioManifest, ManifestEntry, load_manifest, read_wav
from percept_tts.dataio.mel import (
    MelConfig,
    MelSpectrogram,
    extract_mel,
    griffin_lim,
    mel_filterbank,
    read_mel_cache,
    write_mel_cache,
)
from percept_tts.dataio.ratings import RatingRecord, load_ratings

__all__ = [
    "AudioManifest",
    "ManifestEntry",
    "MelConfig",
    "MelSpectrogram",
    "RatedUtterance",
    "RatingRecord",
    "UtteranceOrigin",
    "augment_mos_dataset",
    "extract_mel",
    "griffin_lim",
    "load_manifest",
    "load_ratings",
    "mel_filterbank",
    "read_mel_cache",
    "read_wav",
    "write_mel_cache",
]
