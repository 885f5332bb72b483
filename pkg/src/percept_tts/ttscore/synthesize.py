"""Inference wrappers producing mel spectrograms from text."""

from dataclasses import dataclass

import numpy as np
import torch

from percept_tts.dataio.mel import MelConfig, MelSpectrogram
from percept_tts.errors import DataError
from percept_tts.ttscore.fastspeech import FastSpeech
from percept_tts.ttscore.text import TextSequence
from percept_tts.ttscore.transformer import TransformerTts


@dataclass
class SynthesisResult:
    mel: MelSpectrogram
    truncated: bool  # transformer hit its frame cap before emitting a stop


def synthesize(model, text: TextSequence, mel_config: MelConfig | None = None) -> SynthesisResult:
    """Run inference for either model family.

    Transformer models stop when the stop probability crosses the
    configured threshold or the frame cap (max_frames_factor * N) is hit;
    FastSpeech expands by its own predicted durations.
    """
    mel_config = mel_config or MelConfig()
    tokens = torch.from_numpy(np.asarray(text.token_ids, dtype=np.int64))[None]

    if isinstance(model, TransformerTts):
        mel_post, _, _, truncated = model.infer(tokens)
        frames = mel_post[0].numpy()
    elif isinstance(model, FastSpeech):
        was_training = model.training
        model.eval()
        try:
            with torch.no_grad():
                outputs = model(tokens, torch.tensor([text.length]))
        finally:
            if was_training:
                model.train()
        frames = outputs.mel_post[0, : int(outputs.mel_lengths[0])].numpy()
        truncated = False
    else:
        raise DataError(f"cannot synthesize with model type {type(model).__name__}")

    mel = MelSpectrogram(
        frames=frames,
        sample_rate=float(mel_config.sample_rate),
        hop_length=mel_config.hop_length,
    )
    return SynthesisResult(mel=mel, truncated=truncated)
