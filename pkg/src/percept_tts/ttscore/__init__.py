"""Toy-scale Transformer TTS and FastSpeech with their conventional losses."""

from percept_tts.ttscore.distill import (
    DistillReport,
    distill_targets,
    durations_from_alignment,
    load_distilled_targets,
    save_distilled_targets,
)
from percept_tts.ttscore.fastspeech import (
    FastSpeech,
    FastSpeechConfig,
    FastSpeechOutputs,
    LengthRegulator,
    load_fastspeech,
    save_fastspeech,
)
from percept_tts.ttscore.losses import (
    AttentionAlignment,
    TtsTarget,
    fastspeech_conventional_loss,
    guided_attention_loss,
    make_stop_labels,
    transformer_conventional_loss,
)
from percept_tts.ttscore.synthesize import SynthesisResult, synthesize
from percept_tts.ttscore.text import TextSequence, build_vocab, encode_text
from percept_tts.ttscore.transformer import (
    TTSCORE_MAGIC,
    TransformerOutputs,
    TransformerTts,
    TransformerTtsConfig,
    load_transformer_tts,
    save_transformer_tts,
)

__all__ = [
    "AttentionAlignment",
    "DistillReport",
    "FastSpeech",
    "FastSpeechConfig",
    "FastSpeechOutputs",
    "LengthRegulator",
    "SynthesisResult",
    "TTSCORE_MAGIC",
    "TextSequence",
    "TransformerOutputs",
    "TransformerTts",
    "TransformerTtsConfig",
    "TtsTarget",
    "build_vocab",
    "distill_targets",
    "durations_from_alignment",
    "encode_text",
    "fastspeech_conventional_loss",
    "guided_attention_loss",
    "load_distilled_targets",
    "load_fastspeech",
    "load_transformer_tts",
    "make_stop_labels",
    "save_distilled_targets",
    "save_fastspeech",
    "save_transformer_tts",
    "synthesize",
    "transformer_conventional_loss",
]
