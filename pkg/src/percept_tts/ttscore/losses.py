"""Conventional TTS losses: masked L2, stop-token BCE, guided attention,
duration supervision."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from percept_tts.dataio.mel import MelSpectrogram
from percept_tts.errors import DataError, NumericalError
from percept_tts.ttscore.fastspeech import FastSpeechOutputs
from percept_tts.ttscore.layers import pad_mask
from percept_tts.ttscore.transformer import TransformerOutputs


@dataclass
class TtsTarget:
    """Per-utterance training target."""

    utt_id: str
    mel: MelSpectrogram
    stop_labels: np.ndarray  # (T,) {0,1}, last valid frame is 1
    durations: Optional[np.ndarray] = None  # (N,) ints summing to T

    def __post_init__(self):
        self.stop_labels = np.asarray(self.stop_labels, dtype=np.float32)
        if self.stop_labels.shape != (self.mel.n_frames,):
            raise DataError(f"{self.utt_id}: stop labels must cover every frame")
        if self.stop_labels[-1] != 1.0:
            raise DataError(f"{self.utt_id}: stop labels must end with 1")
        if self.durations is not None:
            self.durations = np.asarray(self.durations, dtype=np.int64)
            if np.any(self.durations < 0):
                raise DataError(f"{self.utt_id}: negative duration")
            if int(self.durations.sum()) != self.mel.n_frames:
                raise DataError(
                    f"{self.utt_id}: durations sum to {int(self.durations.sum())}, "
                    f"mel has {self.mel.n_frames} frames"
                )


def make_stop_labels(n_frames: int) -> np.ndarray:
    labels = np.zeros(n_frames, dtype=np.float32)
    labels[-1] = 1.0
    return labels


@dataclass
class AttentionAlignment:
    """Single-head alignment: rows are text positions, columns decoder steps."""

    weights: np.ndarray  # (N, T), every column sums to 1

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise DataError("alignment must be a matrix")
        if np.any(self.weights < 0):
            raise DataError("alignment weights must be non-negative")
        sums = self.weights.sum(axis=0)
        if np.any(np.abs(sums - 1.0) > 1e-5):
            raise DataError("each decoder-step column must sum to 1")


def guided_attention_weight_matrix(n_text, n_frames, g, like: torch.Tensor | None = None):
    """W[n, t] = 1 - exp(-(n/N - t/T)^2 / (2 g^2)), shape (N, T)."""
    if like is not None:
        n = torch.arange(n_text, device=like.device, dtype=like.dtype)[:, None] / n_text
        t = torch.arange(n_frames, device=like.device, dtype=like.dtype)[None, :] / n_frames
        return 1.0 - torch.exp(-((n - t) ** 2) / (2.0 * g * g))
    n = np.arange(n_text, dtype=np.float64)[:, None] / n_text
    t = np.arange(n_frames, dtype=np.float64)[None, :] / n_frames
    return 1.0 - np.exp(-((n - t) ** 2) / (2.0 * g * g))


def guided_attention_loss(alignment: AttentionAlignment, g: float = 0.2) -> float:
    """Mean over all (n, t) cells of W * A; zero for a perfectly diagonal square."""
    if g <= 0:
        raise DataError("guided attention width g must be positive")
    n_text, n_frames = alignment.weights.shape
    w = guided_attention_weight_matrix(n_text, n_frames, g)
    return float(np.mean(w * alignment.weights))


def masked_mel_l2(pred: torch.Tensor, target: torch.Tensor, mel_lengths: torch.Tensor):
    """MSE over valid frame-cells only; padding never dilutes the mean."""
    valid = pad_mask(mel_lengths, target.size(1))
    mask = valid[:, :, None].to(pred.dtype)
    denom = mask.sum() * pred.size(-1)
    return ((pred - target) ** 2 * mask).sum() / denom


def masked_stop_bce(
    stop_logits: torch.Tensor,
    stop_labels: torch.Tensor,
    mel_lengths: torch.Tensor,
    pos_weight: float = 5.0,
):
    valid = pad_mask(mel_lengths, stop_labels.size(1)).to(stop_logits.dtype)
    pw = torch.tensor(pos_weight, dtype=stop_logits.dtype, device=stop_logits.device)
    per_frame = F.binary_cross_entropy_with_logits(
        stop_logits, stop_labels, pos_weight=pw, reduction="none"
    )
    return (per_frame * valid).sum() / valid.sum()


def batched_guided_attention(
    alignments: list[torch.Tensor],
    text_lengths: torch.Tensor,
    mel_lengths: torch.Tensor,
    g: float = 0.2,
):
    """Mean guided-attention penalty over layers, heads and valid cells."""
    if g <= 0:
        raise DataError("guided attention width g must be positive")
    total = None
    count = 0
    for att in alignments:  # (B, H, T, N)
        batch, n_heads, _, _ = att.shape
        for b in range(batch):
            n_text = int(text_lengths[b])
            n_frames = int(mel_lengths[b])
            w = guided_attention_weight_matrix(n_text, n_frames, g, like=att)
            block = att[b, :, :n_frames, :n_text]  # (H, T, N)
            value = (block * w.T[None]).mean()
            total = value if total is None else total + value
            count += 1
    return total / count


def _finite_or_raise(terms: dict):
    for name, value in terms.items():
        if not torch.isfinite(value):
            raise NumericalError(f"loss term {name} is non-finite ({float(value)})")


def transformer_conventional_loss(
    outputs: TransformerOutputs,
    target_mel: torch.Tensor,
    stop_labels: torch.Tensor,
    ga_weight: float = 1.0,
    ga_g: float = 0.2,
    stop_pos_weight: float = 5.0,
):
    """Total plus breakdown {l2_pre, l2_post, stop_bce, guided_attn}.

    The guided_attn entry already carries ga_weight so the breakdown sums
    to the total exactly.
    """
    terms = {
        "l2_pre": masked_mel_l2(outputs.mel_pre, target_mel, outputs.mel_lengths),
        "l2_post": masked_mel_l2(outputs.mel_post, target_mel, outputs.mel_lengths),
        "stop_bce": masked_stop_bce(
            outputs.stop_logits, stop_labels, outputs.mel_lengths, stop_pos_weight
        ),
        "guided_attn": ga_weight
        * batched_guided_attention(
            outputs.alignments, outputs.text_lengths, outputs.mel_lengths, ga_g
        ),
    }
    _finite_or_raise(terms)
    total = terms["l2_pre"] + terms["l2_post"] + terms["stop_bce"] + terms["guided_attn"]
    return total, terms


def duration_loss(
    duration_pred: torch.Tensor,
    durations: torch.Tensor,
    text_lengths: torch.Tensor,
    mode: str,
    max_duration: int = 50,
):
    valid = pad_mask(text_lengths, durations.size(1))
    if mode == "cross_entropy_bucketed":
        target = torch.clamp(durations, 0, max_duration)
        per_token = F.cross_entropy(
            duration_pred.transpose(1, 2), target, reduction="none"
        )
    elif mode == "mse_log":
        target = torch.log1p(durations.to(duration_pred.dtype))
        per_token = (duration_pred - target) ** 2
    else:
        raise DataError(f"unknown duration mode {mode!r}")
    gate = valid.to(per_token.dtype)
    return (per_token * gate).sum() / gate.sum()


def fastspeech_conventional_loss(
    outputs: FastSpeechOutputs,
    target_mel: torch.Tensor,
    durations: torch.Tensor | None,
    mode: str = "cross_entropy_bucketed",
    max_duration: int = 50,
):
    """Total plus breakdown {l2_pre, l2_post, duration_loss}."""
    if durations is None:
        raise DataError("fastspeech loss needs target durations")
    terms = {
        "l2_pre": masked_mel_l2(outputs.mel_pre, target_mel, outputs.mel_lengths),
        "l2_post": masked_mel_l2(outputs.mel_post, target_mel, outputs.mel_lengths),
        "duration_loss": duration_loss(
            outputs.duration_pred, durations, outputs.text_lengths, mode, max_duration
        ),
    }
    _finite_or_raise(terms)
    total = terms["l2_pre"] + terms["l2_post"] + terms["duration_loss"]
    return total, terms
