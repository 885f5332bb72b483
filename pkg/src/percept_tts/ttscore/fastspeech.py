"""Desk-scale FastSpeech: feed-forward stacks around a length regulator.

The duration predictor supports two supervision modes: softmax over
bucketed durations trained with cross-entropy (default) or regression of
log(1 + duration) trained with MSE.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn

from percept_tts.checkpoint import load_checkpoint, save_checkpoint
from percept_tts.dataio.mel import N_MELS
from percept_tts.errors import DataError
from percept_tts.ttscore.layers import (
    FFTBlock,
    Postnet,
    ScaledPositionalEncoding,
    activation_module,
    init_transformer_params,
    pad_mask,
)
from percept_tts.ttscore.transformer import TTSCORE_MAGIC

DURATION_MODES = ("cross_entropy_bucketed", "mse_log")


@dataclass
class FastSpeechConfig:
    vocab_size: int = 40
    n_mels: int = N_MELS
    d_model: int = 64
    n_heads: int = 2
    encoder_layers: int = 2
    decoder_layers: int = 2
    conv_hidden: int = 256
    conv_kernel: int = 3
    duration_mode: str = "cross_entropy_bucketed"
    max_duration: int = 50
    duration_hidden: int = 64
    postnet_layers: int = 3
    postnet_channels: int = 64
    postnet_kernel: int = 5
    dropout: float = 0.1
    activation: str = "relu"

    def __post_init__(self):
        if self.duration_mode not in DURATION_MODES:
            raise DataError(f"unknown duration mode {self.duration_mode!r}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: dict) -> "FastSpeechConfig":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


@dataclass
class FastSpeechOutputs:
    mel_pre: torch.Tensor  # (B, T, n_mels)
    mel_post: torch.Tensor  # (B, T, n_mels)
    duration_pred: torch.Tensor  # (B, N, max_duration+1) logits or (B, N) log-durations
    text_lengths: torch.Tensor
    mel_lengths: torch.Tensor


class DurationPredictor(nn.Module):
    def __init__(self, config: FastSpeechConfig):
        super().__init__()
        c = config
        self.conv1 = nn.Conv1d(c.d_model, c.duration_hidden, c.conv_kernel, padding=c.conv_kernel // 2)
        self.conv2 = nn.Conv1d(c.duration_hidden, c.duration_hidden, c.conv_kernel, padding=c.conv_kernel // 2)
        self.norm1 = nn.LayerNorm(c.duration_hidden)
        self.norm2 = nn.LayerNorm(c.duration_hidden)
        self.act = activation_module(c.activation)
        self.dropout = nn.Dropout(c.dropout)
        out_dim = c.max_duration + 1 if c.duration_mode == "cross_entropy_bucketed" else 1
        self.proj = nn.Linear(c.duration_hidden, out_dim)
        self.mode = c.duration_mode

    def forward(self, x, valid):
        gate = valid[:, None, :].to(x.dtype)
        h = self.conv1(x.transpose(1, 2) * gate) * gate
        h = self.dropout(self.norm1(self.act(h.transpose(1, 2))))
        h = self.conv2(h.transpose(1, 2) * gate) * gate
        h = self.dropout(self.norm2(self.act(h.transpose(1, 2))))
        out = self.proj(h)
        return out if self.mode == "cross_entropy_bucketed" else out.squeeze(-1)

    def to_durations(self, pred, valid):
        """Integer durations from raw predictions, zeroed on padding."""
        if self.mode == "cross_entropy_bucketed":
            durations = pred.argmax(dim=-1)
        else:
            durations = torch.clamp(torch.round(torch.expm1(pred)), min=0).long()
        return durations * valid.long()


class LengthRegulator(nn.Module):
    def forward(self, x: torch.Tensor, durations: torch.Tensor):
        """Repeat each character vector by its duration.

        Args:
            x: (B, N, D) encoder outputs.
            durations: (B, N) non-negative integers; padded slots must be 0.

        Returns:
            (expanded (B, T_max, D), mel_lengths (B,)) where T_max is the
            largest per-item duration sum.
        """
        if torch.any(durations < 0):
            raise DataError("durations must be non-negative")
        mel_lengths = durations.sum(dim=1)
        if torch.any(mel_lengths == 0):
            raise DataError("total duration is zero for at least one utterance")
        t_max = int(mel_lengths.max())
        out = x.new_zeros(x.size(0), t_max, x.size(2))
        for b in range(x.size(0)):
            pos = 0
            for n in range(x.size(1)):
                d = int(durations[b, n])
                if d > 0:
                    out[b, pos : pos + d] = x[b, n]
                    pos += d
        return out, mel_lengths


class FastSpeech(nn.Module):
    def __init__(self, config: FastSpeechConfig | None = None):
        super().__init__()
        self.config = config or FastSpeechConfig()
        c = self.config

        self.embed = nn.Embedding(c.vocab_size + 1, c.d_model, padding_idx=0)
        self.encoder_pos = ScaledPositionalEncoding(c.d_model)
        self.encoder_layers = nn.ModuleList(
            FFTBlock(c.d_model, c.n_heads, c.conv_hidden, c.conv_kernel, c.dropout, c.activation)
            for _ in range(c.encoder_layers)
        )
        self.duration_predictor = DurationPredictor(c)
        self.length_regulator = LengthRegulator()
        self.decoder_pos = ScaledPositionalEncoding(c.d_model)
        self.decoder_layers = nn.ModuleList(
            FFTBlock(c.d_model, c.n_heads, c.conv_hidden, c.conv_kernel, c.dropout, c.activation)
            for _ in range(c.decoder_layers)
        )
        self.mel_proj = nn.Linear(c.d_model, c.n_mels)
        self.postnet = Postnet(
            c.n_mels, c.postnet_channels, c.postnet_layers, c.postnet_kernel, c.dropout
        )
        init_transformer_params(self)

    def encode(self, text, text_lengths):
        text_valid = pad_mask(text_lengths, text.size(1))
        x = self.encoder_pos(self.embed(text))
        for layer in self.encoder_layers:
            x = layer(x, text_valid)
        return x * text_valid[:, :, None].to(x.dtype), text_valid

    def forward(
        self,
        text: torch.Tensor,
        text_lengths: torch.Tensor,
        durations: torch.Tensor | None = None,
    ) -> FastSpeechOutputs:
        """Training mode needs target durations; inference expands by its own.

        Output frame count is the sum of whichever durations were used.
        """
        if text.size(1) == 0 or int(text_lengths.min()) < 1:
            raise DataError("fastspeech forward needs non-empty text")
        encoded, text_valid = self.encode(text, text_lengths)
        duration_pred = self.duration_predictor(encoded, text_valid)

        if durations is None:
            durations = self.duration_predictor.to_durations(duration_pred, text_valid)
        else:
            durations = durations * text_valid.long()

        expanded, mel_lengths = self.length_regulator(encoded, durations)
        mel_valid = pad_mask(mel_lengths, expanded.size(1))
        x = self.decoder_pos(expanded)
        for layer in self.decoder_layers:
            x = layer(x, mel_valid)

        frame_gate = mel_valid[:, :, None].to(x.dtype)
        mel_pre = self.mel_proj(x) * frame_gate
        mel_post = (mel_pre + self.postnet(mel_pre, mel_valid)) * frame_gate
        return FastSpeechOutputs(
            mel_pre=mel_pre,
            mel_post=mel_post,
            duration_pred=duration_pred,
            text_lengths=text_lengths,
            mel_lengths=mel_lengths,
        )


def save_fastspeech(directory, model: FastSpeech, extra: dict | None = None):
    meta = dict(extra or {})
    meta["family"] = "fastspeech"
    return save_checkpoint(directory, TTSCORE_MAGIC, model.state_dict(), model.config.to_dict(), meta)


def load_fastspeech(directory) -> tuple[FastSpeech, dict]:
    state_dict, meta = load_checkpoint(directory, TTSCORE_MAGIC)
    if meta.get("family") != "fastspeech":
        raise DataError(f"{directory} holds a {meta.get('family')!r} model, not a fastspeech")
    model = FastSpeech(FastSpeechConfig.from_dict(meta["config"]))
    model.load_state_dict(state_dict)
    return model, meta
