"""Desk-scale Transformer TTS: character encoder, autoregressive mel decoder.

Three encoder and three decoder layers by default, layer-normalized
character embeddings, FC pre-net on decoder input frames, a convolutional
post-net producing a residual refinement, and a per-frame stop projection.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn

from percept_tts.checkpoint import load_checkpoint, save_checkpoint
from percept_tts.dataio.mel import N_MELS
from percept_tts.errors import DataError
from percept_tts.ttscore.layers import (
    DecoderPrenet,
    Postnet,
    ScaledPositionalEncoding,
    TransformerDecoderLayer,
    TransformerEncoderLayer,
    causal_mask,
    init_transformer_params,
    pad_mask,
)

TTSCORE_MAGIC = "TTSCORE1"


@dataclass
class TransformerTtsConfig:
    vocab_size: int = 40
    n_mels: int = N_MELS
    d_model: int = 64
    n_heads: int = 2
    encoder_layers: int = 3
    decoder_layers: int = 3
    ffn_hidden: int = 256
    prenet_hidden: int = 64
    postnet_layers: int = 3
    postnet_channels: int = 64
    postnet_kernel: int = 5
    dropout: float = 0.1
    activation: str = "relu"
    stop_threshold: float = 0.5
    max_frames_factor: int = 20

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: dict) -> "TransformerTtsConfig":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


@dataclass
class TransformerOutputs:
    mel_pre: torch.Tensor  # (B, T, n_mels)
    mel_post: torch.Tensor  # (B, T, n_mels)
    stop_logits: torch.Tensor  # (B, T)
    alignments: list  # per decoder layer: (B, H, T, N) cross-attention weights
    text_lengths: torch.Tensor
    mel_lengths: torch.Tensor


class TransformerTts(nn.Module):
    def __init__(self, config: TransformerTtsConfig | None = None):
        super().__init__()
        self.config = config or TransformerTtsConfig()
        c = self.config

        self.embed = nn.Embedding(c.vocab_size + 1, c.d_model, padding_idx=0)
        self.embed_norm = nn.LayerNorm(c.d_model)
        self.encoder_pos = ScaledPositionalEncoding(c.d_model)
        self.encoder_layers = nn.ModuleList(
            TransformerEncoderLayer(c.d_model, c.n_heads, c.ffn_hidden, c.dropout, c.activation)
            for _ in range(c.encoder_layers)
        )

        self.prenet = DecoderPrenet(c.n_mels, c.prenet_hidden, c.d_model, c.dropout, c.activation)
        self.decoder_pos = ScaledPositionalEncoding(c.d_model)
        self.decoder_layers = nn.ModuleList(
            TransformerDecoderLayer(c.d_model, c.n_heads, c.ffn_hidden, c.dropout, c.activation)
            for _ in range(c.decoder_layers)
        )
        self.mel_proj = nn.Linear(c.d_model, c.n_mels)
        self.stop_proj = nn.Linear(c.d_model, 1)
        self.postnet = Postnet(
            c.n_mels, c.postnet_channels, c.postnet_layers, c.postnet_kernel, c.dropout
        )
        init_transformer_params(self)

    def encode(self, text: torch.Tensor, text_lengths: torch.Tensor) -> torch.Tensor:
        text_valid = pad_mask(text_lengths, text.size(1))
        x = self.embed_norm(self.embed(text))
        x = self.encoder_pos(x)
        attn_mask = text_valid[:, None, None, :]
        for layer in self.encoder_layers:
            x = layer(x, attn_mask)
        return x * text_valid[:, :, None].to(x.dtype)

    def _decode(self, memory, text_lengths, decoder_in, mel_lengths):
        batch, n_frames, _ = decoder_in.shape
        mel_valid = pad_mask(mel_lengths, n_frames)
        text_valid = pad_mask(text_lengths, memory.size(1))

        x = self.prenet(decoder_in)
        x = self.decoder_pos(x)
        self_mask = (
            causal_mask(n_frames, device=x.device)[None, None]
            & mel_valid[:, None, None, :]
        )
        cross_mask = text_valid[:, None, None, :]
        alignments = []
        for layer in self.decoder_layers:
            x, cross_weights = layer(x, memory, self_mask, cross_mask)
            alignments.append(cross_weights)

        frame_gate = mel_valid[:, :, None].to(x.dtype)
        mel_pre = self.mel_proj(x) * frame_gate
        stop_logits = self.stop_proj(x).squeeze(-1) * mel_valid.to(x.dtype)
        mel_post = mel_pre + self.postnet(mel_pre, mel_valid)
        return mel_pre, mel_post * frame_gate, stop_logits, alignments

    def forward(
        self,
        text: torch.Tensor,
        text_lengths: torch.Tensor,
        target_mel: torch.Tensor,
        mel_lengths: torch.Tensor,
    ) -> TransformerOutputs:
        """Teacher-forced pass; output frames match the target's length."""
        if text.size(1) == 0 or int(text_lengths.min()) < 1:
            raise DataError("transformer forward needs non-empty text")
        memory = self.encode(text, text_lengths)
        go = torch.zeros_like(target_mel[:, :1])
        decoder_in = torch.cat([go, target_mel[:, :-1]], dim=1)
        mel_pre, mel_post, stop_logits, alignments = self._decode(
            memory, text_lengths, decoder_in, mel_lengths
        )
        return TransformerOutputs(
            mel_pre=mel_pre,
            mel_post=mel_post,
            stop_logits=stop_logits,
            alignments=alignments,
            text_lengths=text_lengths,
            mel_lengths=mel_lengths,
        )

    @torch.no_grad()
    def infer(self, text: torch.Tensor, max_frames: int | None = None):
        """Autoregressive generation for a single utterance (batch of one).

        Returns (mel_post (1, T, n_mels), stop_probs (T,), alignments,
        truncated flag).
        """
        if text.dim() != 2 or text.size(0) != 1:
            raise DataError("infer expects a single utterance batch")
        n_text = text.size(1)
        if n_text == 0:
            raise DataError("cannot synthesize from empty text")
        was_training = self.training
        self.eval()
        try:
            text_lengths = torch.tensor([n_text], device=text.device)
            memory = self.encode(text, text_lengths)
            cap = max_frames or self.config.max_frames_factor * n_text
            frames = torch.zeros(1, 1, self.config.n_mels, device=text.device)
            stop_probs = []
            truncated = True
            alignments = None
            for step in range(cap):
                mel_lengths = torch.tensor([frames.size(1)], device=text.device)
                mel_pre, mel_post, stop_logits, alignments = self._decode(
                    memory, text_lengths, frames, mel_lengths
                )
                frames = torch.cat([frames, mel_pre[:, -1:]], dim=1)
                prob = float(torch.sigmoid(stop_logits[0, -1]))
                stop_probs.append(prob)
                if prob > self.config.stop_threshold:
                    truncated = False
                    break
            n_out = len(stop_probs)
            mel_lengths = torch.tensor([n_out], device=text.device)
            _, mel_post, _, alignments = self._decode(
                memory, text_lengths, frames[:, :n_out], mel_lengths
            )
            return mel_post, torch.tensor(stop_probs), alignments, truncated
        finally:
            if was_training:
                self.train()


def save_transformer_tts(directory, model: TransformerTts, extra: dict | None = None):
    meta = dict(extra or {})
    meta["family"] = "transformer"
    return save_checkpoint(directory, TTSCORE_MAGIC, model.state_dict(), model.config.to_dict(), meta)


def load_transformer_tts(directory) -> tuple[TransformerTts, dict]:
    state_dict, meta = load_checkpoint(directory, TTSCORE_MAGIC)
    if meta.get("family") != "transformer":
        raise DataError(f"{directory} holds a {meta.get('family')!r} model, not a transformer")
    model = TransformerTts(TransformerTtsConfig.from_dict(meta["config"]))
    model.load_state_dict(state_dict)
    return model, meta
