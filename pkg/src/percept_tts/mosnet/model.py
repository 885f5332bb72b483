"""MOS predictor: stacked 3x3 convolutions, one BLSTM, two FC layers, global pooling.

The convolutional stack is grouped into blocks of equal channel width; the
last convolution of each block strides 3 along frequency, collapsing the 80
mel bins before the recurrent layer. Time is never strided, so the model
emits one score per input frame and the utterance score is the masked mean
of the frame scores.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from percept_tts.checkpoint import load_checkpoint, save_checkpoint
from percept_tts.dataio.mel import N_MELS, MelSpectrogram
from percept_tts.errors import DataError

MOSNET_MAGIC = "MOSNET1"

_ACTIVATIONS = {"relu": nn.ReLU, "tanh": nn.Tanh}


@dataclass
class MosPredictorConfig:
    n_conv_layers: int = 12
    conv_channels: tuple[int, ...] = (16, 32, 64, 128)
    blstm_units: int = 32
    fc_sizes: tuple[int, int] = (32, 1)
    input_bins: int = N_MELS
    dropout: float = 0.3
    activation: str = "relu"

    def __post_init__(self):
        if self.input_bins != N_MELS:
            raise DataError(f"input_bins must be {N_MELS}")
        if self.n_conv_layers < 1 or self.blstm_units < 1:
            raise DataError("n_conv_layers and blstm_units must be >= 1")
        if self.n_conv_layers % len(self.conv_channels) != 0:
            raise DataError("n_conv_layers must be a multiple of the channel plan length")
        if self.fc_sizes[1] != 1:
            raise DataError("the final FC layer must emit a single frame score")
        if self.activation not in _ACTIVATIONS:
            raise DataError(f"unknown activation {self.activation!r}")

    def to_dict(self) -> dict:
        return {
            "n_conv_layers": self.n_conv_layers,
            "conv_channels": list(self.conv_channels),
            "blstm_units": self.blstm_units,
            "fc_sizes": list(self.fc_sizes),
            "input_bins": self.input_bins,
            "dropout": self.dropout,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MosPredictorConfig":
        return cls(
            n_conv_layers=int(data["n_conv_layers"]),
            conv_channels=tuple(data["conv_channels"]),
            blstm_units=int(data["blstm_units"]),
            fc_sizes=tuple(data["fc_sizes"]),
            input_bins=int(data["input_bins"]),
            dropout=float(data["dropout"]),
            activation=data.get("activation", "relu"),
        )


def _length_mask(lengths: torch.Tensor, max_len: int) -> torch.Tensor:
    """(B, T) bool mask of valid frames."""
    return torch.arange(max_len, device=lengths.device)[None, :] < lengths[:, None]


class MosPredictor(nn.Module):
    """Differentiable MOS regressor over batches of padded log-mel matrices."""

    def __init__(self, config: MosPredictorConfig | None = None):
        super().__init__()
        self.config = config or MosPredictorConfig()
        act = _ACTIVATIONS[self.config.activation]

        layers_per_block = self.config.n_conv_layers // len(self.config.conv_channels)
        convs = []
        in_ch = 1
        freq = self.config.input_bins
        for out_ch in self.config.conv_channels:
            for layer in range(layers_per_block):
                last = layer == layers_per_block - 1
                stride = (1, 3) if last else (1, 1)
                convs.append(nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=stride, padding=1))
                in_ch = out_ch
                if last:
                    freq = (freq + 2 - 3) // 3 + 1
        self.convs = nn.ModuleList(convs)
        self.conv_act = act()
        self.conv_dropout = nn.Dropout(self.config.dropout)

        feature_dim = self.config.conv_channels[-1] * freq
        self.blstm = nn.LSTM(
            input_size=feature_dim,
            hidden_size=self.config.blstm_units,
            batch_first=True,
            bidirectional=True,
        )
        self.fc1 = nn.Linear(2 * self.config.blstm_units, self.config.fc_sizes[0])
        self.fc_act = act()
        self.fc_dropout = nn.Dropout(self.config.dropout)
        self.fc2 = nn.Linear(self.config.fc_sizes[0], self.config.fc_sizes[1])
        self.frozen = False
        self._init_parameters()

    def _init_parameters(self):
        # depth-friendly init: torch's conv default attenuates badly over 12 layers
        for conv in self.convs:
            if self.config.activation == "relu":
                nn.init.kaiming_normal_(conv.weight, nonlinearity="relu")
            else:
                nn.init.xavier_uniform_(conv.weight)
            nn.init.zeros_(conv.bias)
        for fc in (self.fc1, self.fc2):
            nn.init.xavier_uniform_(fc.weight)
            nn.init.zeros_(fc.bias)
        # start utterance scores mid-scale instead of at zero
        nn.init.constant_(self.fc2.bias, 3.0)

    def forward(self, mels: torch.Tensor, lengths: torch.Tensor | None = None):
        """Score a padded batch.

        Args:
            mels: (B, T, 80) float tensor.
            lengths: (B,) valid frame counts; defaults to full length.

        Returns:
            (frame_scores, utterance_scores): (B, T) and (B,). Frame scores
            at padded positions are zeroed; utterance scores average over
            the true lengths only.
        """
        if mels.dim() != 3 or mels.size(-1) != self.config.input_bins:
            raise DataError(f"expected (B, T, {self.config.input_bins}) input, got {tuple(mels.shape)}")
        batch, max_len, _ = mels.shape
        if lengths is None:
            lengths = torch.full((batch,), max_len, dtype=torch.long, device=mels.device)
        mask = _length_mask(lengths, max_len)
        conv_mask = mask[:, None, :, None].to(mels.dtype)

        x = mels.unsqueeze(1) * conv_mask
        for conv in self.convs:
            # re-zero padded frames so batch padding never leaks into valid ones
            x = self.conv_act(conv(x)) * conv_mask
        x = self.conv_dropout(x)

        x = x.permute(0, 2, 1, 3).reshape(batch, max_len, -1)
        packed = pack_padded_sequence(
            x, lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        out, _ = self.blstm(packed)
        out, _ = pad_packed_sequence(out, batch_first=True, total_length=max_len)

        h = self.fc_dropout(self.fc_act(self.fc1(out)))
        frame_scores = self.fc2(h).squeeze(-1) * mask.to(mels.dtype)
        utterance_scores = frame_scores.sum(dim=1) / lengths.to(mels.dtype)
        return frame_scores, utterance_scores

    def freeze(self) -> "MosPredictor":
        """Make the predictor a pure scorer: eval mode, no grads into parameters."""
        for param in self.parameters():
            param.requires_grad_(False)
        self.eval()
        self.frozen = True
        return self

    def parameter_checksum(self) -> float:
        with torch.no_grad():
            return float(sum(p.double().abs().sum() for p in self.parameters()))


def mos_forward(model: MosPredictor, mel: MelSpectrogram):
    """Score a single utterance; returns (frame_scores ndarray, utterance_score)."""
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            mels = torch.from_numpy(np.ascontiguousarray(mel.frames, dtype=np.float32))[None]
            frame_scores, utt = model(mels)
    finally:
        if was_training:
            model.train()
    return frame_scores[0].numpy(), float(utt[0])


def score_batch(model: MosPredictor, mels: list[MelSpectrogram], batch_size: int = 16):
    """Utterance scores for a list of mels, batched with padding masks."""
    scores = []
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            for start in range(0, len(mels), batch_size):
                chunk = mels[start : start + batch_size]
                lengths = torch.tensor([m.n_frames for m in chunk], dtype=torch.long)
                padded = torch.zeros(len(chunk), int(lengths.max()), N_MELS)
                for i, m in enumerate(chunk):
                    padded[i, : m.n_frames] = torch.from_numpy(m.frames)
                _, utt = model(padded, lengths)
                scores.extend(float(u) for u in utt)
    finally:
        if was_training:
            model.train()
    return np.asarray(scores)


def save_mos_predictor(directory, model: MosPredictor, extra: dict | None = None):
    return save_checkpoint(
        directory, MOSNET_MAGIC, model.state_dict(), model.config.to_dict(), extra
    )


def load_mos_predictor(directory, frozen: bool = False) -> MosPredictor:
    state_dict, meta = load_checkpoint(directory, MOSNET_MAGIC)
    model = MosPredictor(MosPredictorConfig.from_dict(meta["config"]))
    model.load_state_dict(state_dict)
    if frozen:
        model.freeze()
    return model
