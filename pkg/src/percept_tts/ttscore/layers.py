"""Building blocks shared by the two TTS model families."""

import math

import torch
import torch.nn as nn

_ACTIVATIONS = {"relu": nn.ReLU, "tanh": nn.Tanh}

NEG_INF = -1e9


def activation_module(name: str) -> nn.Module:
    return _ACTIVATIONS[name]()


def pad_mask(lengths: torch.Tensor, max_len: int) -> torch.Tensor:
    """(B, L) bool, True on valid positions."""
    return torch.arange(max_len, device=lengths.device)[None, :] < lengths[:, None]


def causal_mask(size: int, device=None) -> torch.Tensor:
    """(L, L) bool, True where query may attend (lower triangle)."""
    return torch.tril(torch.ones(size, size, dtype=torch.bool, device=device))


class ScaledPositionalEncoding(nn.Module):
    """Sinusoidal positions added through a learnable scalar gain."""

    def __init__(self, d_model: int, max_len: int = 4096):
        super().__init__()
        position = torch.arange(max_len, dtype=torch.float32)[:, None]
        div = torch.exp(
            torch.arange(0, d_model, 2, dtype=torch.float32) * (-math.log(10000.0) / d_model)
        )
        table = torch.zeros(max_len, d_model)
        table[:, 0::2] = torch.sin(position * div)
        table[:, 1::2] = torch.cos(position * div)
        self.register_buffer("table", table, persistent=False)
        self.alpha = nn.Parameter(torch.ones(1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.alpha * self.table[: x.size(1)].to(x.dtype)


class MultiHeadAttention(nn.Module):
    """Scaled dot-product attention that always reports its weights."""

    def __init__(self, d_model: int, n_heads: int, dropout: float = 0.0):
        super().__init__()
        if d_model % n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, query, key, value, mask=None):
        """mask: bool broadcastable to (B, H, Lq, Lk), True = may attend.

        Returns (output (B, Lq, D), weights (B, H, Lq, Lk)).
        """
        batch, lq, _ = query.shape
        lk = key.size(1)

        def split(x, proj):
            return proj(x).view(batch, -1, self.n_heads, self.d_head).transpose(1, 2)

        q = split(query, self.q_proj)
        k = split(key, self.k_proj)
        v = split(value, self.v_proj)

        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        if mask is not None:
            scores = scores.masked_fill(~mask, NEG_INF)
        weights = torch.softmax(scores, dim=-1)
        out = self.dropout(weights) @ v
        out = out.transpose(1, 2).reshape(batch, lq, -1)
        return self.out_proj(out), weights


class PositionwiseFeedForward(nn.Module):
    def __init__(self, d_model: int, hidden: int, dropout: float, activation: str):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(d_model, hidden),
            activation_module(activation),
            nn.Dropout(dropout),
            nn.Linear(hidden, d_model),
        )

    def forward(self, x):
        return self.net(x)


class ConvFeedForward(nn.Module):
    """Conv1d position-wise block used inside the feed-forward TTS stacks."""

    def __init__(self, d_model: int, hidden: int, kernel: int, dropout: float, activation: str):
        super().__init__()
        self.conv1 = nn.Conv1d(d_model, hidden, kernel, padding=kernel // 2)
        self.conv2 = nn.Conv1d(hidden, d_model, kernel, padding=kernel // 2)
        self.act = activation_module(activation)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, valid: torch.Tensor):
        # valid: (B, L) bool; conv kernels must not read padded frames
        gate = valid[:, None, :].to(x.dtype)
        h = x.transpose(1, 2) * gate
        h = self.dropout(self.act(self.conv1(h))) * gate
        h = self.conv2(h) * gate
        return h.transpose(1, 2)


class TransformerEncoderLayer(nn.Module):
    def __init__(self, d_model, n_heads, ffn_hidden, dropout, activation):
        super().__init__()
        self.self_attn = MultiHeadAttention(d_model, n_heads, dropout)
        self.ffn = PositionwiseFeedForward(d_model, ffn_hidden, dropout, activation)
        self.norm1 = nn.LayerNorm(d_model)
        self.norm2 = nn.LayerNorm(d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, mask):
        attn_out, _ = self.self_attn(x, x, x, mask)
        x = self.norm1(x + self.dropout(attn_out))
        x = self.norm2(x + self.dropout(self.ffn(x)))
        return x


class TransformerDecoderLayer(nn.Module):
    def __init__(self, d_model, n_heads, ffn_hidden, dropout, activation):
        super().__init__()
        self.self_attn = MultiHeadAttention(d_model, n_heads, dropout)
        self.cross_attn = MultiHeadAttention(d_model, n_heads, dropout)
        self.ffn = PositionwiseFeedForward(d_model, ffn_hidden, dropout, activation)
        self.norm1 = nn.LayerNorm(d_model)
        self.norm2 = nn.LayerNorm(d_model)
        self.norm3 = nn.LayerNorm(d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, memory, self_mask, cross_mask):
        attn_out, _ = self.self_attn(x, x, x, self_mask)
        x = self.norm1(x + self.dropout(attn_out))
        cross_out, cross_weights = self.cross_attn(x, memory, memory, cross_mask)
        x = self.norm2(x + self.dropout(cross_out))
        x = self.norm3(x + self.dropout(self.ffn(x)))
        return x, cross_weights


class FFTBlock(nn.Module):
    """Self-attention plus convolutional feed-forward, as in feed-forward TTS."""

    def __init__(self, d_model, n_heads, conv_hidden, conv_kernel, dropout, activation):
        super().__init__()
        self.self_attn = MultiHeadAttention(d_model, n_heads, dropout)
        self.ffn = ConvFeedForward(d_model, conv_hidden, conv_kernel, dropout, activation)
        self.norm1 = nn.LayerNorm(d_model)
        self.norm2 = nn.LayerNorm(d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, valid: torch.Tensor):
        mask = valid[:, None, None, :]
        attn_out, _ = self.self_attn(x, x, x, mask)
        x = self.norm1(x + self.dropout(attn_out))
        x = self.norm2(x + self.dropout(self.ffn(x, valid)))
        return x


class DecoderPrenet(nn.Module):
    """Two FC layers squeezing mel frames into the decoder width."""

    def __init__(self, n_mels, hidden, d_model, dropout, activation):
        super().__init__()
        self.fc1 = nn.Linear(n_mels, hidden)
        self.fc2 = nn.Linear(hidden, hidden)
        self.out = nn.Linear(hidden, d_model)
        self.act = activation_module(activation)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        x = self.dropout(self.act(self.fc1(x)))
        x = self.dropout(self.act(self.fc2(x)))
        return self.out(x)


class Postnet(nn.Module):
    """Convolutional residual refiner over the predicted mel."""

    def __init__(self, n_mels, channels, n_layers, kernel, dropout):
        super().__init__()
        convs = []
        for i in range(n_layers):
            in_ch = n_mels if i == 0 else channels
            out_ch = n_mels if i == n_layers - 1 else channels
            convs.append(nn.Conv1d(in_ch, out_ch, kernel, padding=kernel // 2))
        self.convs = nn.ModuleList(convs)
        self.dropout = nn.Dropout(dropout)

    def forward(self, mel, valid: torch.Tensor):
        """mel: (B, T, n_mels); valid: (B, T) bool. Returns the residual."""
        gate = valid[:, None, :].to(mel.dtype)
        x = mel.transpose(1, 2) * gate
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < len(self.convs) - 1:
                x = self.dropout(torch.tanh(x))
            x = x * gate
        return x.transpose(1, 2)


def init_transformer_params(module: nn.Module):
    """Xavier init for projection weights; keeps deep stacks well-scaled."""
    for m in module.modules():
        if isinstance(m, nn.Linear):
            nn.init.xavier_uniform_(m.weight)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.Conv1d):
            nn.init.xavier_uniform_(m.weight)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.Embedding):
            nn.init.normal_(m.weight, mean=0.0, std=0.3)
