"""Log-mel spectrogram extraction and the per-utterance binary cache format."""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import get_window

from percept_tts.errors import DataError

N_MELS = 80

CACHE_HEADER = struct.Struct("<IIfI")  # T, n_mels, sample_rate, hop_length


@dataclass(frozen=True)
class MelConfig:
    """Mel analysis parameters.

    Defaults target 22.05 kHz speech with 80 bins spanning 80 Hz - 7.6 kHz
    and natural-log amplitude compression. ``center=False`` means no
    padding: T = 1 + floor((len - win_length) / hop_length).
    """

    sample_rate: int = 22050
    n_fft: int = 1024
    hop_length: int = 256
    win_length: int = 1024
    n_mels: int = N_MELS
    fmin: float = 80.0
    fmax: float = 7600.0
    log_floor: float = 1e-10
    center: bool = False

    def __post_init__(self):
        if self.n_mels != N_MELS:
            raise DataError(f"n_mels must be {N_MELS}, got {self.n_mels}")
        if self.win_length > self.n_fft:
            raise DataError("win_length must not exceed n_fft")
        if not 0 < self.fmin < self.fmax <= self.sample_rate / 2:
            raise DataError("need 0 < fmin < fmax <= sample_rate / 2")


@dataclass
class MelSpectrogram:
    """T x 80 log-mel amplitude matrix plus the timing metadata."""

    frames: np.ndarray  # (T, 80) float32
    sample_rate: float
    hop_length: int

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2 or self.frames.shape[1] != N_MELS:
            raise DataError(f"mel frames must be (T, {N_MELS}), got {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise DataError("mel must contain at least one frame")
        if not np.all(np.isfinite(self.frames)):
            raise DataError("mel contains non-finite values")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def hz_to_mel(freq):
    """HTK-style mel scale."""
    return 2595.0 * np.log10(1.0 + np.asarray(freq, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(config: MelConfig) -> np.ndarray:
    """Center frequency (Hz) of each triangular mel filter."""
    mel_points = np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax), config.n_mels + 2)
    return mel_to_hz(mel_points)[1:-1]


def mel_filterbank(config: MelConfig) -> np.ndarray:
    """Triangular mel filterbank, shape (n_mels, n_fft // 2 + 1), peak gain 1."""
    n_bins = config.n_fft // 2 + 1
    fft_freqs = np.linspace(0.0, config.sample_rate / 2.0, n_bins)
    mel_points = np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax), config.n_mels + 2)
    hz_points = mel_to_hz(mel_points)

    fb = np.zeros((config.n_mels, n_bins), dtype=np.float64)
    for m in range(config.n_mels):
        left, center, right = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        up = (fft_freqs - left) / (center - left)
        down = (right - fft_freqs) / (right - center)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def extract_mel(waveform: np.ndarray, config: MelConfig) -> MelSpectrogram:
    """Compute the log-mel spectrogram of a mono waveform.

    Args:
        waveform: 1-D float array; values are treated as linear amplitude.
        config: Analysis parameters; the waveform is assumed to be sampled
            at ``config.sample_rate``.

    Returns:
        MelSpectrogram with T = 1 + floor((len - win_length) / hop_length)
        frames (len counts the padded signal when ``config.center``).

    Raises:
        DataError: If the waveform is shorter than one analysis window.
    """
    x = np.asarray(waveform, dtype=np.float64).reshape(-1)
    if config.center:
        pad = config.n_fft // 2
        x = np.pad(x, pad, mode="reflect" if x.size > pad else "constant")
    if x.size < config.win_length:
        raise DataError(
            f"waveform of {x.size} samples is shorter than one analysis window "
            f"({config.win_length} samples)"
        )

    n_frames = 1 + (x.size - config.win_length) // config.hop_length
    window = get_window("hann", config.win_length, fftbins=True)
    idx = (
        np.arange(config.win_length)[None, :]
        + config.hop_length * np.arange(n_frames)[:, None]
    )
    frames = x[idx] * window[None, :]
    magnitude = np.abs(np.fft.rfft(frames, n=config.n_fft, axis=1))

    mel = magnitude @ mel_filterbank(config).T
    log_mel = np.log(np.maximum(mel, config.log_floor))
    return MelSpectrogram(
        frames=log_mel.astype(np.float32),
        sample_rate=float(config.sample_rate),
        hop_length=config.hop_length,
    )


def write_mel_cache(path, mel: MelSpectrogram) -> None:
    """Write a mel to the little-endian binary cache format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = CACHE_HEADER.pack(mel.n_frames, N_MELS, float(mel.sample_rate), mel.hop_length)
    body = np.ascontiguousarray(mel.frames, dtype="<f4").tobytes()
    path.write_bytes(header + body)


def read_mel_cache(path) -> MelSpectrogram:
    raw = Path(path).read_bytes()
    if len(raw) < CACHE_HEADER.size:
        raise DataError(f"mel cache {path} is truncated")
    n_frames, n_mels, sample_rate, hop = CACHE_HEADER.unpack_from(raw)
    if n_mels != N_MELS:
        raise DataError(f"mel cache {path} has {n_mels} bins, expected {N_MELS}")
    expected = CACHE_HEADER.size + 4 * n_frames * n_mels
    if len(raw) != expected:
        raise DataError(f"mel cache {path} has {len(raw)} bytes, expected {expected}")
    frames = np.frombuffer(raw, dtype="<f4", offset=CACHE_HEADER.size).reshape(n_frames, n_mels)
    return MelSpectrogram(frames=frames.copy(), sample_rate=sample_rate, hop_length=hop)


def griffin_lim(mel: MelSpectrogram, config: MelConfig, n_iters: int = 32) -> np.ndarray:
    """Classical phase-reconstruction synthesis from a log-mel matrix.

    Plumbing for listening to desk-scale outputs only; quality is what a
    pseudo-inverse filterbank plus iterative phase estimation gives.
    """
    fb = mel_filterbank(config)
    mel_amp = np.exp(mel.frames.astype(np.float64))
    magnitude = np.maximum(mel_amp @ np.linalg.pinv(fb).T, 0.0)  # (T, n_bins)

    window = get_window("hann", config.win_length, fftbins=True)
    n_frames = magnitude.shape[0]
    length = config.win_length + config.hop_length * (n_frames - 1)

    rng = np.random.default_rng(0)
    angles = np.exp(2j * np.pi * rng.random(magnitude.shape))
    for _ in range(n_iters):
        stft = magnitude * angles
        x = _istft(stft, window, config, length)
        rebuilt = _stft(x, window, config, n_frames)
        angles = rebuilt / np.maximum(np.abs(rebuilt), 1e-12)
    x = _istft(magnitude * angles, window, config, length)
    peak = np.max(np.abs(x))
    return (x / peak * 0.95).astype(np.float32) if peak > 0 else x.astype(np.float32)


def _stft(x, window, config, n_frames):
    idx = np.arange(config.win_length)[None, :] + config.hop_length * np.arange(n_frames)[:, None]
    return np.fft.rfft(x[idx] * window[None, :], n=config.n_fft, axis=1)


def _istft(stft, window, config, length):
    frames = np.fft.irfft(stft, n=config.n_fft, axis=1)[:, : config.win_length]
    x = np.zeros(length)
    norm = np.zeros(length)
    for t in range(frames.shape[0]):
        start = t * config.hop_length
        x[start : start + config.win_length] += frames[t] * window
        norm[start : start + config.win_length] += window**2
    return x / np.maximum(norm, 1e-8)
