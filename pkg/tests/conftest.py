import numpy as np
import pytest

from percept_tts.dataio.manifest import write_wav
from percept_tts.dataio.mel import MelConfig, MelSpectrogram

ACCEPTANCE_RESULTS = {}


@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call":
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            number, title = marker.args
            ACCEPTANCE_RESULTS[number] = (title, report.passed)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, passed = ACCEPTANCE_RESULTS[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_mel_config():
    # small windows keep fixture waveforms short
    return MelConfig(
        sample_rate=8000, n_fft=256, hop_length=64, win_length=256, fmin=60.0, fmax=3800.0
    )


def random_mel(rng, n_frames, sample_rate=22050.0, hop=256, loc=-4.0, scale=1.5):
    frames = rng.normal(loc, scale, size=(n_frames, 80)).astype(np.float32)
    return MelSpectrogram(frames=frames, sample_rate=sample_rate, hop_length=hop)


def build_wav_corpus(root, n_utts, sample_rate=8000, seconds=0.25, seed=0, prefix="utt"):
    """Write n synthetic WAVs plus a manifest file; returns the manifest path."""
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    texts = ["ba da go", "di ga bu do", "go ba bu", "da di do ga", "bu go da"]
    for i in range(n_utts):
        utt_id = f"{prefix}{i:03d}"
        n = int(sample_rate * seconds)
        t = np.arange(n) / sample_rate
        freq = 200.0 + 60.0 * (i % 7)
        wave = 0.4 * np.sin(2 * np.pi * freq * t) + 0.02 * rng.normal(size=n)
        path = root / f"{utt_id}.wav"
        write_wav(path, wave, sample_rate)
        lines.append(f"{utt_id}\t{path}\t{texts[i % len(texts)]}")
    manifest_path = root / "manifest.tsv"
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest_path
