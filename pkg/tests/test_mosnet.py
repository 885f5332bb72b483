import numpy as np
import pytest
import torch

from percept_tts.dataio.dataset import RatedUtterance, UtteranceOrigin
from percept_tts.dataio.mel import MelSpectrogram
from percept_tts.errors import DataError
from percept_tts.mosnet.metrics import compute_mos_metrics, eval_mos_predictor
from percept_tts.mosnet.model import (
    MosPredictor,
    MosPredictorConfig,
    load_mos_predictor,
    mos_forward,
    save_mos_predictor,
)
from percept_tts.mosnet.train import MosTrainConfig, train_mos

from conftest import random_mel
from oracles import mse_def, pearson_def, spearman_def


def smooth_mel_frames(rng, n_frames, bumps=3):
    t = np.linspace(0, 1, n_frames)[:, None]
    f = np.linspace(0, 1, 80)[None, :]
    m = np.zeros((n_frames, 80))
    for _ in range(bumps):
        tc, fc = rng.uniform(0, 1, 2)
        tw, fw = rng.uniform(0.08, 0.3, 2)
        m += rng.uniform(0.5, 2.0) * np.exp(-((t - tc) ** 2) / (2 * tw**2)) * np.exp(
            -((f - fc) ** 2) / (2 * fw**2)
        )
    return (m - 1.0).astype(np.float32)


def rated(rng, utt_id, mos, n_frames=16):
    mel = MelSpectrogram(smooth_mel_frames(rng, n_frames), 22050.0, 256)
    return RatedUtterance(utt_id, mel, mos, UtteranceOrigin.MOS_CORPUS)


@pytest.fixture
def small_model():
    torch.manual_seed(0)
    return MosPredictor(MosPredictorConfig(dropout=0.0))


class TestForward:
    def test_frame_scores_preserve_time_length(self, small_model, rng):
        for n_frames in (1, 5, 33):
            mel = random_mel(rng, n_frames)
            frame_scores, _ = mos_forward(small_model, mel)
            assert frame_scores.shape == (n_frames,)

    def test_single_frame_utterance_equals_frame_score(self, small_model, rng):
        frame_scores, utt = mos_forward(small_model, random_mel(rng, 1))
        assert utt == pytest.approx(float(frame_scores[0]), abs=1e-6)

    def test_pooling_is_exact_mean(self, small_model, rng):
        frame_scores, utt = mos_forward(small_model, random_mel(rng, 23))
        assert utt == pytest.approx(float(np.mean(frame_scores)), rel=1e-6)

    def test_batched_vs_separate_scores_identical(self, small_model, rng):
        small_model.eval()
        mels = [random_mel(rng, n) for n in (7, 19, 12)]
        singles = [mos_forward(small_model, m)[1] for m in mels]
        lengths = torch.tensor([m.n_frames for m in mels])
        padded = torch.zeros(3, 19, 80)
        for i, m in enumerate(mels):
            padded[i, : m.n_frames] = torch.from_numpy(m.frames)
        with torch.no_grad():
            _, batched = small_model(padded, lengths)
        for got, single in zip(batched.tolist(), singles):
            assert got == pytest.approx(single, abs=1e-5)

    def test_wrong_bin_count_raises(self, small_model):
        with pytest.raises(DataError):
            small_model(torch.zeros(1, 4, 79))

    def test_eval_mode_deterministic(self, small_model, rng):
        mel = random_mel(rng, 9)
        assert mos_forward(small_model, mel)[1] == mos_forward(small_model, mel)[1]


class TestGradients:
    @pytest.mark.parametrize("activation", ["tanh", "relu"])
    def test_input_cell_gradient_matches_central_differences(self, activation):
        torch.manual_seed(3)
        model = MosPredictor(MosPredictorConfig(dropout=0.0, activation=activation)).double()
        model.eval()
        rng = np.random.default_rng(11)
        base = smooth_mel_frames(rng, 6).astype(np.float64)

        x = torch.tensor(base, dtype=torch.float64, requires_grad=True)
        _, utt = model(x[None])
        utt[0].backward()
        analytic = x.grad.numpy()

        h = 1e-4
        cells = [(int(t), int(f)) for t, f in zip(rng.integers(0, 6, 12), rng.integers(0, 80, 12))]
        for t, f in cells:
            plus = base.copy()
            minus = base.copy()
            plus[t, f] += h
            minus[t, f] -= h
            with torch.no_grad():
                up = model(torch.tensor(plus, dtype=torch.float64)[None])[1].item()
                down = model(torch.tensor(minus, dtype=torch.float64)[None])[1].item()
            fd = (up - down) / (2 * h)
            denom = max(abs(fd), abs(analytic[t, f]), 1e-8)
            assert abs(fd - analytic[t, f]) / denom < 1e-3


class TestFreezing:
    def test_scoring_never_changes_frozen_parameters(self, small_model, rng):
        small_model.freeze()
        checksum = small_model.parameter_checksum()
        mels = [random_mel(rng, 10) for _ in range(4)]
        for _ in range(5):
            padded = torch.stack([torch.from_numpy(m.frames) for m in mels])
            _, utt = small_model(padded)
            # downstream consumers backprop through the scores into their own params
            proxy = torch.nn.Parameter(torch.zeros(()))
            loss = ((utt + proxy) ** 2).mean()
            loss.backward()
        assert small_model.parameter_checksum() == checksum
        assert all(not p.requires_grad for p in small_model.parameters())


class TestTraining:
    def test_empty_dataset_rejected(self, small_model):
        with pytest.raises(DataError):
            train_mos(small_model, [])

    def test_single_point_converges_to_five(self, rng):
        torch.manual_seed(1)
        model = MosPredictor(MosPredictorConfig(dropout=0.0))
        data = [rated(rng, "only", 5.0)]
        hyper = MosTrainConfig(epochs=60, batch_size=1, learning_rate=1e-3, seed=0)
        model, history = train_mos(model, data, hyper)
        _, utt = mos_forward(model, data[0].mel)
        assert abs(utt - 5.0) < 0.2
        assert history[-1]["train_utt_mse"] < history[0]["train_utt_mse"]

    def test_overfit_one_sample_lands_in_band(self, rng):
        # overfit procedure as its own oracle: one sample labeled 4.2
        torch.manual_seed(6)
        model = MosPredictor(MosPredictorConfig(dropout=0.0))
        data = [rated(rng, "only", 4.2)]
        hyper = MosTrainConfig(epochs=80, batch_size=1, learning_rate=1e-3, seed=0)
        model, _ = train_mos(model, data, hyper)
        _, utt = mos_forward(model, data[0].mel)
        assert 4.1 <= utt <= 4.3

    def test_overfit_small_set(self, rng):
        torch.manual_seed(2)
        model = MosPredictor(MosPredictorConfig(dropout=0.0))
        data = [rated(rng, f"u{i}", float(rng.uniform(1, 5))) for i in range(10)]
        hyper = MosTrainConfig(epochs=120, batch_size=10, learning_rate=1e-3, seed=0)
        model, history = train_mos(model, data, hyper)
        assert min(h["train_utt_mse"] for h in history) < 0.05

    def test_early_stopping_restores_best(self, rng):
        torch.manual_seed(4)
        model = MosPredictor(MosPredictorConfig(dropout=0.0))
        train = [rated(rng, f"t{i}", float(rng.uniform(1, 5))) for i in range(6)]
        val = [rated(rng, f"v{i}", float(rng.uniform(1, 5))) for i in range(3)]
        hyper = MosTrainConfig(epochs=40, batch_size=6, learning_rate=2e-3, seed=0, patience=3)
        model, history = train_mos(model, train, hyper, val_set=val)
        assert all("val_utt_mse" in h for h in history)
        assert len(history) <= 40


class TestMetrics:
    def test_perfect_predictor(self):
        metrics = compute_mos_metrics([1.0, 2.0, 3.5, 4.0], [1.0, 2.0, 3.5, 4.0])
        assert metrics.lcc == pytest.approx(1.0)
        assert metrics.srcc == pytest.approx(1.0)
        assert metrics.mse == 0.0

    def test_reversed_ranking(self):
        labels = [1.0, 2.0, 3.0, 4.0]
        metrics = compute_mos_metrics([4.0, 3.0, 2.0, 1.0], labels)
        assert metrics.srcc == pytest.approx(-1.0)

    def test_matches_from_definition_oracles(self, rng):
        for _ in range(20):
            preds = rng.uniform(1, 5, size=50)
            labels = rng.uniform(1, 5, size=50)
            metrics = compute_mos_metrics(preds, labels)
            assert metrics.lcc == pytest.approx(pearson_def(preds, labels), abs=1e-9)
            assert metrics.srcc == pytest.approx(spearman_def(preds, labels), abs=1e-9)
            assert metrics.mse == pytest.approx(mse_def(preds, labels), abs=1e-9)

    def test_zero_variance_reported_undefined(self):
        metrics = compute_mos_metrics([3.0, 3.0, 3.0], [1.0, 2.0, 3.0])
        assert metrics.lcc is None
        assert metrics.srcc is None
        assert metrics.mse > 0

    def test_rank_invariance_under_monotone_transform(self, rng):
        preds = rng.uniform(1, 5, size=30)
        labels = rng.uniform(1, 5, size=30)
        base = compute_mos_metrics(preds, labels).srcc
        warped = compute_mos_metrics(np.exp(preds), labels**3 + 2 * labels)
        assert warped.srcc == pytest.approx(base, abs=1e-12)

    def test_eval_mos_predictor_end_to_end(self, small_model, rng):
        testset = [rated(rng, f"u{i}", float(rng.uniform(1, 5))) for i in range(5)]
        metrics = eval_mos_predictor(small_model, testset)
        assert metrics.mse >= 0
        assert metrics.lcc is None or -1.0 <= metrics.lcc <= 1.0


class TestCheckpoint:
    def test_roundtrip_preserves_scores(self, small_model, tmp_path, rng):
        mel = random_mel(rng, 14)
        before = mos_forward(small_model, mel)[1]
        save_mos_predictor(tmp_path / "ckpt", small_model, extra={"epoch": 3})
        loaded = load_mos_predictor(tmp_path / "ckpt")
        assert mos_forward(loaded, mel)[1] == pytest.approx(before, abs=1e-7)

    def test_frozen_load(self, small_model, tmp_path):
        save_mos_predictor(tmp_path / "ckpt", small_model)
        loaded = load_mos_predictor(tmp_path / "ckpt", frozen=True)
        assert loaded.frozen
        assert all(not p.requires_grad for p in loaded.parameters())

    def test_magic_mismatch_rejected(self, small_model, tmp_path):
        from percept_tts.checkpoint import load_checkpoint

        save_mos_predictor(tmp_path / "ckpt", small_model)
        with pytest.raises(DataError):
            load_checkpoint(tmp_path / "ckpt", "TTSCORE1")
