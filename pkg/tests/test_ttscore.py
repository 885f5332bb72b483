import math

import numpy as np
import pytest
import torch

from percept_tts.dataio.mel import MelSpectrogram
from percept_tts.errors import DataError
from percept_tts.perceptual.train import TtsTrainConfig, collate, conventional_forward
from percept_tts.ttscore.distill import (
    distill_targets,
    durations_from_alignment,
    load_distilled_targets,
    save_distilled_targets,
)
from percept_tts.ttscore.fastspeech import FastSpeech, FastSpeechConfig, LengthRegulator
from percept_tts.ttscore.losses import (
    AttentionAlignment,
    TtsTarget,
    batched_guided_attention,
    fastspeech_conventional_loss,
    guided_attention_loss,
    make_stop_labels,
    masked_mel_l2,
    transformer_conventional_loss,
)
from percept_tts.ttscore.synthesize import synthesize
from percept_tts.ttscore.text import build_vocab, encode_text
from percept_tts.ttscore.transformer import (
    TransformerOutputs,
    TransformerTts,
    TransformerTtsConfig,
    load_transformer_tts,
    save_transformer_tts,
)

from gradcheck import sampled_fd_gradcheck

VOCAB = build_vocab(["abcdefgh "])


def small_transformer(seed=0, **overrides):
    torch.manual_seed(seed)
    cfg = TransformerTtsConfig(
        vocab_size=len(VOCAB),
        d_model=32,
        n_heads=2,
        encoder_layers=2,
        decoder_layers=2,
        ffn_hidden=64,
        prenet_hidden=32,
        postnet_layers=2,
        postnet_channels=32,
        dropout=0.0,
        **overrides,
    )
    return TransformerTts(cfg)


def small_fastspeech(seed=0, **overrides):
    torch.manual_seed(seed)
    cfg = FastSpeechConfig(
        vocab_size=len(VOCAB),
        d_model=32,
        n_heads=2,
        encoder_layers=1,
        decoder_layers=1,
        conv_hidden=64,
        duration_hidden=32,
        postnet_layers=2,
        postnet_channels=32,
        dropout=0.0,
        **overrides,
    )
    return FastSpeech(cfg)


def make_pairs(rng, specs, with_durations=False):
    pairs = []
    for i, (text, n_frames) in enumerate(specs):
        seq = encode_text(text, VOCAB)
        if with_durations:
            durations = rng.integers(1, 4, size=seq.length)
            n_frames = int(durations.sum())
        frames = rng.normal(-2.0, 1.0, size=(n_frames, 80)).astype(np.float32)
        mel = MelSpectrogram(frames, 22050.0, 256)
        target = TtsTarget(
            f"u{i}",
            mel,
            make_stop_labels(n_frames),
            durations if with_durations else None,
        )
        pairs.append((seq, target))
    return pairs


class TestTransformerForward:
    def test_output_shape_matches_target(self, rng):
        model = small_transformer()
        batch = collate(make_pairs(rng, [("abc", 9), ("defgh ab", 14)]))
        out = model(batch.text, batch.text_lengths, batch.mel, batch.mel_lengths)
        assert out.mel_pre.shape == batch.mel.shape
        assert out.mel_post.shape == batch.mel.shape
        assert out.stop_logits.shape == batch.mel.shape[:2]

    def test_zeroed_postnet_gives_identity(self, rng):
        model = small_transformer()
        with torch.no_grad():
            for p in model.postnet.parameters():
                p.zero_()
        batch = collate(make_pairs(rng, [("abcd", 7)]))
        model.eval()
        out = model(batch.text, batch.text_lengths, batch.mel, batch.mel_lengths)
        assert torch.equal(out.mel_pre, out.mel_post)

    def test_untrained_outputs_finite(self, rng):
        model = small_transformer()
        batch = collate(make_pairs(rng, [("abc", 6), ("fgh", 11)]))
        out = model(batch.text, batch.text_lengths, batch.mel, batch.mel_lengths)
        for tensor in (out.mel_pre, out.mel_post, out.stop_logits):
            assert torch.all(torch.isfinite(tensor))

    def test_empty_text_rejected(self, rng):
        model = small_transformer()
        with pytest.raises(DataError):
            model(
                torch.zeros(1, 0, dtype=torch.long),
                torch.tensor([0]),
                torch.zeros(1, 4, 80),
                torch.tensor([4]),
            )

    def test_alignment_columns_are_distributions(self, rng):
        model = small_transformer()
        model.eval()
        batch = collate(make_pairs(rng, [("abcde", 8)]))
        out = model(batch.text, batch.text_lengths, batch.mel, batch.mel_lengths)
        att = out.alignments[0][0, 0]  # (T, N)
        assert torch.allclose(att.sum(dim=-1), torch.ones(att.size(0)), atol=1e-5)


class TestPaddingInvariance:
    def test_padded_batch_losses_unchanged(self, rng):
        model = small_transformer()
        model.eval()
        train_cfg = TtsTrainConfig()
        pairs = make_pairs(rng, [("abc", 9), ("defgh ab", 14)])

        losses = []
        for extra_frames in (0, 5):
            batch = collate(pairs)
            if extra_frames:
                batch.mel = torch.cat([batch.mel, torch.zeros(2, extra_frames, 80)], dim=1)
                batch.stop_labels = torch.cat(
                    [batch.stop_labels, torch.zeros(2, extra_frames)], dim=1
                )
            _, l_con, terms = conventional_forward(model, batch, train_cfg)
            losses.append(
                {k: float(v.detach()) for k, v in terms.items()}
                | {"total": float(l_con.detach())}
            )
        for key in losses[0]:
            assert losses[0][key] == pytest.approx(losses[1][key], abs=1e-6)

    def test_singleton_vs_batched_losses(self, rng):
        model = small_transformer()
        model.eval()
        train_cfg = TtsTrainConfig()
        pairs = make_pairs(rng, [("abc", 9), ("defgh ab", 14)])
        _, l_both, _ = conventional_forward(model, collate(pairs), train_cfg)
        l_both = float(l_both.detach())
        singles = []
        for pair in pairs:
            _, l_one, _ = conventional_forward(model, collate([pair]), train_cfg)
            singles.append(float(l_one.detach()))
        # batched l2 pools valid cells, so totals differ; they must stay finite and close in scale
        assert math.isfinite(l_both)
        assert min(singles) < l_both < max(singles) + 1.0


class TestTransformerLoss:
    def _perfect_outputs(self, batch, model):
        n_text = batch.text.size(1)
        n_frames = batch.mel.size(1)
        diagonal = torch.zeros(1, 1, n_frames, n_text)
        for t in range(n_frames):
            diagonal[0, 0, t, min(int(t * n_text / n_frames), n_text - 1)] = 1.0
        stop_logits = torch.where(batch.stop_labels > 0.5, 20.0, -20.0) * (
            batch.mel_lengths[:, None] > torch.arange(n_frames)[None, :]
        )
        return TransformerOutputs(
            mel_pre=batch.mel.clone(),
            mel_post=batch.mel.clone(),
            stop_logits=stop_logits.float(),
            alignments=[diagonal],
            text_lengths=batch.text_lengths,
            mel_lengths=batch.mel_lengths,
        )

    def test_perfect_fit_zeroes_l2_and_bce(self, rng):
        model = small_transformer()
        batch = collate(make_pairs(rng, [("abcd", 4)]))
        outputs = self._perfect_outputs(batch, model)
        total, terms = transformer_conventional_loss(outputs, batch.mel, batch.stop_labels)
        assert float(terms["l2_pre"]) == 0.0
        assert float(terms["l2_post"]) == 0.0
        assert float(terms["stop_bce"]) < 1e-8

    def test_doubling_error_quadruples_l2(self, rng):
        model = small_transformer()
        model.eval()
        batch = collate(make_pairs(rng, [("abc", 9)]))
        out = model(batch.text, batch.text_lengths, batch.mel, batch.mel_lengths)
        base = masked_mel_l2(out.mel_pre, batch.mel, batch.mel_lengths).detach()
        doubled_pred = batch.mel + 2 * (out.mel_pre - batch.mel)
        doubled = masked_mel_l2(doubled_pred, batch.mel, batch.mel_lengths).detach()
        assert float(doubled) == pytest.approx(4 * float(base), rel=1e-5)

    def test_total_matches_naive_recomputation(self, rng):
        model = small_transformer().double()
        model.eval()
        train_cfg = TtsTrainConfig()
        pairs = make_pairs(rng, [("abc", 7), ("defgh", 12)])
        batch = collate(pairs)
        batch.mel = batch.mel.double()
        batch.stop_labels = batch.stop_labels.double()
        with torch.no_grad():
            out = model(batch.text, batch.text_lengths, batch.mel, batch.mel_lengths)
            total, terms = transformer_conventional_loss(
                out, batch.mel, batch.stop_labels, ga_weight=0.7, ga_g=0.25, stop_pos_weight=5.0
            )

        # naive per-element recomputation
        sq_pre = sq_post = 0.0
        n_cells = 0
        bce = 0.0
        n_frames_total = 0
        ga_values = []
        for b in range(2):
            t_len = int(batch.mel_lengths[b])
            n_len = int(batch.text_lengths[b])
            for t in range(t_len):
                for f in range(80):
                    sq_pre += float(out.mel_pre[b, t, f] - batch.mel[b, t, f]) ** 2
                    sq_post += float(out.mel_post[b, t, f] - batch.mel[b, t, f]) ** 2
                    n_cells += 1
                logit = float(out.stop_logits[b, t])
                label = float(batch.stop_labels[b, t])
                log_sig = math.log(1.0 / (1.0 + math.exp(-logit)))
                log_one_minus = math.log(1.0 - 1.0 / (1.0 + math.exp(-logit)))
                bce += -(5.0 * label * log_sig + (1 - label) * log_one_minus)
                n_frames_total += 1
            for layer_att in out.alignments:
                for h in range(layer_att.size(1)):
                    acc = 0.0
                    for t in range(t_len):
                        for n in range(n_len):
                            w = 1.0 - math.exp(
                                -((n / n_len - t / t_len) ** 2) / (2 * 0.25**2)
                            )
                            acc += w * float(layer_att[b, h, t, n])
                    ga_values.append(acc / (t_len * n_len))
        naive = (
            sq_pre / n_cells
            + sq_post / n_cells
            + bce / n_frames_total
            + 0.7 * (sum(ga_values) / len(ga_values))
        )
        assert float(total) == pytest.approx(naive, rel=1e-6)

    def test_total_is_sum_of_breakdown(self, rng):
        model = small_transformer()
        model.eval()
        batch = collate(make_pairs(rng, [("abc", 9)]))
        with torch.no_grad():
            out = model(batch.text, batch.text_lengths, batch.mel, batch.mel_lengths)
            total, terms = transformer_conventional_loss(
                out, batch.mel, batch.stop_labels, ga_weight=2.5
            )
        assert float(total) == pytest.approx(sum(float(v) for v in terms.values()), rel=1e-6)
        assert all(float(v) >= 0 for v in terms.values())


class TestGuidedAttention:
    def test_single_cell_is_zero(self):
        assert guided_attention_loss(AttentionAlignment(np.ones((1, 1))), g=0.2) == 0.0

    def test_exact_diagonal_square_is_zero(self):
        alignment = AttentionAlignment(np.eye(6))
        assert guided_attention_loss(alignment, g=0.2) == pytest.approx(0.0, abs=1e-12)

    def test_uniform_2x2_hand_enumeration(self):
        # cell-by-cell oracle: W00 = W11 = 0, W01 = W10 = 1 - exp(-0.25/0.08)
        alignment = AttentionAlignment(np.full((2, 2), 0.5))
        w_off = 1.0 - math.exp(-0.25 / (2 * 0.2**2))
        expected = (0.0 * 0.5 + w_off * 0.5 + w_off * 0.5 + 0.0 * 0.5) / 4.0
        assert guided_attention_loss(alignment, g=0.2) == pytest.approx(expected, abs=1e-12)

    def test_transpose_invariance_for_square(self, rng):
        # transposing stays column-normalized only for doubly stochastic
        # matrices; Sinkhorn-balance a random one to get a valid case
        raw = rng.random((5, 5)) + 0.05
        for _ in range(200):
            raw /= raw.sum(axis=0, keepdims=True)
            raw /= raw.sum(axis=1, keepdims=True)
        raw /= raw.sum(axis=0, keepdims=True)
        loss = guided_attention_loss(AttentionAlignment(raw), g=0.3)
        loss_t = guided_attention_loss(AttentionAlignment(raw.T), g=0.3)
        assert loss_t == pytest.approx(loss, rel=1e-9)

    def test_weight_matrix_symmetric_under_axis_swap(self):
        from percept_tts.ttscore.losses import guided_attention_weight_matrix

        w = guided_attention_weight_matrix(7, 7, 0.2)
        assert np.allclose(w, w.T)

    def test_nonpositive_g_rejected(self):
        with pytest.raises(DataError):
            guided_attention_loss(AttentionAlignment(np.ones((1, 1))), g=0.0)

    def test_invalid_alignment_rejected(self):
        with pytest.raises(DataError):
            AttentionAlignment(np.full((2, 2), 0.4))

    def test_batched_matches_single(self, rng):
        raw = rng.random((1, 1, 6, 3))
        att = torch.tensor(raw / raw.sum(axis=-1, keepdims=True))
        batched = batched_guided_attention(
            [att], torch.tensor([3]), torch.tensor([6]), g=0.2
        )
        single = guided_attention_loss(
            AttentionAlignment(att[0, 0].numpy().T), g=0.2
        )
        assert float(batched) == pytest.approx(single, rel=1e-9)


class TestFastSpeech:
    def test_unit_durations_give_n_frames(self, rng):
        model = small_fastspeech()
        seq = encode_text("abcde", VOCAB)
        text = torch.from_numpy(seq.token_ids)[None]
        out = model(text, torch.tensor([5]), torch.ones(1, 5, dtype=torch.long))
        assert int(out.mel_lengths[0]) == 5
        assert out.mel_post.shape[1] == 5

    def test_doubling_durations_doubles_frames(self, rng):
        model = small_fastspeech()
        seq = encode_text("abc", VOCAB)
        text = torch.from_numpy(seq.token_ids)[None]
        durations = torch.tensor([[2, 3, 1]])
        out1 = model(text, torch.tensor([3]), durations)
        out2 = model(text, torch.tensor([3]), durations * 2)
        assert int(out2.mel_lengths[0]) == 2 * int(out1.mel_lengths[0])

    def test_untrained_outputs_finite(self, rng):
        model = small_fastspeech()
        batch = collate(make_pairs(rng, [("abc", 0), ("de fg", 0)], with_durations=True))
        out = model(batch.text, batch.text_lengths, batch.durations)
        assert torch.all(torch.isfinite(out.mel_post))
        assert out.duration_pred.shape[:2] == batch.text.shape

    def test_zero_total_duration_rejected(self):
        model = small_fastspeech()
        seq = encode_text("ab", VOCAB)
        text = torch.from_numpy(seq.token_ids)[None]
        with pytest.raises(DataError):
            model(text, torch.tensor([2]), torch.zeros(1, 2, dtype=torch.long))

    def test_length_regulator_expansion_content(self):
        regulator = LengthRegulator()
        x = torch.arange(6, dtype=torch.float32).reshape(1, 3, 2)
        out, lengths = regulator(x, torch.tensor([[2, 0, 1]]))
        assert int(lengths[0]) == 3
        assert torch.equal(out[0, 0], x[0, 0])
        assert torch.equal(out[0, 1], x[0, 0])
        assert torch.equal(out[0, 2], x[0, 2])


class TestFastSpeechLoss:
    def test_missing_durations_rejected(self, rng):
        model = small_fastspeech()
        batch = collate(make_pairs(rng, [("abc", 0)], with_durations=True))
        out = model(batch.text, batch.text_lengths, batch.durations)
        with pytest.raises(DataError):
            fastspeech_conventional_loss(out, batch.mel, None)

    def test_exact_match_mse_log_mode(self, rng):
        model = small_fastspeech(duration_mode="mse_log")
        batch = collate(make_pairs(rng, [("abc", 0)], with_durations=True))
        out = model(batch.text, batch.text_lengths, batch.durations)
        perfect = type(out)(
            mel_pre=batch.mel.clone(),
            mel_post=batch.mel.clone(),
            duration_pred=torch.log1p(batch.durations.float()),
            text_lengths=out.text_lengths,
            mel_lengths=out.mel_lengths,
        )
        total, terms = fastspeech_conventional_loss(
            perfect, batch.mel, batch.durations, mode="mse_log"
        )
        assert float(terms["l2_pre"]) == 0.0
        assert float(terms["l2_post"]) == 0.0
        assert float(terms["duration_loss"]) == pytest.approx(0.0, abs=1e-12)

    def test_peaked_logits_minimize_bucketed_mode(self, rng):
        model = small_fastspeech()
        batch = collate(make_pairs(rng, [("abc", 0)], with_durations=True))
        out = model(batch.text, batch.text_lengths, batch.durations)
        logits = torch.full((1, 3, 51), -30.0)
        for n in range(3):
            logits[0, n, int(batch.durations[0, n])] = 30.0
        peaked = type(out)(
            mel_pre=batch.mel.clone(),
            mel_post=batch.mel.clone(),
            duration_pred=logits,
            text_lengths=out.text_lengths,
            mel_lengths=out.mel_lengths,
        )
        total, terms = fastspeech_conventional_loss(peaked, batch.mel, batch.durations)
        assert float(terms["duration_loss"]) < 1e-8

    def test_total_matches_naive_recomputation(self, rng):
        model = small_fastspeech().double()
        model.eval()
        batch = collate(make_pairs(rng, [("abc", 0), ("de fg", 0)], with_durations=True))
        batch.mel = batch.mel.double()
        with torch.no_grad():
            out = model(batch.text, batch.text_lengths, batch.durations)
            total, terms = fastspeech_conventional_loss(out, batch.mel, batch.durations)

        sq_pre = sq_post = 0.0
        n_cells = 0
        ce = 0.0
        n_tokens = 0
        for b in range(2):
            t_len = int(out.mel_lengths[b])
            for t in range(t_len):
                for f in range(80):
                    sq_pre += float(out.mel_pre[b, t, f] - batch.mel[b, t, f]) ** 2
                    sq_post += float(out.mel_post[b, t, f] - batch.mel[b, t, f]) ** 2
                    n_cells += 1
            for n in range(int(batch.text_lengths[b])):
                logits = out.duration_pred[b, n].detach().numpy().astype(np.float64)
                target = int(batch.durations[b, n])
                log_z = math.log(np.sum(np.exp(logits - logits.max()))) + logits.max()
                ce += -(logits[target] - log_z)
                n_tokens += 1
        naive = sq_pre / n_cells + sq_post / n_cells + ce / n_tokens
        assert float(total) == pytest.approx(naive, rel=1e-6)

    def test_batch_permutation_invariance(self, rng):
        model = small_fastspeech().double()
        model.eval()
        pairs = make_pairs(rng, [("abc", 0), ("de fg", 0), ("h ab", 0)], with_durations=True)
        def total_for(order):
            batch = collate([pairs[i] for i in order])
            batch.mel = batch.mel.double()
            with torch.no_grad():
                out = model(batch.text, batch.text_lengths, batch.durations)
                total, _ = fastspeech_conventional_loss(out, batch.mel, batch.durations)
            return float(total)
        assert total_for([0, 1, 2]) == pytest.approx(total_for([2, 0, 1]), rel=1e-9)


class TestDistillation:
    def test_hand_alignment_matches_brute_force(self):
        weights = np.array(
            [
                [0.7, 0.1, 0.2, 0.3, 0.1],
                [0.2, 0.8, 0.5, 0.3, 0.1],
                [0.1, 0.1, 0.3, 0.4, 0.8],
            ]
        )
        durations = durations_from_alignment(weights)
        # column argmaxes: 0, 1, 1, 2(tie 0.3/0.3/0.4 -> max is 2), 2
        assert durations.tolist() == [1, 2, 2]
        assert durations.sum() == 5

    def test_ties_go_to_earlier_character(self):
        weights = np.array([[0.5, 0.5], [0.5, 0.5]])
        durations = durations_from_alignment(weights)
        assert durations.tolist() == [2, 0]

    def test_conservation_on_random_alignments(self, rng):
        for _ in range(50):
            n, t = int(rng.integers(1, 8)), int(rng.integers(1, 30))
            raw = rng.random((n, t))
            weights = raw / raw.sum(axis=0, keepdims=True)
            durations = durations_from_alignment(weights)
            assert durations.sum() == t
            assert np.all(durations >= 0)
            # brute force count
            counts = np.zeros(n, dtype=int)
            for col in range(t):
                counts[int(np.argmax(weights[:, col]))] += 1
            assert np.array_equal(durations, counts)

    def test_distill_targets_end_to_end(self, rng):
        teacher = small_transformer()
        items = []
        for i, text in enumerate(["abc", "de fg", "h"]):
            seq = encode_text(text, VOCAB)
            frames = rng.normal(-2, 1, size=(int(rng.integers(6, 12)), 80)).astype(np.float32)
            items.append((f"u{i}", seq.token_ids, MelSpectrogram(frames, 22050.0, 256)))
        targets, report = distill_targets(teacher, items)
        assert len(targets) + len(report.excluded) == 3
        for target in targets:
            assert int(target.durations.sum()) == target.mel.n_frames

    def test_degenerate_alignment_excluded(self, rng):
        class CollapsedAttention(torch.nn.Module):
            # every decoder step dumps all mass on character 0
            def forward(self, q, k, v, mask=None):
                b, lq = q.size(0), q.size(1)
                weights = torch.zeros(b, 1, lq, k.size(1))
                weights[:, :, :, 0] = 1.0
                return v.mean(dim=1, keepdim=True).expand(-1, lq, -1), weights

        teacher = small_transformer()
        for layer in teacher.decoder_layers:
            layer.cross_attn = CollapsedAttention()
        seq = encode_text("abc", VOCAB)
        mel = MelSpectrogram(rng.normal(-2, 1, size=(9, 80)).astype(np.float32), 22050.0, 256)
        targets, report = distill_targets(teacher, [("bad", seq.token_ids, mel)])
        assert targets == []
        assert report.excluded == [("bad", "degenerate alignment")]

    def test_sidecar_roundtrip(self, tmp_path, rng):
        teacher = small_transformer()
        seq = encode_text("abc", VOCAB)
        mel = MelSpectrogram(rng.normal(-2, 1, size=(8, 80)).astype(np.float32), 22050.0, 256)
        targets, _ = distill_targets(teacher, [("u0", seq.token_ids, mel)])
        save_distilled_targets(tmp_path / "store", targets)
        loaded = load_distilled_targets(tmp_path / "store")
        assert len(loaded) == len(targets)
        assert np.array_equal(loaded[0].durations, targets[0].durations)
        assert np.allclose(loaded[0].mel.frames, targets[0].mel.frames)

    def test_student_prefers_teacher_targets(self, rng):
        # two-run comparison: training on distilled targets pulls the student
        # toward teacher outputs more than toward the ground truth mels
        teacher = small_transformer(seed=5)
        items = []
        gt_mels = []
        texts = ["abc de", "fgh ab", "cde f"]
        pairs_gt = []
        for i, text in enumerate(texts):
            seq = encode_text(text, VOCAB)
            frames = rng.normal(-2, 1, size=(10, 80)).astype(np.float32)
            mel = MelSpectrogram(frames, 22050.0, 256)
            items.append((f"u{i}", seq.token_ids, mel))
            gt_mels.append(mel)
            pairs_gt.append((seq, TtsTarget(f"u{i}", mel, make_stop_labels(10))))

        # a freshly initialized teacher has degenerate attention; train it a bit
        # (guided attention pulls the alignments diagonal) before distilling
        opt = torch.optim.Adam(teacher.parameters(), lr=2e-3)
        teacher_batch = collate(pairs_gt)
        for _ in range(150):
            out = teacher(
                teacher_batch.text,
                teacher_batch.text_lengths,
                teacher_batch.mel,
                teacher_batch.mel_lengths,
            )
            total, _ = transformer_conventional_loss(
                out, teacher_batch.mel, teacher_batch.stop_labels, ga_weight=5.0
            )
            opt.zero_grad()
            total.backward()
            opt.step()
        targets, report = distill_targets(teacher, items)
        assert len(targets) == 3, f"teacher still degenerate: {report.excluded}"

        torch.manual_seed(11)
        student = small_fastspeech(duration_mode="mse_log")
        opt = torch.optim.Adam(student.parameters(), lr=2e-3)
        pairs = [
            (encode_text(text, VOCAB), target) for text, target in zip(texts, targets)
        ]
        batch = collate(pairs)
        for _ in range(120):
            out = student(batch.text, batch.text_lengths, batch.durations)
            total, _ = fastspeech_conventional_loss(
                out, batch.mel, batch.durations, mode="mse_log"
            )
            opt.zero_grad()
            total.backward()
            opt.step()

        student.eval()
        out = student(batch.text, batch.text_lengths, batch.durations)
        gt_batch = collate(
            [
                (seq, TtsTarget(t.utt_id, gt, make_stop_labels(gt.n_frames), t.durations))
                for (seq, t), gt in zip(pairs, gt_mels)
            ]
        )
        l2_teacher = float(masked_mel_l2(out.mel_post, batch.mel, out.mel_lengths).detach())
        l2_ground = float(masked_mel_l2(out.mel_post, gt_batch.mel, out.mel_lengths).detach())
        assert l2_teacher < l2_ground


class TestSynthesize:
    def test_transformer_immediate_stop(self):
        model = small_transformer()
        with torch.no_grad():
            model.stop_proj.weight.zero_()
            model.stop_proj.bias.fill_(math.log(0.9 / 0.1))  # sigmoid -> 0.9
        seq = encode_text("abcde", VOCAB)
        result = synthesize(model, seq)
        assert result.mel.n_frames == 1
        assert not result.truncated

    def test_transformer_truncation_at_cap(self):
        model = small_transformer(max_frames_factor=3)
        with torch.no_grad():
            model.stop_proj.weight.zero_()
            model.stop_proj.bias.fill_(-20.0)  # never stop
        seq = encode_text("ab", VOCAB)
        result = synthesize(model, seq)
        assert result.truncated
        assert result.mel.n_frames == 3 * 2

    def test_fastspeech_constant_durations(self):
        model = small_fastspeech()
        d = 3
        with torch.no_grad():
            model.duration_predictor.proj.weight.zero_()
            bias = torch.full((51,), -10.0)
            bias[d] = 10.0
            model.duration_predictor.proj.bias.copy_(bias)
        seq = encode_text("abcde", VOCAB)
        result = synthesize(model, seq)
        assert result.mel.n_frames == d * seq.length

    def test_deterministic_inference(self):
        model = small_transformer()
        seq = encode_text("abc", VOCAB)
        a = synthesize(model, seq)
        b = synthesize(model, seq)
        assert np.array_equal(a.mel.frames, b.mel.frames)


class TestCheckpoints:
    def test_transformer_roundtrip(self, tmp_path, rng):
        model = small_transformer()
        save_transformer_tts(tmp_path / "ckpt", model, {"epoch": 1})
        loaded, meta = load_transformer_tts(tmp_path / "ckpt")
        assert meta["family"] == "transformer"
        seq = encode_text("abc", VOCAB)
        a = synthesize(model, seq)
        b = synthesize(loaded, seq)
        assert np.allclose(a.mel.frames, b.mel.frames, atol=1e-6)


class TestGradientChecks:
    def _mini_transformer(self, seed):
        torch.manual_seed(seed)
        cfg = TransformerTtsConfig(
            vocab_size=len(VOCAB),
            d_model=8,
            n_heads=2,
            encoder_layers=1,
            decoder_layers=1,
            ffn_hidden=8,
            prenet_hidden=8,
            postnet_layers=2,
            postnet_channels=8,
            dropout=0.0,
            activation="tanh",
        )
        return TransformerTts(cfg).double()

    def _mini_batch(self, rng, with_durations=False):
        pairs = make_pairs(rng, [("ab", 4)], with_durations=with_durations)
        batch = collate(pairs)
        batch.mel = batch.mel.double()
        batch.stop_labels = batch.stop_labels.double()
        return batch

    @pytest.mark.parametrize("term", ["l2_pre", "l2_post", "stop_bce", "guided_attn"])
    def test_transformer_terms(self, term, rng):
        model = self._mini_transformer(seed=21)
        model.eval()
        batch = self._mini_batch(rng)

        def loss_fn():
            out = model(batch.text, batch.text_lengths, batch.mel, batch.mel_lengths)
            _, terms = transformer_conventional_loss(out, batch.mel, batch.stop_labels)
            return terms[term]

        checked = sampled_fd_gradcheck(loss_fn, model, rng, n_coords=40)
        assert checked > 0

    @pytest.mark.parametrize("term", ["l2_pre", "l2_post", "duration_loss"])
    def test_fastspeech_terms(self, term, rng):
        torch.manual_seed(22)
        cfg = FastSpeechConfig(
            vocab_size=len(VOCAB),
            d_model=8,
            n_heads=2,
            encoder_layers=1,
            decoder_layers=1,
            conv_hidden=8,
            duration_hidden=8,
            postnet_layers=2,
            postnet_channels=8,
            dropout=0.0,
            activation="tanh",
        )
        model = FastSpeech(cfg).double()
        model.eval()
        pairs = make_pairs(rng, [("ab", 0)], with_durations=True)
        batch = collate(pairs)
        batch.mel = batch.mel.double()

        def loss_fn():
            out = model(batch.text, batch.text_lengths, batch.durations)
            _, terms = fastspeech_conventional_loss(out, batch.mel, batch.durations)
            return terms[term]

        checked = sampled_fd_gradcheck(loss_fn, model, rng, n_coords=40)
        assert checked > 0
