"""Training loop mixing conventional TTS losses with the frozen-predictor term.

The same loop trains plain baselines (perceptual config absent) and
perceptually guided models; with the perceptual term active, epoch e is
weighted by lambda_at(schedule, e) and every step backpropagates through
both the conventional loss and the predictor's score of the generated mel.
The predictor itself is frozen and never changes.
"""

import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from percept_tts.dataio.mel import N_MELS
from percept_tts.errors import DataError, NumericalError
from percept_tts.mosnet.model import MosPredictor
from percept_tts.perceptual.loss import LossBreakdown, combined_loss, perceptual_loss
from percept_tts.perceptual.schedule import LambdaSchedule, lambda_at
from percept_tts.ttscore.fastspeech import FastSpeech, save_fastspeech
from percept_tts.ttscore.losses import (
    TtsTarget,
    fastspeech_conventional_loss,
    transformer_conventional_loss,
)
from percept_tts.ttscore.text import TextSequence
from percept_tts.ttscore.transformer import TransformerTts, save_transformer_tts


@dataclass
class PerceptualTrainingConfig:
    schedule: LambdaSchedule
    mos_target: float = 5.0
    predictor_input: str = "post_net"  # or "pre_net"
    batch_reduction: str = "mean"
    predictor_checkpoint: str | None = None
    mel_adapter_scale: float = 1.0  # affine bridge into the predictor's mel space
    mel_adapter_shift: float = 0.0

    def __post_init__(self):
        if not 1.0 <= self.mos_target <= 5.0:
            raise DataError("mos_target must lie in [1, 5]")
        if self.predictor_input not in ("post_net", "pre_net"):
            raise DataError(f"unknown predictor_input {self.predictor_input!r}")
        if self.batch_reduction != "mean":
            raise DataError("only mean batch reduction is supported")


@dataclass
class TtsTrainConfig:
    epochs: int = 20
    batch_size: int = 8
    learning_rate: float = 1e-3
    seed: int = 0
    grad_clip: float = 1.0
    ga_weight: float = 1.0
    ga_g: float = 0.2
    stop_pos_weight: float = 5.0
    duration_mode: str = "cross_entropy_bucketed"
    max_duration: int = 50


@dataclass
class TrainBatch:
    text: torch.Tensor  # (B, N)
    text_lengths: torch.Tensor
    mel: torch.Tensor  # (B, T, n_mels)
    mel_lengths: torch.Tensor
    stop_labels: torch.Tensor  # (B, T)
    durations: torch.Tensor | None  # (B, N) or None


def collate(pairs: list[tuple[TextSequence, TtsTarget]]) -> TrainBatch:
    batch = len(pairs)
    n_max = max(p[0].length for p in pairs)
    t_max = max(p[1].mel.n_frames for p in pairs)
    text = torch.zeros(batch, n_max, dtype=torch.long)
    mel = torch.zeros(batch, t_max, N_MELS)
    stop = torch.zeros(batch, t_max)
    text_lengths = torch.tensor([p[0].length for p in pairs], dtype=torch.long)
    mel_lengths = torch.tensor([p[1].mel.n_frames for p in pairs], dtype=torch.long)
    has_durations = all(p[1].durations is not None for p in pairs)
    durations = torch.zeros(batch, n_max, dtype=torch.long) if has_durations else None
    for i, (seq, target) in enumerate(pairs):
        text[i, : seq.length] = torch.from_numpy(seq.token_ids)
        mel[i, : target.mel.n_frames] = torch.from_numpy(target.mel.frames)
        stop[i, : target.mel.n_frames] = torch.from_numpy(target.stop_labels)
        if has_durations:
            durations[i, : seq.length] = torch.from_numpy(target.durations)
    return TrainBatch(text, text_lengths, mel, mel_lengths, stop, durations)


def conventional_forward(tts_model, batch: TrainBatch, train_cfg: TtsTrainConfig):
    """Run the family-appropriate forward pass and conventional loss."""
    if isinstance(tts_model, TransformerTts):
        outputs = tts_model(batch.text, batch.text_lengths, batch.mel, batch.mel_lengths)
        l_con, terms = transformer_conventional_loss(
            outputs,
            batch.mel,
            batch.stop_labels,
            ga_weight=train_cfg.ga_weight,
            ga_g=train_cfg.ga_g,
            stop_pos_weight=train_cfg.stop_pos_weight,
        )
    elif isinstance(tts_model, FastSpeech):
        if batch.durations is None:
            raise DataError("fastspeech training needs target durations")
        outputs = tts_model(batch.text, batch.text_lengths, batch.durations)
        l_con, terms = fastspeech_conventional_loss(
            outputs,
            batch.mel,
            batch.durations,
            mode=train_cfg.duration_mode,
            max_duration=train_cfg.max_duration,
        )
    else:
        raise DataError(f"unsupported model type {type(tts_model).__name__}")
    return outputs, l_con, terms


def score_generated_mel(
    predictor: MosPredictor, outputs, perceptual_cfg: PerceptualTrainingConfig
) -> torch.Tensor:
    mel = outputs.mel_post if perceptual_cfg.predictor_input == "post_net" else outputs.mel_pre
    adapted = mel * perceptual_cfg.mel_adapter_scale + perceptual_cfg.mel_adapter_shift
    _, utt_scores = predictor(adapted, outputs.mel_lengths)
    return utt_scores


def perceptual_train_step(
    tts_model,
    predictor: MosPredictor,
    batch: TrainBatch,
    lam: float,
    optimizer: torch.optim.Optimizer,
    train_cfg: TtsTrainConfig,
    perceptual_cfg: PerceptualTrainingConfig,
) -> LossBreakdown:
    """One optimizer step on the combined objective; the predictor stays frozen."""
    if not predictor.frozen:
        raise DataError("the MOS predictor must be frozen before perceptual training")
    outputs, l_con, _ = conventional_forward(tts_model, batch, train_cfg)
    utt_scores = score_generated_mel(predictor, outputs, perceptual_cfg)
    l_per = perceptual_loss(utt_scores, perceptual_cfg.mos_target)
    total = combined_loss(l_con, l_per, lam)
    if not torch.isfinite(total):
        raise NumericalError(
            f"non-finite combined loss (l_con={float(l_con)}, l_per={float(l_per)}, lam={lam})"
        )
    optimizer.zero_grad()
    total.backward()
    if train_cfg.grad_clip > 0:
        torch.nn.utils.clip_grad_norm_(tts_model.parameters(), train_cfg.grad_clip)
    optimizer.step()
    return LossBreakdown.make(float(l_con.detach()), float(l_per.detach()), lam)


def conventional_train_step(
    tts_model,
    batch: TrainBatch,
    optimizer: torch.optim.Optimizer,
    train_cfg: TtsTrainConfig,
) -> float:
    """Baseline step: conventional loss only."""
    _, l_con, _ = conventional_forward(tts_model, batch, train_cfg)
    if not torch.isfinite(l_con):
        raise NumericalError(f"non-finite conventional loss ({float(l_con)})")
    optimizer.zero_grad()
    l_con.backward()
    if train_cfg.grad_clip > 0:
        torch.nn.utils.clip_grad_norm_(tts_model.parameters(), train_cfg.grad_clip)
    optimizer.step()
    return float(l_con.detach())


def _evaluate(tts_model, predictor, dataset, train_cfg, perceptual_cfg, lam, batch_size):
    tts_model.eval()
    records = []
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            batch = collate(dataset[start : start + batch_size])
            outputs, l_con, _ = conventional_forward(tts_model, batch, train_cfg)
            if perceptual_cfg is not None:
                scores = score_generated_mel(predictor, outputs, perceptual_cfg)
                l_per = float(perceptual_loss(scores, perceptual_cfg.mos_target).detach())
                total = combined_loss(float(l_con.detach()), l_per, lam)
            else:
                l_per = None
                total = float(l_con.detach())
            records.append((float(l_con.detach()), l_per, total, len(batch.text)))
    tts_model.train()
    n = sum(r[3] for r in records)
    l_con = sum(r[0] * r[3] for r in records) / n
    total = sum(r[2] * r[3] for r in records) / n
    l_per = (
        sum(r[1] * r[3] for r in records) / n if perceptual_cfg is not None else None
    )
    return l_con, l_per, total


def _save_family_checkpoint(directory, tts_model, extra):
    if isinstance(tts_model, TransformerTts):
        return save_transformer_tts(directory, tts_model, extra)
    return save_fastspeech(directory, tts_model, extra)


def train_tts(
    tts_model,
    dataset: list[tuple[TextSequence, TtsTarget]],
    train_cfg: TtsTrainConfig,
    perceptual_cfg: PerceptualTrainingConfig | None = None,
    predictor: MosPredictor | None = None,
    val_set: list[tuple[TextSequence, TtsTarget]] | None = None,
    out_dir=None,
    extra_meta: dict | None = None,
):
    """Epoch loop shared by baseline and perceptually guided training.

    Returns (model, history). Each history entry logs epoch, l_con and
    total; with the perceptual term active it also logs lam and l_per.
    When ``out_dir`` is set, a checkpoint is written per epoch and the
    best-by-validation one is mirrored into ``out_dir/best``.
    """
    if not dataset:
        raise DataError("train_tts needs a non-empty dataset")
    if perceptual_cfg is not None:
        if predictor is None:
            raise DataError("perceptual training needs a MOS predictor")
        if not predictor.frozen:
            raise DataError("the MOS predictor must be frozen before perceptual training")

    optimizer = torch.optim.Adam(tts_model.parameters(), lr=train_cfg.learning_rate)
    shuffler = np.random.default_rng(train_cfg.seed)
    history: list[dict] = []
    best_val = float("inf")
    best_epoch = None

    for epoch in range(train_cfg.epochs):
        lam = (
            lambda_at(perceptual_cfg.schedule, epoch) if perceptual_cfg is not None else None
        )
        tts_model.train()
        order = shuffler.permutation(len(dataset))
        sums = {"l_con": 0.0, "l_per": 0.0, "total": 0.0}
        n_batches = 0
        for start in range(0, len(dataset), train_cfg.batch_size):
            batch = collate([dataset[i] for i in order[start : start + train_cfg.batch_size]])
            if perceptual_cfg is not None:
                breakdown = perceptual_train_step(
                    tts_model, predictor, batch, lam, optimizer, train_cfg, perceptual_cfg
                )
                sums["l_con"] += breakdown.l_con
                sums["l_per"] += breakdown.l_per
                sums["total"] += breakdown.total
            else:
                l_con = conventional_train_step(tts_model, batch, optimizer, train_cfg)
                sums["l_con"] += l_con
                sums["total"] += l_con
            n_batches += 1

        entry = {"epoch": epoch, "l_con": sums["l_con"] / n_batches, "total": sums["total"] / n_batches}
        if perceptual_cfg is not None:
            entry["lambda"] = lam
            entry["l_per"] = sums["l_per"] / n_batches

        if val_set:
            val_l_con, val_l_per, val_total = _evaluate(
                tts_model,
                predictor,
                val_set,
                train_cfg,
                perceptual_cfg,
                lam if lam is not None else 0.0,
                train_cfg.batch_size,
            )
            entry["val_total"] = val_total
        else:
            val_total = entry["total"]
        history.append(entry)

        if out_dir is not None:
            meta = dict(extra_meta or {})
            meta["epoch"] = epoch
            ckpt = _save_family_checkpoint(Path(out_dir) / f"epoch_{epoch:03d}", tts_model, meta)
            if val_total < best_val:
                best_val = val_total
                best_epoch = epoch
                best_dir = Path(out_dir) / "best"
                if best_dir.exists():
                    shutil.rmtree(best_dir)
                shutil.copytree(ckpt, best_dir)

    if out_dir is not None and best_epoch is not None:
        (Path(out_dir) / "best_epoch.txt").write_text(f"{best_epoch}\n", encoding="utf-8")
    return tts_model, history

