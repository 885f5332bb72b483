"""Training loop for the MOS predictor.

Minimizes utterance-level MSE plus an optional frame-level MSE term in
which every frame regresses to the utterance label. Early stopping watches
held-out utterance MSE.
"""

import copy
import math
from dataclasses import dataclass

import numpy as np
import torch

from percept_tts.dataio.dataset import RatedUtterance
from percept_tts.dataio.mel import N_MELS
from percept_tts.errors import DataError, NumericalError
from percept_tts.mosnet.model import MosPredictor


@dataclass
class MosTrainConfig:
    epochs: int = 30
    batch_size: int = 8
    learning_rate: float = 1e-4
    frame_loss_weight: float = 1.0
    patience: int = 5
    seed: int = 0
    grad_clip: float = 5.0


def _collate(batch: list[RatedUtterance]):
    lengths = torch.tensor([u.mel.n_frames for u in batch], dtype=torch.long)
    mels = torch.zeros(len(batch), int(lengths.max()), N_MELS)
    for i, utt in enumerate(batch):
        mels[i, : utt.mel.n_frames] = torch.from_numpy(utt.mel.frames)
    labels = torch.tensor([u.mos for u in batch], dtype=torch.float32)
    return mels, lengths, labels


def _batch_loss(model, mels, lengths, labels, frame_weight):
    frame_scores, utt_scores = model(mels, lengths)
    utt_mse = torch.mean((utt_scores - labels) ** 2)
    loss = utt_mse
    if frame_weight > 0:
        mask = torch.arange(mels.size(1), device=mels.device)[None, :] < lengths[:, None]
        sq = (frame_scores - labels[:, None]) ** 2 * mask
        frame_mse = torch.mean(sq.sum(dim=1) / lengths.to(mels.dtype))
        loss = loss + frame_weight * frame_mse
    return loss, utt_mse


def evaluate_utt_mse(model: MosPredictor, dataset: list[RatedUtterance], batch_size: int = 16):
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            mels, lengths, labels = _collate(dataset[start : start + batch_size])
            _, utt_scores = model(mels, lengths)
            total += float(torch.sum((utt_scores - labels) ** 2))
            count += len(labels)
    return total / count


def train_mos(
    model: MosPredictor,
    dataset: list[RatedUtterance],
    hyper: MosTrainConfig | None = None,
    val_set: list[RatedUtterance] | None = None,
):
    """Train in place; returns (model, history).

    History is one dict per epoch with ``train_loss`` (the optimized
    objective) and ``train_utt_mse``; when a validation set is given each
    entry also carries ``val_utt_mse`` and early stopping restores the best
    parameters after ``hyper.patience`` epochs without improvement.
    """
    hyper = hyper or MosTrainConfig()
    if not dataset:
        raise DataError("train_mos needs a non-empty dataset")
    for utt in dataset:
        if not 1.0 <= utt.mos <= 5.0:
            raise DataError(f"{utt.utt_id}: label {utt.mos} outside [1, 5]")

    optimizer = torch.optim.Adam(model.parameters(), lr=hyper.learning_rate)
    shuffler = np.random.default_rng(hyper.seed)

    history: list[dict] = []
    best_val = math.inf
    best_state = None
    stale = 0

    for epoch in range(hyper.epochs):
        model.train()
        order = shuffler.permutation(len(dataset))
        epoch_loss, epoch_utt_mse, n_batches = 0.0, 0.0, 0
        for start in range(0, len(dataset), hyper.batch_size):
            batch = [dataset[i] for i in order[start : start + hyper.batch_size]]
            mels, lengths, labels = _collate(batch)
            loss, utt_mse = _batch_loss(model, mels, lengths, labels, hyper.frame_loss_weight)
            if not torch.isfinite(loss):
                raise NumericalError(
                    f"non-finite training loss at epoch {epoch} (utt_mse={float(utt_mse)})"
                )
            optimizer.zero_grad()
            loss.backward()
            if hyper.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), hyper.grad_clip)
            optimizer.step()
            epoch_loss += float(loss.detach())
            epoch_utt_mse += float(utt_mse.detach())
            n_batches += 1

        entry = {
            "epoch": epoch,
            "train_loss": epoch_loss / n_batches,
            "train_utt_mse": epoch_utt_mse / n_batches,
        }
        if val_set:
            val_mse = evaluate_utt_mse(model, val_set)
            entry["val_utt_mse"] = val_mse
            if val_mse < best_val - 1e-12:
                best_val = val_mse
                best_state = copy.deepcopy(model.state_dict())
                stale = 0
            else:
                stale += 1
                if stale > hyper.patience:
                    history.append(entry)
                    break
        history.append(entry)

    if best_state is not None:
        model.load_state_dict(best_state)
    return model, history
