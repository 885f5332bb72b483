"""Teacher-to-student target generation.

A teacher-forced pass over each utterance yields the refined mel (the
student's reconstruction target) and cross-attention alignments. Durations
come from the most diagonal head: each decoder step votes for the character
its attention argmax lands on, ties going to the earlier character, so the
per-character counts always sum to the frame count.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from percept_tts.dataio.mel import MelSpectrogram, read_mel_cache, write_mel_cache
from percept_tts.errors import DataError
from percept_tts.ttscore.losses import TtsTarget, make_stop_labels
from percept_tts.ttscore.transformer import TransformerTts


def durations_from_alignment(weights: np.ndarray) -> np.ndarray:
    """Count decoder-step argmax votes per character.

    Args:
        weights: (N, T) alignment, columns are decoder steps.

    Returns:
        (N,) integer durations with sum T; np.argmax breaks ties toward
        the earlier character.
    """
    weights = np.asarray(weights)
    if weights.ndim != 2:
        raise DataError("alignment must be a matrix")
    n_text, n_frames = weights.shape
    winners = np.argmax(weights, axis=0)
    durations = np.zeros(n_text, dtype=np.int64)
    for char_idx in winners:
        durations[char_idx] += 1
    return durations


def diagonal_focus(weights: np.ndarray) -> float:
    """Mean over decoder steps of the per-step max attention weight."""
    return float(np.max(weights, axis=0).mean())


def select_diagonal_head(alignments: list[torch.Tensor], item: int, n_text: int, n_frames: int):
    """Pick (layer, head) with maximal focus for one batch item.

    Returns ((layer, head), weights (N, T)).
    """
    best = None
    best_key = None
    for layer_idx, att in enumerate(alignments):
        for head_idx in range(att.size(1)):
            w = att[item, head_idx, :n_frames, :n_text].detach().cpu().numpy().T
            focus = diagonal_focus(w)
            if best_key is None or focus > best_key:
                best_key = focus
                best = ((layer_idx, head_idx), w)
    return best


@dataclass
class DistillReport:
    produced: list[str] = field(default_factory=list)
    excluded: list[tuple[str, str]] = field(default_factory=list)  # (utt_id, reason)
    selected_heads: dict = field(default_factory=dict)  # utt_id -> (layer, head)


def distill_targets(
    teacher: TransformerTts,
    items: list[tuple[str, "np.ndarray", MelSpectrogram]],
) -> tuple[list[TtsTarget], DistillReport]:
    """Build student targets from a trained teacher.

    Args:
        teacher: Trained transformer model.
        items: (utt_id, token_ids, ground_truth_mel) triples.

    Returns:
        (targets, report). Utterances whose best alignment is degenerate
        (a single character soaking up every frame of a multi-character
        utterance) are excluded and reported, not silently dropped.
    """
    was_training = teacher.training
    teacher.eval()
    targets = []
    report = DistillReport()
    try:
        with torch.no_grad():
            for utt_id, token_ids, mel in items:
                text = torch.from_numpy(np.asarray(token_ids, dtype=np.int64))[None]
                text_lengths = torch.tensor([text.size(1)])
                target_mel = torch.from_numpy(mel.frames)[None]
                mel_lengths = torch.tensor([mel.n_frames])
                outputs = teacher(text, text_lengths, target_mel, mel_lengths)

                (layer, head), weights = select_diagonal_head(
                    outputs.alignments, 0, text.size(1), mel.n_frames
                )
                durations = durations_from_alignment(weights)
                if text.size(1) > 1 and int(durations.max()) == mel.n_frames:
                    report.excluded.append((utt_id, "degenerate alignment"))
                    continue
                distilled_mel = MelSpectrogram(
                    frames=outputs.mel_post[0].numpy(),
                    sample_rate=mel.sample_rate,
                    hop_length=mel.hop_length,
                )
                targets.append(
                    TtsTarget(
                        utt_id=utt_id,
                        mel=distilled_mel,
                        stop_labels=make_stop_labels(mel.n_frames),
                        durations=durations,
                    )
                )
                report.produced.append(utt_id)
                report.selected_heads[utt_id] = (layer, head)
    finally:
        if was_training:
            teacher.train()
    return targets, report


def save_distilled_targets(directory, targets: list[TtsTarget]) -> Path:
    """Per-utterance mel cache plus one shared duration sidecar file."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for target in targets:
        write_mel_cache(directory / f"{target.utt_id}.mel", target.mel)
        lines.append(target.utt_id + " " + " ".join(str(int(d)) for d in target.durations))
    (directory / "durations.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return directory


def load_distilled_targets(directory) -> list[TtsTarget]:
    directory = Path(directory)
    sidecar = directory / "durations.txt"
    if not sidecar.exists():
        raise DataError(f"{directory} has no durations.txt sidecar")
    targets = []
    for lineno, line in enumerate(sidecar.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        utt_id, durations = parts[0], np.asarray([int(x) for x in parts[1:]], dtype=np.int64)
        mel_path = directory / f"{utt_id}.mel"
        if not mel_path.exists():
            raise DataError(f"{sidecar}:{lineno}: missing mel cache for {utt_id!r}")
        mel = read_mel_cache(mel_path)
        targets.append(
            TtsTarget(
                utt_id=utt_id,
                mel=mel,
                stop_labels=make_stop_labels(mel.n_frames),
                durations=durations,
            )
        )
    return targets
