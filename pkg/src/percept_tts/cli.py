"""Command-line entry points orchestrating the training pipeline and evaluation.

Subcommands: prepare, train-mos, train-tts, distill, synth, eval, plot.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

import argparse
import sys
from datetime import datetime
from pathlib import Path

import numpy as np
import yaml

from percept_tts.checkpoint import load_checkpoint
from percept_tts.config import RunConfig, load_run_config
from percept_tts.dataio.dataset import (
    RatedUtterance,
    UtteranceOrigin,
    augment_mos_dataset,
    mean_mos_by_utterance,
)
from percept_tts.dataio.manifest import load_manifest, read_wav, write_wav
from percept_tts.dataio.mel import (
    MelSpectrogram,
    extract_mel,
    griffin_lim,
    read_mel_cache,
    write_mel_cache,
)
from percept_tts.dataio.ratings import load_ratings
from percept_tts.errors import DataError, NumericalError, PerceptTtsError, UsageError
from percept_tts.evalkit.charts import stacked_bar_chart
from percept_tts.evalkit.intelligibility import ScoreHistogram
from percept_tts.evalkit.per import pairs_from_files, per_breakdown
from percept_tts.evalkit.report import SystemReport, render_metric_report, write_metric_report
from percept_tts.evalkit.stats import mos_aggregate, paired_t_test
from percept_tts.mosnet.metrics import eval_mos_predictor
from percept_tts.mosnet.model import MosPredictor, load_mos_predictor, save_mos_predictor
from percept_tts.mosnet.train import train_mos
from percept_tts.perceptual.train import train_tts
from percept_tts.seeding import seed_everything
from percept_tts.ttscore.distill import distill_targets, load_distilled_targets, save_distilled_targets
from percept_tts.ttscore.fastspeech import FastSpeech, FastSpeechConfig, load_fastspeech
from percept_tts.ttscore.losses import TtsTarget, make_stop_labels
from percept_tts.ttscore.synthesize import synthesize
from percept_tts.ttscore.text import build_vocab, encode_text
from percept_tts.ttscore.transformer import (
    TTSCORE_MAGIC,
    TransformerTts,
    TransformerTtsConfig,
    load_transformer_tts,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class Echo:
    def __init__(self, timestamps: bool):
        self.timestamps = timestamps

    def __call__(self, message: str):
        if self.timestamps:
            print(f"[{datetime.now().isoformat(timespec='seconds')}] {message}")
        else:
            print(message)


def _add_common(parser):
    parser.add_argument("--config", help="YAML run configuration")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config entry (dotted keys, last wins)",
    )
    parser.add_argument(
        "--no-timestamp",
        action="store_true",
        help="suppress timestamps so logs are byte-reproducible",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="percept-tts", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="extract and cache mel spectrograms")
    _add_common(p)

    p = sub.add_parser("train-mos", help="train the MOS predictor")
    _add_common(p)
    p.add_argument("--no-augment", action="store_true", help="skip the TTS-corpus augmentation")

    p = sub.add_parser("train-tts", help="train a TTS model, optionally perceptually guided")
    _add_common(p)
    p.add_argument("--perceptual", choices=["on", "off"], default="off")
    p.add_argument("--teacher", help="teacher checkpoint for fastspeech distillation")

    p = sub.add_parser("distill", help="generate distilled targets from a teacher")
    _add_common(p)
    p.add_argument("--teacher", required=True)

    p = sub.add_parser("synth", help="synthesize mels (and optionally wavs) from text")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--text", action="append", default=[], help="text to synthesize (repeatable)")
    p.add_argument("--manifest", help="synthesize every text in this manifest")
    p.add_argument("--wav", action="store_true", help="also write phase-reconstructed wavs")

    p = sub.add_parser("eval", help="compute the metric report")
    _add_common(p)
    p.add_argument("--ratings", help="listening-test ratings CSV")
    p.add_argument(
        "--per",
        nargs=3,
        metavar=("REF", "HYP", "CLASSES"),
        help="reference phones, hypothesis phones and long/short class files",
    )
    p.add_argument("--system", default="system", help="system name for --per results")
    p.add_argument(
        "--t-test",
        nargs=2,
        metavar=("SYS_A", "SYS_B"),
        help="paired t-test on naturalness scores of two systems",
    )
    p.add_argument("--report", help="report path (default <out>/report.txt)")
    p.add_argument("--chart", help="also emit a stacked intelligibility bar chart")

    p = sub.add_parser("plot", help="stacked bar chart of intelligibility scores")
    _add_common(p)
    p.add_argument("--ratings", required=True)
    p.add_argument("--out", help="chart path (default <out>/intelligibility.svg)")

    return parser


# -- shared helpers ---------------------------------------------------------


def _cache_path(out_dir: Path, origin: str, utt_id: str) -> Path:
    return out_dir / "cache" / origin / f"{utt_id}.mel"


def _mel_for_entry(entry, origin, config: RunConfig, out_dir: Path) -> MelSpectrogram:
    cache = _cache_path(out_dir, origin, entry.utt_id)
    if cache.exists():
        return read_mel_cache(cache)
    return extract_mel(read_wav(entry.audio_path, config.mel.sample_rate), config.mel)


def _require(value, message):
    if value is None:
        raise UsageError(message)
    return value


def _split(items, val_fraction: float, rng: np.random.Generator):
    order = rng.permutation(len(items))
    n_val = max(1, int(round(len(items) * val_fraction))) if len(items) > 1 else 0
    val_idx = set(order[:n_val].tolist())
    train = [items[i] for i in range(len(items)) if i not in val_idx]
    val = [items[i] for i in range(len(items)) if i in val_idx]
    return train, val


def _tts_model_for(config: RunConfig, vocab_size: int):
    if config.family == "transformer":
        sizes = dict(config.transformer)
        sizes["vocab_size"] = vocab_size
        return TransformerTts(TransformerTtsConfig.from_dict(sizes | {"n_mels": 80}))
    sizes = dict(config.fastspeech)
    sizes["vocab_size"] = vocab_size
    sizes.setdefault("duration_mode", config.tts_training.duration_mode)
    return FastSpeech(FastSpeechConfig.from_dict(sizes | {"n_mels": 80}))


def _load_any_tts(path):
    _, meta = load_checkpoint(path, TTSCORE_MAGIC)
    if meta.get("family") == "transformer":
        return load_transformer_tts(path)
    return load_fastspeech(path)


# -- commands ----------------------------------------------------------------


def cmd_prepare(args, config: RunConfig, echo: Echo) -> int:
    out_dir = config.resolved_output_dir()
    failures = []
    written = 0
    for origin, manifest_path in (
        ("tts", config.corpora.tts_manifest),
        ("mos", config.corpora.mos_manifest),
    ):
        if manifest_path is None:
            continue
        manifest = load_manifest(manifest_path)
        for entry in manifest:
            try:
                mel = extract_mel(read_wav(entry.audio_path, config.mel.sample_rate), config.mel)
                write_mel_cache(_cache_path(out_dir, origin, entry.utt_id), mel)
                written += 1
            except PerceptTtsError as exc:
                failures.append((origin, entry.utt_id, str(exc)))
        echo(f"prepared {origin} corpus from {manifest_path}")
    echo(f"cached {written} mel files under {out_dir / 'cache'}")
    if failures:
        for origin, utt_id, reason in failures:
            echo(f"FAILED {origin}/{utt_id}: {reason}")
        return EXIT_DATA
    return EXIT_OK


def _build_mos_dataset(args, config: RunConfig, out_dir: Path, echo: Echo):
    manifest = load_manifest(
        _require(config.corpora.mos_manifest, "train-mos needs corpora.mos_manifest")
    )
    records = load_ratings(
        _require(config.corpora.ratings, "train-mos needs corpora.ratings")
    )
    labels = mean_mos_by_utterance(records, test="naturalness")
    mos_set = []
    for entry in manifest:
        if entry.utt_id not in labels:
            raise DataError(f"no naturalness ratings for MOS-corpus entry {entry.utt_id!r}")
        mos_set.append(
            RatedUtterance(
                utt_id=entry.utt_id,
                mel=_mel_for_entry(entry, "mos", config, out_dir),
                mos=labels[entry.utt_id],
                origin=UtteranceOrigin.MOS_CORPUS,
            )
        )
    augment = not args.no_augment and config.corpora.tts_manifest is not None
    if augment:
        tts_manifest = load_manifest(config.corpora.tts_manifest)
        dataset = augment_mos_dataset(
            mos_set,
            tts_manifest,
            config.mel,
            assumed_mos=config.assumed_mos,
            mel_loader=lambda entry: _mel_for_entry(entry, "tts", config, out_dir),
        )
    else:
        dataset = list(mos_set)
    n_tts = sum(1 for u in dataset if u.origin is UtteranceOrigin.TTS_CORPUS)
    echo(
        f"mos dataset: {len(dataset)} utterances "
        f"(mos_corpus={len(dataset) - n_tts}, tts_corpus={n_tts})"
    )
    return dataset


def cmd_train_mos(args, config: RunConfig, echo: Echo) -> int:
    out_dir = config.resolved_output_dir()
    rng = seed_everything(config.seed)
    dataset = _build_mos_dataset(args, config, out_dir, echo)
    if not dataset:
        raise DataError("the MOS training dataset is empty")
    train_set, val_set = _split(dataset, config.mos_val_fraction, rng)
    if not train_set:
        raise DataError("the MOS training split is empty; lower mos_val_fraction")
    echo(f"split: train={len(train_set)} val={len(val_set)}")

    model = MosPredictor(config.predictor)
    model, history = train_mos(model, train_set, config.mos_training, val_set or None)
    echo(f"trained {len(history)} epochs; final train mse={history[-1]['train_utt_mse']:.4f}")

    metrics = {}
    if len(val_set) >= 2:
        m = eval_mos_predictor(model, val_set)
        metrics = m.to_dict()
        lcc = "n/a" if m.lcc is None else f"{m.lcc:.4f}"
        srcc = "n/a" if m.srcc is None else f"{m.srcc:.4f}"
        echo(f"validation: lcc={lcc} srcc={srcc} mse={m.mse:.4f}")

    ckpt_dir = out_dir / "mosnet"
    save_mos_predictor(
        ckpt_dir, model, extra={"epochs": len(history), "metrics": metrics, "seed": config.seed}
    )
    (ckpt_dir / "metrics.yaml").write_text(yaml.safe_dump(metrics), encoding="utf-8")
    echo(f"saved predictor checkpoint to {ckpt_dir}")
    return EXIT_OK


def _build_tts_dataset(args, config: RunConfig, out_dir: Path, echo: Echo):
    manifest = load_manifest(
        _require(config.corpora.tts_manifest, "train-tts needs corpora.tts_manifest")
    )
    vocab = build_vocab([entry.text for entry in manifest])

    if config.family == "transformer":
        pairs = []
        for entry in manifest:
            mel = _mel_for_entry(entry, "tts", config, out_dir)
            target = TtsTarget(entry.utt_id, mel, make_stop_labels(mel.n_frames))
            pairs.append((encode_text(entry.text, vocab), target))
        return pairs, vocab

    # fastspeech: distilled targets carry both the teacher mels and durations
    if args.teacher:
        teacher, teacher_meta = _load_any_tts(args.teacher)
        if not isinstance(teacher, TransformerTts):
            raise DataError("--teacher must point at a transformer checkpoint")
        teacher_vocab = teacher_meta.get("vocab") or vocab
        items = [
            (
                entry.utt_id,
                encode_text(entry.text, teacher_vocab).token_ids,
                _mel_for_entry(entry, "tts", config, out_dir),
            )
            for entry in manifest
        ]
        targets, report = distill_targets(teacher, items)
        for utt_id, reason in report.excluded:
            echo(f"distillation excluded {utt_id}: {reason}")
        save_distilled_targets(out_dir / "distilled", targets)
        vocab = teacher_vocab
    elif config.corpora.distilled_dir:
        targets = load_distilled_targets(config.corpora.distilled_dir)
    else:
        raise UsageError("fastspeech training needs --teacher or corpora.distilled_dir")

    by_id = {entry.utt_id: entry for entry in manifest}
    pairs = []
    for target in targets:
        entry = by_id.get(target.utt_id)
        if entry is None:
            raise DataError(f"distilled target {target.utt_id!r} has no manifest entry")
        seq = encode_text(entry.text, vocab)
        if target.durations is None or len(target.durations) != seq.length:
            raise DataError(f"distilled durations for {target.utt_id!r} do not match the text")
        pairs.append((seq, target))
    if not pairs:
        raise DataError("no usable distilled targets; the teacher may be degenerate")
    return pairs, vocab


def _write_train_log(path: Path, history: list[dict], perceptual: bool):
    columns = ["epoch", "lambda", "l_con", "l_per", "total", "val_total"]
    if not perceptual:
        columns = ["epoch", "l_con", "total", "val_total"]
    lines = ["\t".join(columns)]
    for entry in history:
        cells = []
        for col in columns:
            value = entry.get(col)
            if value is None:
                cells.append("n/a")
            elif col == "epoch":
                cells.append(str(int(value)))
            else:
                cells.append(f"{value:.6f}")
        lines.append("\t".join(cells))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_train_tts(args, config: RunConfig, echo: Echo) -> int:
    out_dir = config.resolved_output_dir()
    rng = seed_everything(config.seed)
    pairs, vocab = _build_tts_dataset(args, config, out_dir, echo)
    train_set, val_set = _split(pairs, config.tts_val_fraction, rng)
    if not train_set:
        raise DataError("the TTS training split is empty; lower tts_val_fraction")
    echo(f"tts dataset: {len(pairs)} utterances (train={len(train_set)} val={len(val_set)})")

    perceptual_cfg = None
    predictor = None
    if args.perceptual == "on":
        ckpt = config.predictor_checkpoint or str(out_dir / "mosnet")
        if not Path(ckpt).exists():
            raise DataError(f"predictor checkpoint {ckpt} not found; run train-mos first")
        predictor = load_mos_predictor(ckpt, frozen=True)
        perceptual_cfg = config.perceptual_config()
        echo(f"perceptual training on; predictor={ckpt}")

    model = _tts_model_for(config, len(vocab))
    tts_dir = out_dir / "tts"
    model, history = train_tts(
        model,
        train_set,
        config.tts_training,
        perceptual_cfg=perceptual_cfg,
        predictor=predictor,
        val_set=val_set or None,
        out_dir=tts_dir,
        extra_meta={"vocab": vocab, "seed": config.seed},
    )
    _write_train_log(tts_dir / "train_log.tsv", history, perceptual=perceptual_cfg is not None)
    final = history[-1]
    if perceptual_cfg is not None:
        echo(
            f"final epoch: lambda={final['lambda']:.3f} l_con={final['l_con']:.4f} "
            f"l_per={final['l_per']:.4f} total={final['total']:.4f}"
        )
    else:
        echo(f"final epoch: l_con={final['l_con']:.4f}")
    echo(f"checkpoints under {tts_dir}")
    return EXIT_OK


def cmd_distill(args, config: RunConfig, echo: Echo) -> int:
    out_dir = config.resolved_output_dir()
    seed_everything(config.seed)
    manifest = load_manifest(
        _require(config.corpora.tts_manifest, "distill needs corpora.tts_manifest")
    )
    teacher, meta = _load_any_tts(args.teacher)
    if not isinstance(teacher, TransformerTts):
        raise DataError("--teacher must point at a transformer checkpoint")
    vocab = meta.get("vocab")
    if not vocab:
        raise DataError("teacher checkpoint does not carry a vocabulary")
    items = [
        (
            entry.utt_id,
            encode_text(entry.text, vocab).token_ids,
            _mel_for_entry(entry, "tts", config, out_dir),
        )
        for entry in manifest
    ]
    targets, report = distill_targets(teacher, items)
    for target in targets:
        assert int(target.durations.sum()) == target.mel.n_frames
    store = save_distilled_targets(out_dir / "distilled", targets)
    echo(f"distilled {len(targets)} of {len(items)} utterances into {store}")
    for utt_id, reason in report.excluded:
        echo(f"excluded {utt_id}: {reason}")
    return EXIT_OK


def cmd_synth(args, config: RunConfig, echo: Echo) -> int:
    out_dir = config.resolved_output_dir()
    seed_everything(config.seed)
    model, meta = _load_any_tts(args.checkpoint)
    vocab = meta.get("vocab")
    if not vocab:
        raise DataError("checkpoint does not carry a vocabulary")

    texts: list[tuple[str, str]] = []
    for i, text in enumerate(args.text):
        texts.append((f"text{i:03d}", text))
    if args.manifest:
        for entry in load_manifest(args.manifest):
            texts.append((entry.utt_id, entry.text))
    if not texts:
        raise UsageError("synth needs --text or --manifest")

    synth_dir = out_dir / "synth"
    for utt_id, text in texts:
        result = synthesize(model, encode_text(text, vocab), config.mel)
        write_mel_cache(synth_dir / f"{utt_id}.mel", result.mel)
        flag = " (truncated)" if result.truncated else ""
        echo(f"{utt_id}: {result.mel.n_frames} frames{flag}")
        if args.wav:
            wave = griffin_lim(result.mel, config.mel)
            write_wav(synth_dir / f"{utt_id}.wav", wave, config.mel.sample_rate)
    echo(f"wrote {len(texts)} syntheses to {synth_dir}")
    return EXIT_OK


def _reports_from_ratings(path) -> list[SystemReport]:
    records = load_ratings(path)
    by_system: dict[str, dict] = {}
    for rec in records:
        bucket = by_system.setdefault(rec.system_id, {"nat": [], "intel": []})
        if rec.test == "naturalness":
            bucket["nat"].append(rec.score)
        else:
            bucket["intel"].append(rec.score)
    reports = []
    for system_id in sorted(by_system):
        bucket = by_system[system_id]
        reports.append(
            SystemReport(
                system_id=system_id,
                mos_naturalness=mos_aggregate(bucket["nat"]) if bucket["nat"] else None,
                intelligibility=(
                    ScoreHistogram.from_scores(bucket["intel"]) if bucket["intel"] else None
                ),
            )
        )
    return reports


def cmd_eval(args, config: RunConfig, echo: Echo) -> int:
    out_dir = config.resolved_output_dir()
    if not args.ratings and not args.per:
        raise UsageError("eval needs --ratings and/or --per")

    reports = []
    records = None
    if args.ratings:
        reports = _reports_from_ratings(args.ratings)
        records = load_ratings(args.ratings)

    if args.per:
        pairs = pairs_from_files(*args.per)
        result = per_breakdown(pairs)
        existing = next((r for r in reports if r.system_id == args.system), None)
        if existing is None:
            reports.append(SystemReport(system_id=args.system, per=result))
        else:
            existing.per = result

    if args.t_test:
        if records is None:
            raise UsageError("--t-test needs --ratings")
        sys_a, sys_b = args.t_test
        scores = {}
        for name in (sys_a, sys_b):
            scores[name] = {
                (r.utt_id, r.rater_id): r.score
                for r in records
                if r.system_id == name and r.test == "naturalness"
            }
        shared = sorted(set(scores[sys_a]) & set(scores[sys_b]))
        if len(shared) < 2:
            raise DataError(f"fewer than two shared (utt, rater) pairs for {sys_a} vs {sys_b}")
        p = paired_t_test(
            [scores[sys_a][k] for k in shared], [scores[sys_b][k] for k in shared]
        )
        p_text = "n/a" if p is None else f"{p:.6g}"
        if reports:
            reports[0].extra[f"paired_t.{sys_a}_vs_{sys_b}"] = p_text

    if not reports:
        raise DataError("nothing to report")

    report_path = Path(args.report) if args.report else out_dir / "report.txt"
    write_metric_report(reports, report_path)
    echo(render_metric_report(reports).rstrip("\n"))
    echo(f"report written to {report_path}")

    if args.chart:
        tables = [
            (r.system_id, r.intelligibility) for r in reports if r.intelligibility is not None
        ]
        if not tables:
            raise DataError("--chart needs intelligibility ratings")
        stacked_bar_chart(tables, args.chart)
        echo(f"chart written to {args.chart}")
    return EXIT_OK


def cmd_plot(args, config: RunConfig, echo: Echo) -> int:
    out_dir = config.resolved_output_dir()
    reports = _reports_from_ratings(args.ratings)
    tables = [
        (r.system_id, r.intelligibility) for r in reports if r.intelligibility is not None
    ]
    if not tables:
        raise DataError("the ratings file holds no intelligibility scores")
    out = Path(args.out) if args.out else out_dir / "intelligibility.svg"
    stacked_bar_chart(tables, out)
    echo(f"chart written to {out}")
    return EXIT_OK


COMMANDS = {
    "prepare": cmd_prepare,
    "train-mos": cmd_train_mos,
    "train-tts": cmd_train_tts,
    "distill": cmd_distill,
    "synth": cmd_synth,
    "eval": cmd_eval,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = load_run_config(args.config, args.overrides)
        echo = Echo(timestamps=not args.no_timestamp)
        return COMMANDS[args.command](args, config, echo)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PerceptTtsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
