"""Run configuration: one YAML file plus last-wins command-line overrides."""

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from percept_tts.dataio.mel import MelConfig
from percept_tts.errors import DataError, UsageError
from percept_tts.mosnet.model import MosPredictorConfig
from percept_tts.mosnet.train import MosTrainConfig
from percept_tts.perceptual.schedule import LambdaSchedule
from percept_tts.perceptual.train import PerceptualTrainingConfig, TtsTrainConfig

HOME_ENV_VAR = "PERCEPT_TTS_HOME"

MODEL_FAMILIES = ("transformer", "fastspeech")


@dataclass
class CorporaConfig:
    tts_manifest: str | None = None
    mos_manifest: str | None = None
    ratings: str | None = None
    distilled_dir: str | None = None


@dataclass
class RunConfig:
    seed: int = 1234
    output_dir: str = "run"
    family: str = "transformer"
    mel: MelConfig = field(default_factory=MelConfig)
    corpora: CorporaConfig = field(default_factory=CorporaConfig)
    predictor: MosPredictorConfig = field(default_factory=MosPredictorConfig)
    mos_training: MosTrainConfig = field(default_factory=MosTrainConfig)
    mos_val_fraction: float = 0.2
    assumed_mos: float = 5.0
    schedule: LambdaSchedule = field(
        default_factory=lambda: LambdaSchedule(90.0, 1.0, 20.0)
    )
    tts_training: TtsTrainConfig = field(default_factory=TtsTrainConfig)
    mos_target: float = 5.0
    predictor_input: str = "post_net"
    predictor_checkpoint: str | None = None
    mel_adapter_scale: float = 1.0
    mel_adapter_shift: float = 0.0
    transformer: dict = field(default_factory=dict)  # size overrides
    fastspeech: dict = field(default_factory=dict)
    tts_val_fraction: float = 0.2

    def __post_init__(self):
        if self.family not in MODEL_FAMILIES:
            raise DataError(f"unknown model family {self.family!r}")

    def resolved_output_dir(self) -> Path:
        out = Path(self.output_dir)
        if not out.is_absolute():
            root = os.environ.get(HOME_ENV_VAR)
            if root:
                out = Path(root) / out
        return out

    def perceptual_config(self) -> PerceptualTrainingConfig:
        return PerceptualTrainingConfig(
            schedule=self.schedule,
            mos_target=self.mos_target,
            predictor_input=self.predictor_input,
            predictor_checkpoint=self.predictor_checkpoint,
            mel_adapter_scale=self.mel_adapter_scale,
            mel_adapter_shift=self.mel_adapter_shift,
        )


def _build_dataclass(cls, data: dict, what: str):
    fields = set(cls.__dataclass_fields__)
    unknown = set(data) - fields
    if unknown:
        raise DataError(f"unknown {what} keys: {sorted(unknown)}")
    coerced = dict(data)
    for key in ("conv_channels", "fc_sizes"):
        if key in coerced and isinstance(coerced[key], list):
            coerced[key] = tuple(coerced[key])
    return cls(**coerced)


def run_config_from_dict(data: dict) -> RunConfig:
    data = dict(data or {})
    kwargs = {}
    if "mel" in data:
        kwargs["mel"] = _build_dataclass(MelConfig, data.pop("mel"), "mel")
    if "corpora" in data:
        kwargs["corpora"] = _build_dataclass(CorporaConfig, data.pop("corpora"), "corpora")
    if "predictor" in data:
        kwargs["predictor"] = _build_dataclass(
            MosPredictorConfig, data.pop("predictor"), "predictor"
        )
    if "mos_training" in data:
        kwargs["mos_training"] = _build_dataclass(
            MosTrainConfig, data.pop("mos_training"), "mos_training"
        )
    if "schedule" in data:
        schedule = data.pop("schedule")
        kwargs["schedule"] = LambdaSchedule(
            lambda0=float(schedule.get("lambda0", 90.0)),
            decay_per_epoch=float(schedule.get("decay_per_epoch", 1.0)),
            lambda_min=float(schedule.get("lambda_min", 20.0)),
        )
    if "tts_training" in data:
        kwargs["tts_training"] = _build_dataclass(
            TtsTrainConfig, data.pop("tts_training"), "tts_training"
        )
    allowed = set(RunConfig.__dataclass_fields__)
    unknown = set(data) - allowed
    if unknown:
        raise DataError(f"unknown config keys: {sorted(unknown)}")
    kwargs.update(data)
    return RunConfig(**kwargs)


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply dotted key=value pairs; later entries win."""
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        value = yaml.safe_load(raw)
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise UsageError(f"override {item!r} descends into a non-section value")
        node[parts[-1]] = value
    return data


def load_run_config(path=None, overrides: list[str] | None = None) -> RunConfig:
    data = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise DataError(f"config file {path} does not exist")
        loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise DataError(f"config file {path} must hold a mapping")
        data = loaded
    apply_overrides(data, overrides or [])
    return run_config_from_dict(data)
