"""Versioned checkpoint directories: YAML metadata plus a tensor archive."""

from pathlib import Path

import torch
import yaml

from percept_tts.errors import DataError

META_FILE = "meta.yaml"
WEIGHTS_FILE = "weights.pt"


def save_checkpoint(directory, magic: str, state_dict, config: dict, extra: dict | None = None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {"magic": magic, "config": config}
    if extra:
        meta.update(extra)
    (directory / META_FILE).write_text(
        yaml.safe_dump(meta, sort_keys=True), encoding="utf-8"
    )
    torch.save(state_dict, directory / WEIGHTS_FILE)
    return directory


def load_checkpoint(directory, expected_magic: str):
    """Returns (state_dict, meta). Raises DataError on a bad or foreign checkpoint."""
    directory = Path(directory)
    meta_path = directory / META_FILE
    weights_path = directory / WEIGHTS_FILE
    if not meta_path.exists() or not weights_path.exists():
        raise DataError(f"{directory} is not a checkpoint directory")
    meta = yaml.safe_load(meta_path.read_text(encoding="utf-8"))
    if not isinstance(meta, dict) or meta.get("magic") != expected_magic:
        raise DataError(
            f"{directory}: magic {meta.get('magic') if isinstance(meta, dict) else None!r} "
            f"does not match expected {expected_magic!r}"
        )
    state_dict = torch.load(weights_path, map_location="cpu", weights_only=True)
    return state_dict, meta
