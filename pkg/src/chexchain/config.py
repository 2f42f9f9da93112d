"""Run configuration: one JSON file describing a complete run.

Layout (all keys shown; *italic* = optional)::

    {
      "seed": 0,
      "model": {
        "kind": "a" | "b1" | "b2",
        "num_labels": 5,
        "lstm_hidden": 33,            # chain kinds only
        "encoder": {                  # EncoderConfig fields
          "input_resolution": 64, "growth_rate": 10,
          "num_dense_blocks": 3, "convblocks_per_dense_block": 2,
          "initial_channels": 4, "transition_compression": 1.0
        }
      },
      "train": {                      # TrainConfig fields minus kind/seed
        "max_updates": 4000, "batch_size": 32, "lr_decay_factor": 0.9,
        "plateau_patience_evals": 1, "early_stop_updates": 10000,
        "eval_every_updates": 500, "selection_metric": "nll"
      },
      "data": {
        "image_dir": "...", "labels_csv": "...", "resolution": 64,
        "label_names": [...]          # omitted -> the 14-name chest schema
      },
      "augment": { ... } | null,      # omitted -> defaults; null -> disabled
      "ordering_mode": "alphabetical" # omitted -> derived from model kind
    }

Unknown keys anywhere are rejected; paths are validated before any compute.
Command-line flags override file values (flags win).
"""

import json
import os
from dataclasses import dataclass

from .augment import AugmentParams, default_augment_params
from .encoder import EncoderConfig
from .errors import ConfigurationError
from .models import ModelConfig
from .orderings import CHEST_LABEL_NAMES, ORDERING_MODES, ordering_for_kind
from .train import TrainConfig

_ENCODER_KEYS = {
    "input_resolution",
    "growth_rate",
    "num_dense_blocks",
    "convblocks_per_dense_block",
    "initial_channels",
    "transition_compression",
    "encoded_dim",
}
_MODEL_KEYS = {"kind", "num_labels", "lstm_hidden", "encoder"}
_TRAIN_KEYS = {
    "max_updates",
    "batch_size",
    "lr_decay_factor",
    "plateau_patience_evals",
    "early_stop_updates",
    "eval_every_updates",
    "selection_metric",
}
_DATA_KEYS = {"image_dir", "labels_csv", "resolution", "label_names"}
_AUGMENT_KEYS = {"max_translate_px", "rotate_range_deg", "scale_range", "fill_value"}
_TOP_KEYS = {"seed", "model", "train", "data", "augment", "ordering_mode"}


@dataclass
class RunConfig:
    seed: int
    model: ModelConfig
    train: TrainConfig
    image_dir: str
    labels_csv: str
    resolution: int
    label_names: tuple
    augment: AugmentParams  # None disables augmentation
    ordering_mode: str

    def validate_paths(self) -> None:
        if not os.path.isdir(self.image_dir):
            raise ConfigurationError(f"data.image_dir is not a directory: {self.image_dir}")
        if not os.path.isfile(self.labels_csv):
            raise ConfigurationError(f"data.labels_csv is not a file: {self.labels_csv}")


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigurationError(f"unknown config key {where}.{unknown[0]!r}")


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigurationError(f"missing config key {where}.{key!r}")
    return d[key]


def run_config_from_dict(raw: dict, seed_override: int = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError("config root must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "")

    md = _require(raw, "model", "")
    _reject_unknown(md, _MODEL_KEYS, "model")
    ed = _require(md, "encoder", "model")
    _reject_unknown(ed, _ENCODER_KEYS, "model.encoder")
    encoder = EncoderConfig(**ed)
    model = ModelConfig(
        kind=_require(md, "kind", "model"),
        encoder=encoder,
        num_labels=int(_require(md, "num_labels", "model")),
        lstm_hidden=int(md.get("lstm_hidden", 0)),
    )
    model.validate()

    seed = int(raw.get("seed", 0))
    if seed_override is not None:
        seed = int(seed_override)

    td = dict(raw.get("train", {}))
    _reject_unknown(td, _TRAIN_KEYS, "train")
    td.setdefault("max_updates", 10000)
    train = TrainConfig(model_kind=model.kind, seed=seed, **td)
    train.validate()

    dd = _require(raw, "data", "")
    _reject_unknown(dd, _DATA_KEYS, "data")
    resolution = int(_require(dd, "resolution", "data"))
    if resolution != encoder.input_resolution:
        raise ConfigurationError(
            f"data.resolution {resolution} != model.encoder.input_resolution "
            f"{encoder.input_resolution}"
        )
    label_names = tuple(dd.get("label_names", CHEST_LABEL_NAMES))
    if len(label_names) != model.num_labels:
        raise ConfigurationError(
            f"model.num_labels {model.num_labels} != {len(label_names)} label names"
        )

    if "augment" not in raw:
        augment = default_augment_params(resolution)
    elif raw["augment"] is None:
        augment = None
    else:
        ad = raw["augment"]
        _reject_unknown(ad, _AUGMENT_KEYS, "augment")
        augment = AugmentParams(
            max_translate_px=int(
                ad.get(
                    "max_translate_px",
                    default_augment_params(resolution).max_translate_px,
                )
            ),
            rotate_range_deg=tuple(ad.get("rotate_range_deg", (-15.0, 15.0))),
            scale_range=tuple(ad.get("scale_range", (0.8, 1.2))),
            fill_value=float(ad.get("fill_value", 0.0)),
        )
        augment.validate()

    ordering_mode = raw.get("ordering_mode", ordering_for_kind(model.kind))
    if ordering_mode not in ORDERING_MODES:
        raise ConfigurationError(f"unknown ordering_mode {ordering_mode!r}")

    return RunConfig(
        seed=seed,
        model=model,
        train=train,
        image_dir=str(_require(dd, "image_dir", "data")),
        labels_csv=str(_require(dd, "labels_csv", "data")),
        resolution=resolution,
        label_names=label_names,
        augment=augment,
        ordering_mode=ordering_mode,
    )


def load_run_config(path: str, seed_override: int = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    return run_config_from_dict(raw, seed_override=seed_override)


def run_config_to_dict(config: RunConfig) -> dict:
    """Effective configuration (flags already applied), echo-ready."""
    encoder = config.model.encoder
    d = {
        "seed": config.seed,
        "model": {
            "kind": config.model.kind,
            "num_labels": config.model.num_labels,
            "lstm_hidden": config.model.lstm_hidden,
            "encoder": {
                "input_resolution": encoder.input_resolution,
                "growth_rate": encoder.growth_rate,
                "num_dense_blocks": encoder.num_dense_blocks,
                "convblocks_per_dense_block": encoder.convblocks_per_dense_block,
                "initial_channels": encoder.initial_channels,
                "transition_compression": encoder.transition_compression,
            },
        },
        "train": {
            "max_updates": config.train.max_updates,
            "batch_size": config.train.batch_size,
            "lr_decay_factor": config.train.lr_decay_factor,
            "plateau_patience_evals": config.train.plateau_patience_evals,
            "early_stop_updates": config.train.early_stop_updates,
            "eval_every_updates": config.train.eval_every_updates,
            "selection_metric": config.train.selection_metric,
        },
        "data": {
            "image_dir": config.image_dir,
            "labels_csv": config.labels_csv,
            "resolution": config.resolution,
            "label_names": list(config.label_names),
        },
        "augment": None
        if config.augment is None
        else {
            "max_translate_px": config.augment.max_translate_px,
            "rotate_range_deg": list(config.augment.rotate_range_deg),
            "scale_range": list(config.augment.scale_range),
            "fill_value": config.augment.fill_value,
        },
        "ordering_mode": config.ordering_mode,
    }
    return d
