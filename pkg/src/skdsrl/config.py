"""Strict JSON run configuration: unknown keys rejected, defaults echoed.

One document carries every knob of a run, grouped by module:

    {
      "synthetic":   {...SyntheticConfig fields...},
      "augment":     {...AugmentConfig fields...},
      "model":       {...ModelSpec fields...},
      "train":       {...TrainConfig fields (minus hp/paths)...},
      "hyperparams": {"tau": ..., "alpha": ..., "beta": ...}
    }

Every section and field is optional; omitted values take the §-matching
library defaults and the fully resolved document is written next to the
run's outputs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .augment import AugmentConfig
from .data import SyntheticConfig
from .losses import HyperParams
from .model import ModelSpec
from .train import TrainConfig


class ConfigError(ValueError):
    """Invalid run config; the message names the offending key path."""


@dataclass
class RunConfig:
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    model: ModelSpec = field(default_factory=lambda: ModelSpec.for_arch("toy3d", 4))
    train: TrainConfig = field(default_factory=TrainConfig)
    hyperparams: HyperParams = field(default_factory=HyperParams)

    def train_config(self, **overrides) -> TrainConfig:
        return dataclasses.replace(self.train, hp=self.hyperparams, **overrides)


_SECTIONS = {
    "synthetic": SyntheticConfig,
    "augment": AugmentConfig,
    "model": ModelSpec,
    "train": TrainConfig,
    "hyperparams": HyperParams,
}

# TrainConfig fields owned by the CLI (paths) or by other sections (hp)
_TRAIN_EXCLUDED = {"hp", "checkpoint_dir", "metrics_path"}


def _build_section(name: str, cls, payload: dict):
    if not isinstance(payload, dict):
        raise ConfigError(f"{name}: expected an object")
    allowed = {f.name for f in dataclasses.fields(cls)}
    if name == "train":
        allowed -= _TRAIN_EXCLUDED
    kwargs = {}
    for key, value in payload.items():
        if key not in allowed:
            raise ConfigError(f"{name}.{key}: unknown key")
        f = next(f for f in dataclasses.fields(cls) if f.name == key)
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("top level: expected an object")
    for key in doc:
        if key not in _SECTIONS:
            raise ConfigError(f"{key}: unknown section")
    sections = {
        name: _build_section(name, cls, doc.get(name, {}))
        for name, cls in _SECTIONS.items()
    }
    return RunConfig(**sections)


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    return parse_config(doc)


def resolved_dict(cfg: RunConfig) -> dict:
    out = {}
    for name, cls in _SECTIONS.items():
        section = dataclasses.asdict(getattr(cfg, name))
        if name == "train":
            for key in _TRAIN_EXCLUDED:
                section.pop(key, None)
        out[name] = section
    return out


def echo_config(cfg: RunConfig, out_dir) -> Path:
    """Write the fully resolved config next to the run outputs."""
    path = Path(out_dir) / "config.resolved.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(resolved_dict(cfg), indent=2, sort_keys=True) + "\n")
    return path
