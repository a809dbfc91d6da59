"""Run configuration files.

The format is one ``section.key = value`` assignment per line; ``#`` starts
a comment. Values are JSON literals (``true``, ``0.2``, ``[5, 5]``,
``"pesq"``); a bare word is read as a string. Sections:

``train``
    epochs, number_of_samples (100), history_portion (0.2), target_s (1.0),
    include_noisy_in_d (true), learnable_sigmoid (true),
    input_normalization (false), metric ("synthetic" | "pesq" | "stoi"),
    optimizer ("adam"), lr_g, lr_d (5e-4), seed, buffer_store
    ("waveform" | "magnitude"), buffer_max_items (null = unbounded),
    buffer_memory_budget (bytes), scoring_jobs, checkpoint_every.
``stft``
    fft_size (512), hop (256), window ("hann").
``generator``
    blstm_layers (2), blstm_width (200), fc_width (300), output_bins (257),
    mask_floor (0.05), leaky_slope (0.3), beta (1.2), input_compression
    ("none" | "log1p"). The sigmoid and normalization toggles come from
    ``train``; input normalization applies to both networks.
``discriminator``
    conv_layers (4), filters (15), kernel ([5, 5]), fc_widths ([50, 10]),
    leaky_slope (0.3), power_iterations (1), input_bins (257).
``paths``
    dataset_root, output_dir. Relative paths resolve against the config file.
``metric``
    pesq_mode ("wb" | "nb").

Ablations are pure config. The reduced recipe is
``train.include_noisy_in_d = false``, ``train.history_portion = 0.1``,
``train.learnable_sigmoid = false``; ``configs/ablation/`` holds files that
switch the three back on one at a time.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .discriminator import DiscriminatorConfig
from .dsp import StftConfig
from .generator import GeneratorConfig
from .trainer import TrainingConfig


class ConfigError(ValueError):
    """Configuration problem; ``field`` is the dotted path of the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class PathsConfig:
    dataset_root: str | None = None
    output_dir: str = "runs/default"


@dataclass(frozen=True)
class MetricConfig:
    pesq_mode: str = "wb"

    def __post_init__(self):
        if self.pesq_mode not in ("wb", "nb"):
            raise ValueError("pesq_mode must be 'wb' or 'nb'")


# model toggles owned by the train section
_TRAIN_OWNED = {
    "generator": {"learnable_sigmoid", "input_normalization"},
    "discriminator": {"input_normalization"},
}

SECTIONS = {
    "train": TrainingConfig,
    "stft": StftConfig,
    "generator": GeneratorConfig,
    "discriminator": DiscriminatorConfig,
    "paths": PathsConfig,
    "metric": MetricConfig,
}


@dataclass(frozen=True)
class RunConfig:
    train: TrainingConfig = field(default_factory=TrainingConfig)
    stft: StftConfig = field(default_factory=StftConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)

    def __post_init__(self):
        if self.stft.n_bins != self.generator.output_bins:
            raise ConfigError(
                "generator.output_bins",
                f"{self.generator.output_bins} != stft.fft_size/2 + 1 = {self.stft.n_bins}",
            )
        # keep the generator section consistent with the train toggles
        object.__setattr__(self, "generator", dataclasses.replace(
            self.generator,
            learnable_sigmoid=self.train.learnable_sigmoid,
            input_normalization=self.train.input_normalization,
        ))
        object.__setattr__(self, "discriminator", dataclasses.replace(
            self.discriminator, input_normalization=self.train.input_normalization,
        ))

    def to_flat(self) -> dict[str, object]:
        flat = {}
        for section in SECTIONS:
            obj = getattr(self, section)
            for f in fields(obj):
                if f.name in _TRAIN_OWNED.get(section, ()):
                    continue
                value = getattr(obj, f.name)
                flat[f"{section}.{f.name}"] = list(value) if isinstance(value, tuple) else value
        return flat


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _field_types(cls) -> dict[str, object]:
    return {f.name: f for f in fields(cls)}


def _coerce(path: str, f: dataclasses.Field, value):
    default = f.default if f.default is not dataclasses.MISSING else None
    if f.default is dataclasses.MISSING and f.default_factory is not dataclasses.MISSING:
        default = f.default_factory()
    if value is None or default is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return tuple(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(path, f"expected a string, got {value!r}")
    return value


def from_flat(flat: dict[str, object]) -> RunConfig:
    sections: dict[str, dict] = {name: {} for name in SECTIONS}
    for key, value in flat.items():
        section, _, name = key.partition(".")
        if section not in SECTIONS or not name:
            raise ConfigError(key, "unknown section")
        known = _field_types(SECTIONS[section])
        if name not in known or name in _TRAIN_OWNED.get(section, ()):
            raise ConfigError(key, "unknown key")
        sections[section][name] = _coerce(key, known[name], value)
    built = {}
    for section, kwargs in sections.items():
        try:
            built[section] = SECTIONS[section](**kwargs)
        except ValueError as exc:
            msg = str(exc)
            bad = next((k for k in kwargs if k in msg), None)
            raise ConfigError(f"{section}.{bad}" if bad else section, msg) from exc
    return RunConfig(**built)


def parse_config(text: str) -> RunConfig:
    flat = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}", f"expected 'section.key = value', got {raw!r}")
        if key in flat:
            raise ConfigError(key, f"duplicate key on line {lineno}")
        flat[key] = _parse_value(value.strip())
    return from_flat(flat)


def dump_config(cfg: RunConfig) -> str:
    lines = []
    current = None
    for key, value in cfg.to_flat().items():
        section = key.split(".", 1)[0]
        if section != current:
            if current is not None:
                lines.append("")
            lines.append(f"# {section}")
            current = section
        lines.append(f"{key} = {json.dumps(value)}")
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config ({exc})") from exc
    cfg = parse_config(text)
    base = path.parent
    paths = cfg.paths
    resolved = PathsConfig(
        dataset_root=str((base / paths.dataset_root).resolve()) if paths.dataset_root else None,
        output_dir=str((base / paths.output_dir).resolve()),
    )
    return dataclasses.replace(cfg, paths=resolved)


def save_config(cfg: RunConfig, path) -> Path:
    path = Path(path)
    path.write_text(dump_config(cfg))
    return path
