"""Experiment configuration and its flat ``section.key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


def _ints(text) -> tuple[int, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)


def _strs(text) -> tuple[str, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(str(v) for v in text)
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def _shape(text):
    if text is None or isinstance(text, tuple):
        return text
    text = str(text).strip().lower()
    if text in ("", "auto", "none"):
        return None
    parts = text.replace("*", "x").split("x")
    if len(parts) != 2:
        raise ConfigError(f"shape must look like RxK, got {text!r}")
    return (int(parts[0]), int(parts[1]))


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _opt_int(text):
    if text is None or str(text).strip().lower() in ("", "none", "auto"):
        return None
    return int(text)


def _with(parse):
    return {"parse": parse}


@dataclass
class DataConfig:
    source: str = "synthetic"  # "synthetic" or a CSV path
    name: str = "synthetic"
    profile: str = "none"  # nbaiot | ciciot2022 | none
    label_column: str = "label"
    drop_fields: tuple[str, ...] = field(default=(), metadata=_with(_strs))
    image_shape: tuple[int, int] | None = field(default=None, metadata=_with(_shape))
    patch_shape: tuple[int, int] | None = field(default=None, metadata=_with(_shape))


@dataclass
class SyntheticConfig:
    classes: int = 9
    dim: int = 115
    per_class: int = 200
    separation: float = 10.0
    informative_rank: int | None = field(default=None, metadata=_with(_opt_int))


@dataclass
class SplitConfig:
    test_fraction: float = 0.2
    stratified: bool = field(default=True, metadata=_with(_bool))


@dataclass
class GridConfig:
    latent_dims: tuple[int, ...] = field(default=(2, 6, 10, 14), metadata=_with(_ints))
    encoders: tuple[str, ...] = field(default=("vae", "vit"), metadata=_with(_strs))
    classifiers: tuple[str, ...] = field(default=("DNN", "LSTM", "BLSTM", "GRU", "sRNN"), metadata=_with(_strs))
    repeats: int = 1
    workers: int = 1


@dataclass
class VaeTrainConfig:
    epochs: int = 30
    batch: int = 128
    lr: float = 1e-3
    hidden: tuple[int, ...] = field(default=(64, 32), metadata=_with(_ints))


@dataclass
class VitTrainConfig:
    epochs: int = 5
    batch: int = 128
    lr: float = 1e-3
    embed_dim: int = 32
    num_heads: int = 4
    depth: int = 2
    mlp_hidden: int = 64
    dropout: float = 0.1


@dataclass
class ClassifierTrainConfig:
    epochs: int = 20
    batch: int = 128
    lr: float = 1e-3
    widths: tuple[int, ...] = field(default=(64, 64, 32, 16), metadata=_with(_ints))


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "out"


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    vae: VaeTrainConfig = field(default_factory=VaeTrainConfig)
    vit: VitTrainConfig = field(default_factory=VitTrainConfig)
    classifier: ClassifierTrainConfig = field(default_factory=ClassifierTrainConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def set(self, key: str, value) -> None:
        section, _, name = key.partition(".")
        if not name or not hasattr(self, section):
            raise ConfigError(f"unknown config key {key!r}")
        sub = getattr(self, section)
        fields = {f.name: f for f in dataclasses.fields(sub)}
        if name not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        f = fields[name]
        parse = f.metadata.get("parse")
        if parse is None:
            default = f.default
            parse = {int: int, float: float, str: str, bool: _bool}[type(default)]
        try:
            setattr(sub, name, parse(value))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: {exc}") from None

    def items(self):
        for key, value, _ in self._fields():
            yield key, value

    def _fields(self):
        for section in dataclasses.fields(self):
            sub = getattr(self, section.name)
            for f in dataclasses.fields(sub):
                yield f"{section.name}.{f.name}", getattr(sub, f.name), f

    def validate(self) -> None:
        g = self.grid
        if not g.encoders:
            raise ConfigError("grid.encoders is empty")
        if not g.classifiers:
            raise ConfigError("grid.classifiers is empty")
        if not g.latent_dims or min(g.latent_dims) < 1:
            raise ConfigError("grid.latent_dims must be positive")
        bad = set(e.lower() for e in g.encoders) - {"vae", "vit"}
        if bad:
            raise ConfigError(f"unknown encoders {sorted(bad)}")
        if g.repeats < 1 or g.workers < 1:
            raise ConfigError("grid.repeats and grid.workers must be >= 1")


def format_value(value, shape: bool = False) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if shape:
            return f"{value[0]}x{value[1]}"
        return ",".join(str(v) for v in value)
    return str(value)


def parse_lines(lines) -> list[tuple[str, str]]:
    pairs = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        pairs.append((key.strip(), value.strip()))
    return pairs


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Defaults, then the file (if any), then ``key=value`` overrides in order."""
    cfg = ExperimentConfig()
    if path is not None:
        for key, value in parse_lines(Path(path).read_text(encoding="utf-8").splitlines()):
            cfg.set(key, value)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override must be key=value, got {item!r}")
        cfg.set(key.strip(), value.strip())
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {format_value(v, f.metadata.get('parse') is _shape)}\n" for k, v, f in cfg._fields())
