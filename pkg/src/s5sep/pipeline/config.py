"""Experiment configuration: typed sections, INI files and ``section.key=value`` overrides.

Precedence is CLI override > config file > preset defaults. Every key in
the INI file maps one-to-one onto a dataclass field below.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple

from s5sep.dsp import MelConfig, StftConfig
from s5sep.errors import InvalidInputError
from s5sep.scene import ToyCatalog
from s5sep.sed import SedConfig
from s5sep.separator import SeparatorConfig


@dataclass
class DataSection:
    base_seed: int = 0
    sample_rate_hz: int = 8000
    scene_length_s: float = 4.0
    n_channels: int = 2
    n_target_classes: int = 6
    n_interference_classes: int = 4
    noise_gain: float = 0.03
    min_duration_s: float = 1.0
    max_duration_s: float = 3.0
    rir_tail_gain: float = 0.5
    rir_decay_ms: float = 20.0
    n_val_scenes: int = 100
    n_test_scenes: int = 100


@dataclass
class StftSection:
    window_size: int = 512
    hop_size: int = 256


@dataclass
class MelSection:
    n_mels: int = 64
    f_min_hz: float = 0.0
    f_max_hz: Optional[float] = None
    log_floor: float = 1e-7


@dataclass
class SedSection:
    n_blocks: int = 4
    embed_dim: int = 96
    n_heads: int = 4
    time_subsample: int = 4
    mlp_ratio: float = 2.0


@dataclass
class SeparatorSection:
    widths: Tuple[int, ...] = (8, 16, 32, 64)
    conditioned_layers: Optional[Tuple[int, ...]] = None
    film_embed_dim: int = 32
    time_film_hidden: int = 32
    dprnn_hidden: int = 32
    norm_groups: int = 4


@dataclass
class TrainConfig:
    stage: int = 1
    total_steps: int = 2000
    warmup_steps: int = 200
    batch_size: int = 16
    base_lr: float = 1e-3
    layerwise_decay: float = 0.8
    lr_pretrained: float = 2e-4
    lr_dprnn: float = 5e-4
    lr_new: float = 1e-3
    lr_stage2_sed: float = 4e-4
    stage2_sed_layer_decay: float = 0.9
    lam: float = 0.5
    max_train_iterations: int = 3
    seed: int = 0
    time_film: bool = True
    injection: bool = True
    trainable_s2sed: bool = True
    dprnn: bool = True
    log_every: int = 50

    def __post_init__(self):
        if self.stage not in (1, 2):
            raise InvalidInputError(f"stage must be 1 or 2, got {self.stage}")
        if not 0 <= self.warmup_steps < self.total_steps:
            raise InvalidInputError("warmup_steps must be >= 0 and < total_steps")
        lrs = (self.base_lr, self.lr_pretrained, self.lr_dprnn, self.lr_new, self.lr_stage2_sed)
        if min(lrs) <= 0:
            raise InvalidInputError("all learning rates must be positive")
        if self.batch_size < 1 or self.max_train_iterations < 1:
            raise InvalidInputError("batch_size and max_train_iterations must be >= 1")

    @property
    def param_group_lrs(self) -> Dict[str, float]:
        return {
            "pretrained": self.lr_pretrained,
            "dprnn": self.lr_dprnn,
            "new": self.lr_new,
            "stage2_sed": self.lr_stage2_sed,
        }


@dataclass
class EvalSection:
    threshold: float = 0.5
    n_iters: Tuple[int, ...] = (1, 2, 3)
    n_scenes: int = 100
    split: str = "val"


def _default_stage2() -> TrainConfig:
    return TrainConfig(
        stage=2,
        total_steps=8000,
        warmup_steps=400,
        batch_size=4,
        base_lr=1e-3,
        layerwise_decay=0.9,
    )


@dataclass
class ExperimentConfig:
    data: DataSection = field(default_factory=DataSection)
    stft: StftSection = field(default_factory=StftSection)
    mel: MelSection = field(default_factory=MelSection)
    sed: SedSection = field(default_factory=SedSection)
    separator: SeparatorSection = field(default_factory=SeparatorSection)
    stage1: TrainConfig = field(default_factory=TrainConfig)
    stage2: TrainConfig = field(default_factory=_default_stage2)
    evaluate: EvalSection = field(default_factory=EvalSection)

    # -- derived component configs ---------------------------------------------

    def catalog(self) -> ToyCatalog:
        d = self.data
        return ToyCatalog(
            sample_rate_hz=d.sample_rate_hz,
            scene_length_s=d.scene_length_s,
            n_channels=d.n_channels,
            n_target_classes=d.n_target_classes,
            n_interference_classes=d.n_interference_classes,
            noise_gain=d.noise_gain,
            min_duration_s=d.min_duration_s,
            max_duration_s=d.max_duration_s,
            rir_tail_gain=d.rir_tail_gain,
            rir_decay_ms=d.rir_decay_ms,
        )

    def stft_config(self) -> StftConfig:
        return StftConfig(self.data.sample_rate_hz, self.stft.window_size, self.stft.hop_size)

    def mel_config(self) -> MelConfig:
        m = self.mel
        return MelConfig(m.n_mels, m.f_min_hz, m.f_max_hz, m.log_floor)

    def n_frames(self) -> int:
        n_samples = int(round(self.data.scene_length_s * self.data.sample_rate_hz))
        return self.stft_config().n_frames(n_samples)

    def sed_config(self) -> SedConfig:
        s = self.sed
        return SedConfig(
            n_mels=self.mel.n_mels,
            n_blocks=s.n_blocks,
            embed_dim=s.embed_dim,
            n_heads=s.n_heads,
            time_subsample=s.time_subsample,
            n_classes=self.data.n_target_classes,
            max_frames=max(self.n_frames(), s.time_subsample),
            mlp_ratio=s.mlp_ratio,
        )

    def separator_config(self, sed: Optional[SedConfig] = None) -> SeparatorConfig:
        s, t = self.separator, self.stage2
        return SeparatorConfig(
            n_mix_channels=self.data.n_channels,
            n_classes=self.data.n_target_classes,
            widths=tuple(s.widths),
            conditioned_layers=s.conditioned_layers,
            use_film=True,
            use_time_film=t.time_film,
            use_injection=t.injection,
            use_dprnn=t.dprnn,
            max_train_iterations=t.max_train_iterations,
            film_embed_dim=s.film_embed_dim,
            time_film_hidden=s.time_film_hidden,
            dprnn_hidden=s.dprnn_hidden,
            norm_groups=s.norm_groups,
            stft=self.stft_config(),
            mel=self.mel_config(),
            sed=sed or self.sed_config(),
        )

    # -- serialisation -----------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_ini(self) -> str:
        lines = []
        for sec in dataclasses.fields(self):
            lines.append(f"[{sec.name}]")
            obj = getattr(self, sec.name)
            for f in dataclasses.fields(obj):
                lines.append(f"{f.name} = {_format_value(getattr(obj, f.name))}")
            lines.append("")
        return "\n".join(lines)

    def validate(self) -> "ExperimentConfig":
        for sec in dataclasses.fields(self):
            obj = getattr(self, sec.name)
            if hasattr(obj, "__post_init__"):
                obj.__post_init__()
        return self

    def set(self, dotted_key: str, raw: str, validate: bool = True) -> None:
        """Parse ``raw`` into the field's type; ``validate=False`` defers cross-field checks."""
        section, _, key = dotted_key.partition(".")
        obj = getattr(self, section, None)
        if obj is None or not dataclasses.is_dataclass(obj) or not key:
            raise InvalidInputError(f"unknown config key {dotted_key!r}")
        hints = typing.get_type_hints(type(obj))
        if key not in hints:
            raise InvalidInputError(f"unknown config key {dotted_key!r}")
        value = _parse_value(hints[key], raw, dotted_key)
        setattr(obj, key, value)
        if validate and hasattr(obj, "__post_init__"):
            obj.__post_init__()


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ", ".join(str(x) for x in v)
    return str(v)


def _parse_value(tp, raw: str, key: str):
    raw = str(raw).strip()
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union and type(None) in args:
        if raw.lower() in ("none", ""):
            return None
        inner = [a for a in args if a is not type(None)][0]
        return _parse_value(inner, raw, key)
    try:
        if origin in (tuple, Tuple):
            return tuple(int(x) for x in raw.replace(",", " ").split())
        if tp is bool:
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if tp is int:
            return int(raw)
        if tp is float:
            return float(raw)
        return raw
    except ValueError:
        raise InvalidInputError(f"cannot parse {raw!r} for {key}") from None


def apply_overrides(config: ExperimentConfig, overrides: Iterable[str]) -> ExperimentConfig:
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise InvalidInputError(f"override {item!r} is not of the form section.key=value")
        config.set(key.strip(), value, validate=False)
    return config.validate()


def load_config(path: Optional[Path] = None, preset: str = "desk") -> ExperimentConfig:
    config = preset_config(preset)
    if path is None:
        return config
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise InvalidInputError(f"cannot read config file {path}")
    for section in parser.sections():
        for key, value in parser.items(section):
            config.set(f"{section}.{key}", value, validate=False)
    return config.validate()


def preset_config(name: str = "desk") -> ExperimentConfig:
    """``desk``: minutes on one CPU core. ``full``: the large-scale reference setting."""
    if name == "desk":
        return ExperimentConfig()
    if name == "full":
        cfg = ExperimentConfig()
        cfg.data = DataSection(
            sample_rate_hz=32000,
            scene_length_s=10.0,
            n_channels=4,
            n_target_classes=18,
            n_interference_classes=94,
            min_duration_s=1.0,
            max_duration_s=5.0,
        )
        cfg.stft = StftSection(window_size=2048, hop_size=160)
        cfg.mel = MelSection(n_mels=128)
        cfg.sed = SedSection(n_blocks=12, embed_dim=768, n_heads=12, time_subsample=4)
        cfg.separator = SeparatorSection(widths=(32, 64, 128, 256, 384, 384))
        cfg.stage1 = TrainConfig(stage=1, total_steps=22000, warmup_steps=4000, batch_size=32,
                                 base_lr=1e-3, layerwise_decay=0.8)
        cfg.stage2 = TrainConfig(stage=2, total_steps=450000, warmup_steps=12000, batch_size=8,
                                 base_lr=1e-3, layerwise_decay=0.9)
        cfg.evaluate = EvalSection(n_iters=tuple(range(1, 11)))
        return cfg
    raise InvalidInputError(f"unknown preset {name!r}; expected 'desk' or 'full'")
