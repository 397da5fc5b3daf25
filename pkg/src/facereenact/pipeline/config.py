"""Training configuration: a flat ``key = value`` file under one ``[train]`` section.

Every key has a default; unknown keys are rejected so a typo never silently
falls back to a default.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path

from ..adversarial import LossWeights
from ..generator import GeneratorConfig

SECTION = "train"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    # optimizer
    lr_generator: float = 2e-5
    lr_discriminator: float = 1e-5
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # loss weights
    lambda_gan: float = 10.0
    lambda_c: float = 5.0
    lambda_local: float = 5.0
    # schedule
    steps: int = 20000
    batch_size: int = 2
    log_every: int = 100
    checkpoint_every: int = 1000
    # data
    resolution: int = 64
    n_identities: int = 200
    frames_per_identity: int = 8
    data_seed: int = 0
    heatmap_variance: float = 3.0
    shape_adaptation: str = "cross"  # cross | always | never
    # model
    seed: int = 0
    use_local_net: bool = True
    width_scale: float = 1.0
    power_iters: int = 1
    disc_scales: int = 2
    perceptual_seed: int = 1234
    perceptual_weights: str = ""
    # single-pair harness
    overfit_mode: bool = False
    overfit_lr: float = 2e-4

    def __post_init__(self):
        if self.shape_adaptation not in ("cross", "always", "never"):
            raise ConfigError(f"shape_adaptation must be cross/always/never, got {self.shape_adaptation!r}")
        for key in ("steps", "batch_size", "resolution", "n_identities", "power_iters", "disc_scales"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be positive")
        if self.frames_per_identity < 2:
            raise ConfigError("frames_per_identity must be at least 2")
        if self.width_scale <= 0:
            raise ConfigError("width_scale must be positive")

    # ----------------------------------------------------------- derived
    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_gan, self.lambda_c, self.lambda_local)

    @property
    def effective_lr(self) -> tuple:
        """``(generator, discriminator)`` learning rates after the overfit override."""
        if self.overfit_mode:
            ratio = self.lr_discriminator / self.lr_generator
            return self.overfit_lr, self.overfit_lr * ratio
        return self.lr_generator, self.lr_discriminator

    def generator_config(self) -> GeneratorConfig:
        def w(values):
            return tuple(max(4, int(round(v * self.width_scale))) for v in values)

        fusion = w((128, 64, 32))
        return GeneratorConfig(
            resolution=self.resolution,
            flow_widths=w((64, 128, 256, 256)),
            flow_out_width=w((32,))[0],
            local_widths=w((32, 64, 128)),
            appearance_widths=w((32, 64, 128)),
            feature_channels=fusion[0],
            fusion_channels=fusion,
            use_local_net=self.use_local_net,
            heatmap_variance=self.heatmap_variance,
        )

    def disc_widths(self) -> tuple:
        return tuple(max(4, int(round(v * self.width_scale))) for v in (64, 128, 256))

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    # ---------------------------------------------------------- serialization
    def to_text(self) -> str:
        lines = [f"[{SECTION}]"]
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "TrainConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None
        extra = [s for s in parser.sections() if s != SECTION]
        if extra:
            raise ConfigError(f"{source}: unknown section(s) {extra}")
        if not parser.has_section(SECTION):
            return cls()
        fields = {f.name: f for f in dataclasses.fields(cls)}
        values = {}
        for key, raw in parser.items(SECTION):
            if key not in fields:
                raise ConfigError(f"{source}: unknown key {key!r}")
            values[key] = _coerce(fields[key].type, raw, key, source)
        return cls(**values)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        path = Path(path)
        return cls.from_text(path.read_text(), str(path))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())


def _coerce(type_name, raw: str, key: str, source: str):
    raw = raw.strip()
    try:
        if type_name in (bool, "bool"):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if type_name in (int, "int"):
            return int(raw)
        if type_name in (float, "float"):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{source}: bad value for {key}: {raw!r}") from None
