from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .encoder import EncoderConfig


@dataclass
class TrainConfig:
    image_size: tuple[int, int] = (64, 64)
    batch_size: int = 8
    epochs: int = 200
    learning_rate: float = 3e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    seed: int = 0
    disable_aggc: bool = False
    disable_sg: bool = False
    encoder_channels: tuple[int, int, int, int] = (16, 32, 64, 128)
    blocks_per_stage: int = 2
    decoder_width: int = 32
    boundary_width: int = 16
    weight_kernel: int = 31
    weight_lambda: float = 5.0
    data: str = "synthetic:20"
    save_every: int = 0
    out_dir: str = "runs/bcsnet"

    def __post_init__(self):
        size = self.image_size
        if isinstance(size, int):
            size = (size, size)
        self.image_size = tuple(int(s) for s in size)
        self.encoder_channels = tuple(int(c) for c in self.encoder_channels)
        if len(self.image_size) != 2 or any(s <= 0 or s % 16 for s in self.image_size):
            raise ValueError(f"image_size must be positive multiples of 16, got {self.image_size}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("adam betas must lie in [0, 1)")
        if self.weight_kernel < 1 or self.weight_kernel % 2 == 0:
            raise ValueError("weight_kernel must be a positive odd integer")
        if self.decoder_width < 1 or self.boundary_width < 1:
            raise ValueError("decoder_width and boundary_width must be >= 1")
        self.encoder_config()  # validates channels / blocks

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(self.encoder_channels, self.image_size, self.blocks_per_stage)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - set(known))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for k, v in d.items():
            default = known[k].default
            if isinstance(default, bool):
                if not isinstance(v, bool):
                    raise ValueError(f"config key {k!r} must be a boolean")
            elif isinstance(default, int) and not isinstance(default, bool):
                if isinstance(v, bool) or not isinstance(v, int):
                    raise ValueError(f"config key {k!r} must be an integer")
            elif isinstance(default, float):
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ValueError(f"config key {k!r} must be a number")
                v = float(v)
            elif isinstance(default, str) and not isinstance(v, str):
                raise ValueError(f"config key {k!r} must be a string")
            kwargs[k] = v
        return cls(**kwargs)


def load_config(path) -> TrainConfig:
    with Path(path).open("rb") as fh:
        return TrainConfig.from_dict(tomllib.load(fh))


def dump_config(config: TrainConfig) -> str:
    """Render as flat TOML that :func:`load_config` reads back."""
    lines = []
    for k, v in config.to_dict().items():
        if isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, str):
            s = '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
        elif isinstance(v, list):
            s = "[" + ", ".join(str(x) for x in v) + "]"
        else:
            s = repr(v)
        lines.append(f"{k} = {s}")
    return "\n".join(lines) + "\n"
