"""Boundary / context / semantic segmentation network for lung-infection CT slices."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import TrainConfig, load_config
from .decoder import DecoderOutputs
from .encoder import EncoderConfig, init_encoder
from .model import BCSNet, build_model

__all__ = [
    "BCSNet",
    "Checkpoint",
    "DecoderOutputs",
    "EncoderConfig",
    "TrainConfig",
    "build_model",
    "init_encoder",
    "load_checkpoint",
    "load_config",
    "save_checkpoint",
]
__version__ = "0.1.0"
