"""Single-file named-tensor checkpoints.

The file is a zip of ``.npy`` members (so ``numpy.load`` can open it) plus a
``manifest.json`` with the format version, epoch and config. Members are
written in sorted order with fixed timestamps so identical contents give
identical bytes.
"""
from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig

FORMAT_VERSION = "bcsnet-ckpt/1"
_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass
class Checkpoint:
    params: dict  # name -> np.ndarray
    config: TrainConfig
    epoch: int = 0
    version: str = FORMAT_VERSION

    @classmethod
    def from_model(cls, model: torch.nn.Module, config: TrainConfig, epoch: int) -> "Checkpoint":
        params = {k: v.detach().cpu().numpy().copy() for k, v in model.state_dict().items()}
        return cls(params, config, epoch)

    def load_into(self, model: torch.nn.Module) -> torch.nn.Module:
        state = {k: torch.from_numpy(np.array(v)) for k, v in self.params.items()}
        model.load_state_dict(state, strict=True)
        return model


def _member(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    return info


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": ckpt.version,
        "epoch": int(ckpt.epoch),
        "config": ckpt.config.to_dict(),
        "tensors": sorted(ckpt.params),
    }
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr(_member("manifest.json"), json.dumps(manifest, sort_keys=True, indent=1))
        for name in sorted(ckpt.params):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.array(ckpt.params[name], order="C"), allow_pickle=False)
            zf.writestr(_member(name + ".npy"), buf.getvalue())
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    try:
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read("manifest.json"))
            if manifest.get("version") != FORMAT_VERSION:
                raise ValueError(f"{path}: unsupported checkpoint version {manifest.get('version')!r}")
            params = {}
            for name in manifest["tensors"]:
                with zf.open(name + ".npy") as fh:
                    params[name] = np.lib.format.read_array(io.BytesIO(fh.read()), allow_pickle=False)
    except (zipfile.BadZipFile, KeyError) as exc:
        raise ValueError(f"{path}: not a valid checkpoint ({exc})") from exc
    return Checkpoint(params, TrainConfig.from_dict(manifest["config"]), manifest["epoch"], manifest["version"])
