from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .checkpoint import Checkpoint, save_checkpoint
from .config import TrainConfig
from .data import DatasetRecord, load_dataset, load_slice, stack_records, synth_blobs
from .losses import make_weight_map, total_loss
from .metrics import MetricReport, evaluate_dataset
from .model import BCSNet, build_model

log = logging.getLogger(__name__)


@dataclass
class LossCurve:
    epochs: list = field(default_factory=list)  # one dict per epoch: total + components

    def __len__(self):
        return len(self.epochs)

    @property
    def totals(self) -> list[float]:
        return [e["total"] for e in self.epochs]

    def to_csv(self, path) -> None:
        if not self.epochs:
            return
        keys = list(self.epochs[0])
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch"] + keys)
            for i, e in enumerate(self.epochs, 1):
                w.writerow([i] + [repr(e[k]) for k in keys])


def resolve_dataset(spec: str, size, seed: int) -> list[DatasetRecord]:
    """``synthetic:<n>`` or a directory with images/ and masks/."""
    if spec.startswith("synthetic:"):
        try:
            n = int(spec.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad synthetic dataset spec {spec!r}") from None
        return synth_blobs(n, size, seed)
    return load_dataset(spec, size)


def model_from_config(config: TrainConfig, seed: int | None = None) -> BCSNet:
    return build_model(
        config.encoder_config(),
        config.seed if seed is None else seed,
        decoder_width=config.decoder_width,
        boundary_width=config.boundary_width,
        disable_aggc=config.disable_aggc,
        disable_sg=config.disable_sg,
    )


def model_from_checkpoint(ckpt: Checkpoint) -> BCSNet:
    model = model_from_config(ckpt.config)
    ckpt.load_into(model)
    return model.eval()


def _tensors(records, config: TrainConfig, dtype=torch.float32):
    images, masks, bounds = stack_records(records)
    eps = np.stack([make_weight_map(m[0], config.weight_kernel, config.weight_lambda) for m in masks])[:, None]
    return tuple(torch.from_numpy(np.ascontiguousarray(a)).to(dtype) for a in (images, masks, bounds, eps))


def train(config: TrainConfig, records=None, out_dir=None) -> tuple[Checkpoint, LossCurve]:
    """Adam over the total loss; returns the final checkpoint and per-epoch curve.

    ``records`` overrides ``config.data``. When ``out_dir`` is given, the final
    checkpoint (and every ``save_every`` epochs, if set) plus ``loss.csv`` are
    written there.
    """
    if records is None:
        records = resolve_dataset(config.data, config.image_size, config.seed)
    if not records:
        raise ValueError("training dataset is empty")
    images, masks, bounds, eps = _tensors(records, config)
    if tuple(images.shape[-2:]) != config.image_size:
        raise ValueError(f"records are {tuple(images.shape[-2:])}, config expects {config.image_size}")

    model = model_from_config(config)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate,
                           betas=(config.adam_beta1, config.adam_beta2))
    order_rng = np.random.default_rng([config.seed, 1])
    curve = LossCurve()
    n = len(records)
    out_dir = Path(out_dir) if out_dir is not None else None

    for epoch in range(1, config.epochs + 1):
        model.train()
        perm = order_rng.permutation(n)
        sums: dict[str, float] = {}
        for start in range(0, n, config.batch_size):
            idx = torch.from_numpy(perm[start:start + config.batch_size])
            outputs = model(images[idx])
            loss = total_loss(outputs, masks[idx], bounds[idx], eps[idx])
            parts = loss.components()
            bad = [k for k, v in parts.items() if not np.isfinite(v)]
            if bad or not torch.isfinite(loss.total):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}: {', '.join(bad) or 'total'}")
            opt.zero_grad(set_to_none=True)
            loss.total.backward()
            opt.step()
            parts["total"] = loss.total.item()
            for k, v in parts.items():
                sums[k] = sums.get(k, 0.0) + v * len(idx)
        curve.epochs.append({k: v / n for k, v in sums.items()})
        log.info("epoch %d/%d loss %.5f", epoch, config.epochs, curve.epochs[-1]["total"])
        if out_dir is not None and config.save_every and epoch % config.save_every == 0:
            save_checkpoint(Checkpoint.from_model(model, config, epoch), out_dir / f"ckpt_epoch{epoch:04d}.npz")

    ckpt = Checkpoint.from_model(model, config, config.epochs)
    if out_dir is not None:
        save_checkpoint(ckpt, out_dir / "ckpt.npz")
        curve.to_csv(out_dir / "loss.csv")
    return ckpt, curve


@torch.no_grad()
def predict_records(model: BCSNet, records, batch_size: int = 8) -> dict[str, np.ndarray]:
    """Id -> final S2 probability map (H x W float64) in inference mode."""
    model.eval()
    out = {}
    dtype = next(model.parameters()).dtype
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        x = torch.from_numpy(np.stack([r.slice.pixels for r in chunk])).to(dtype)
        s2 = model(x).s2[:, 0].double().numpy()
        for r, p in zip(chunk, s2):
            out[r.id] = p
    return out


def evaluate_records(model: BCSNet, records, threshold: float = 0.5) -> MetricReport:
    return evaluate_dataset(predict_records(model, records), records, threshold)


def predict(ckpt: Checkpoint, image_path, out_path) -> tuple[np.ndarray, np.ndarray]:
    """Write S2 (probability * 255) to ``out_path`` and the 0.5 mask next to it
    as ``<stem>_mask.png``. Returns (mask, probability)."""
    model = model_from_checkpoint(ckpt)
    sl = load_slice(image_path)
    if sl.shape != ckpt.config.image_size:
        raise ValueError(f"image {image_path} is {sl.shape[0]}x{sl.shape[1]}, "
                         f"checkpoint expects {ckpt.config.image_size[0]}x{ckpt.config.image_size[1]}")
    with torch.no_grad():
        prob = model(torch.from_numpy(sl.pixels[None])).s2[0, 0].double().numpy()
    mask = (prob >= 0.5).astype(np.uint8)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.round(prob * 255).astype(np.uint8)).save(out_path)
    Image.fromarray(mask * 255).save(mask_path_for(out_path))
    return mask, prob


def mask_path_for(out_path) -> Path:
    out_path = Path(out_path)
    return out_path.with_name(out_path.stem + "_mask.png")


def evaluate(ckpt: Checkpoint, dataset_root, out_csv=None) -> MetricReport:
    records = load_dataset(dataset_root, ckpt.config.image_size)
    report = evaluate_records(model_from_checkpoint(ckpt), records)
    if out_csv is not None:
        report.to_csv(out_csv)
    return report
