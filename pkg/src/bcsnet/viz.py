from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from matplotlib import colormaps
from PIL import Image, ImageDraw

GUTTER = 4
HEADER = 14
LABELS = ("image", "mask", "S2", "Sb", "Ss", "As(L2)")


def _gray(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.round(np.clip(x, 0, 1) * 255).astype(np.uint8)[..., None], 3, axis=-1)


def _heat(x: np.ndarray) -> np.ndarray:
    lo, hi = float(x.min()), float(x.max())
    norm = (x - lo) / (hi - lo) if hi > lo else np.zeros_like(x)
    return np.round(colormaps["inferno"](norm)[..., :3] * 255).astype(np.uint8)


def panel_maps(model, record) -> dict[str, np.ndarray]:
    """The six H x W maps shown in the panel, keyed by label."""
    model.eval()
    dtype = next(model.parameters()).dtype
    x = torch.from_numpy(record.slice.pixels[None]).to(dtype)
    with torch.no_grad():
        out = model(x, return_aux=True)
        a_s = F.interpolate(out.aux["level2"]["attention"], size=x.shape[-2:], mode="bilinear",
                            align_corners=False)
    return {
        "image": record.slice.pixels[0],
        "mask": record.mask.astype(np.float64),
        "S2": out.s2[0, 0].double().numpy(),
        "Sb": out.sb[0, 0].double().numpy(),
        "Ss": out.ss[0, 0].double().numpy(),
        "As(L2)": a_s[0, 0].double().numpy(),
    }


def visualize(model, record, out_path=None) -> np.ndarray:
    """Labelled six-panel strip: input, GT, S2, Sb, Ss and the level-2 spatial
    attention as a heat map. Width is 6 * W + 7 * GUTTER."""
    maps = panel_maps(model, record)
    h, w = record.mask.shape
    canvas = np.full((HEADER + h + GUTTER, 6 * w + 7 * GUTTER, 3), 255, np.uint8)
    for i, label in enumerate(LABELS):
        x0 = GUTTER + i * (w + GUTTER)
        tile = _heat(maps[label]) if label.startswith("As") else _gray(maps[label])
        canvas[HEADER:HEADER + h, x0:x0 + w] = tile
    img = Image.fromarray(canvas)
    draw = ImageDraw.Draw(img)
    for i, label in enumerate(LABELS):
        draw.text((GUTTER + i * (w + GUTTER) + 1, 1), label, fill=(0, 0, 0))
    if out_path is not None:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        img.save(out_path)
    return np.asarray(img)
