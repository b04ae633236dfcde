"""CT slice / mask loading, boundary labels, resizing, splitting, and the
synthetic blob generator used for desk-scale training."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

CROSS = ndimage.generate_binary_structure(2, 1)


@dataclass
class CTSlice:
    pixels: np.ndarray  # 3 x H x W float32 in [0, 1], channels identical
    source_id: str = ""

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[0] != 3:
            raise ValueError(f"slice must be 3 x H x W, got {p.shape}")
        if p.shape[1] == 0 or p.shape[2] == 0:
            raise ValueError("slice has zero size")
        if p.min() < 0 or p.max() > 1:
            raise ValueError("slice values must lie in [0, 1]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[1], self.pixels.shape[2]


@dataclass
class DatasetRecord:
    slice: CTSlice
    mask: np.ndarray  # H x W uint8 in {0, 1}
    boundary: np.ndarray  # H x W uint8 in {0, 1}, subset of mask
    id: str

    def __post_init__(self):
        hw = self.slice.shape
        for name in ("mask", "boundary"):
            m = getattr(self, name)
            if m.shape != hw:
                raise ValueError(f"record {self.id}: {name} is {m.shape}, slice is {hw}")
            if not np.isin(m, (0, 1)).all():
                raise ValueError(f"record {self.id}: {name} is not binary")


@dataclass
class DatasetSplit:
    train: list
    test: list
    seed: int


def _open(path) -> Image.Image:
    path = Path(path)
    try:
        img = Image.open(path)
        img.load()
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    if img.width == 0 or img.height == 0:
        raise ValueError(f"{path} has zero size")
    return img


def _to_gray8(img: Image.Image, path) -> np.ndarray:
    if img.mode in ("RGBA", "P", "LA"):
        img = img.convert("RGB")
    if img.mode == "RGB":
        img = img.convert("L")
    if img.mode not in ("L", "1"):
        raise ValueError(f"{path}: unsupported image mode {img.mode!r}, expected 8-bit gray or RGB")
    return np.asarray(img.convert("L"), dtype=np.uint8)


def load_slice(path) -> CTSlice:
    """Gray image scaled to [0, 1] and replicated to three channels (RGB goes through luma)."""
    gray = _to_gray8(_open(path), path).astype(np.float32) / 255.0
    return CTSlice(np.repeat(gray[None], 3, axis=0), Path(path).stem)


def load_mask(path) -> np.ndarray:
    return (_to_gray8(_open(path), path) > 127).astype(np.uint8)


def derive_boundary(mask: np.ndarray) -> np.ndarray:
    """One-pixel inner contour: mask minus its erosion by a 3x3 cross.

    Pixels beyond the image edge count as foreground, so a region touching the
    frame gets no artificial edge there.
    """
    m = np.asarray(mask).astype(bool)
    eroded = ndimage.binary_erosion(m, structure=CROSS, border_value=1)
    return (m & ~eroded).astype(np.uint8)


def make_record(slice_: CTSlice, mask: np.ndarray, id: str | None = None) -> DatasetRecord:
    mask = np.asarray(mask, dtype=np.uint8)
    return DatasetRecord(slice_, mask, derive_boundary(mask), id or slice_.source_id)


def _check_size(size) -> tuple[int, int]:
    h, w = (size, size) if np.isscalar(size) else size
    h, w = int(h), int(w)
    if h <= 0 or w <= 0 or h % 16 or w % 16:
        raise ValueError(f"size must be positive multiples of 16, got {(h, w)}")
    return h, w


def resize_record(record: DatasetRecord, size) -> DatasetRecord:
    """Bilinear for the slice, nearest for the mask; boundary re-derived."""
    h, w = _check_size(size)
    if record.slice.shape == (h, w):
        return record
    gray = Image.fromarray(record.slice.pixels[0].astype(np.float32), mode="F")
    gray = np.clip(np.asarray(gray.resize((w, h), Image.BILINEAR), dtype=np.float32), 0.0, 1.0)
    mask = np.asarray(Image.fromarray(record.mask).resize((w, h), Image.NEAREST), dtype=np.uint8)
    sl = CTSlice(np.repeat(gray[None], 3, axis=0), record.slice.source_id)
    return DatasetRecord(sl, mask, derive_boundary(mask), record.id)


def split_dataset(records, test_fraction: float, seed: int) -> DatasetSplit:
    records = list(records)
    n = len(records)
    if n < 2:
        raise ValueError(f"need at least 2 records to split, got {n}")
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n_test = math.floor(test_fraction * n + 0.5)
    n_test = min(max(n_test, 1), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    test = [records[i] for i in order[:n_test]]
    train = [records[i] for i in order[n_test:]]
    return DatasetSplit(train, test, seed)


def load_dataset(root, size=None) -> list[DatasetRecord]:
    """Read ``<root>/images/*.png`` with masks of matching stem in ``<root>/masks``."""
    root = Path(root)
    img_dir, mask_dir = root / "images", root / "masks"
    for d in (img_dir, mask_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"missing directory: {d}")
    records = []
    for img_path in sorted(img_dir.glob("*.png")):
        mask_path = mask_dir / img_path.name
        if not mask_path.exists():
            raise FileNotFoundError(f"missing mask for {img_path.name}: {mask_path}")
        rec = make_record(load_slice(img_path), load_mask(mask_path), img_path.stem)
        records.append(resize_record(rec, size) if size is not None else rec)
    if not records:
        raise ValueError(f"no images found in {img_dir}")
    return records


def save_dataset(records, root) -> None:
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    for r in records:
        gray = np.round(r.slice.pixels[0] * 255).astype(np.uint8)
        Image.fromarray(gray).save(root / "images" / f"{r.id}.png")
        Image.fromarray(r.mask * 255).save(root / "masks" / f"{r.id}.png")


# ------------------------------------------------------------------ synthetic data

FG_RANGE = (0.02, 0.5)
_SUPERSAMPLE = 4


def _ellipse_coverage(h, w, cy, cx, ry, rx, theta):
    """Fractional pixel coverage of a rotated ellipse via 4x4 supersampling."""
    s = _SUPERSAMPLE
    off = (np.arange(s) + 0.5) / s
    yy = (np.arange(h)[:, None] + off[None, :]).reshape(-1)
    xx = (np.arange(w)[:, None] + off[None, :]).reshape(-1)
    dy, dx = yy[:, None] - cy, xx[None, :] - cx
    c, sn = math.cos(theta), math.sin(theta)
    u = (dx * c + dy * sn) / rx
    v = (-dx * sn + dy * c) / ry
    inside = (u * u + v * v <= 1.0).astype(np.float32)
    return inside.reshape(h, s, w, s).mean(axis=(1, 3))


def _render(rng, h, w):
    coverage = np.zeros((h, w), np.float32)
    for _ in range(rng.integers(1, 5)):
        ry = rng.uniform(0.06, 0.2) * h
        rx = rng.uniform(0.06, 0.2) * w
        cy = rng.uniform(0.2, 0.8) * h
        cx = rng.uniform(0.2, 0.8) * w
        coverage = np.maximum(coverage, _ellipse_coverage(h, w, cy, cx, ry, rx, rng.uniform(0, math.pi)))
    yy, xx = np.mgrid[0:h, 0:w] / np.array([h, w])[:, None, None]
    phase = rng.uniform(0, 2 * math.pi, 2)
    background = 0.25 + 0.06 * np.sin(2 * math.pi * yy * 1.5 + phase[0]) * np.cos(2 * math.pi * xx + phase[1])
    brightness = rng.uniform(0.35, 0.5)
    img = background + brightness * coverage + rng.normal(0, 0.04, (h, w))
    return np.clip(img, 0, 1).astype(np.float32), (coverage >= 0.5).astype(np.uint8)


def synth_blobs(n: int, size=(64, 64), seed: int = 0) -> list[DatasetRecord]:
    """``n`` noisy slices with 1-4 bright anti-aliased elliptical lesions.

    Draws are rejected until the foreground fraction lies in ``FG_RANGE``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    h, w = (size, size) if np.isscalar(size) else size
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        while True:
            img, mask = _render(rng, h, w)
            if FG_RANGE[0] <= mask.mean() <= FG_RANGE[1]:
                break
        sl = CTSlice(np.repeat(img[None], 3, axis=0), f"synth_{i:04d}")
        records.append(make_record(sl, mask))
    return records


def stack_records(records):
    """Batch arrays (images N x 3 x H x W, masks/boundaries N x 1 x H x W)."""
    images = np.stack([r.slice.pixels for r in records]).astype(np.float32)
    masks = np.stack([r.mask for r in records])[:, None].astype(np.float32)
    bounds = np.stack([r.boundary for r in records])[:, None].astype(np.float32)
    return images, masks, bounds
