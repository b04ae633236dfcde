"""Segmentation evaluation: DSC, precision/recall, S-measure, E-measure, MAE."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EPS = np.finfo(np.float64).eps
E_DELTA = 1e-8
COLUMNS = ("dsc", "prec", "recall", "sm", "ephi", "mae")


def _binary(x, name="input") -> np.ndarray:
    x = np.asarray(x)
    if not np.isin(x, (0, 1)).all():
        raise ValueError(f"{name} must be binary")
    return x.astype(bool)


def _pair(pred, gt):
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return pred, gt


def confusion(pred_bin, gt) -> tuple[int, int, int, int]:
    p, g = _binary(pred_bin, "prediction"), _binary(gt, "ground truth")
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = int(np.count_nonzero(~p & ~g))
    return tp, fp, fn, tn


def precision_recall(counts) -> tuple[float, float]:
    """0/0 is 1 when prediction and ground truth are both empty, else 0."""
    tp, fp, fn = counts[:3]
    both_empty = tp + fp == 0 and tp + fn == 0
    prec = tp / (tp + fp) if tp + fp else float(both_empty)
    rec = tp / (tp + fn) if tp + fn else float(both_empty)
    return prec, rec


def dsc(pred_bin, gt) -> float:
    p, g = _binary(pred_bin, "prediction"), _binary(gt, "ground truth")
    denom = p.sum() + g.sum()
    if denom == 0:
        return 1.0
    return 2.0 * np.count_nonzero(p & g) / denom


def mae(pred, gt) -> float:
    pred, gt = _pair(pred, gt)
    # exactly rounded sum: independent of pixel order
    return math.fsum(np.abs(pred - gt).ravel().tolist()) / pred.size


# ------------------------------------------------------------------------- S-measure

def _object_score(x: np.ndarray) -> float:
    if x.size == 0:
        return 0.0
    mean = x.mean()
    std = x.std(ddof=1) if x.size > 1 else 0.0
    return 2.0 * mean / (mean * mean + 1.0 + std + EPS)


def _s_object(pred, gt):
    g = gt > 0.5
    fg = _object_score(pred[g])
    bg = _object_score(1.0 - pred[~g])
    u = g.mean()
    return u * fg + (1 - u) * bg


def _centroid(g):
    h, w = g.shape
    if not g.any():
        return int(round(w / 2)), int(round(h / 2))
    ys, xs = np.nonzero(g)
    # 1-based centroid, halves rounded up
    return int(np.floor(xs.mean() + 1.5)), int(np.floor(ys.mean() + 1.5))


def _ssim(pred, gt):
    n = pred.size
    if n == 0:
        return 0.0
    x, y = pred.mean(), gt.mean()
    d = max(n - 1, 1)
    sx = ((pred - x) ** 2).sum() / d
    sy = ((gt - y) ** 2).sum() / d
    sxy = ((pred - x) * (gt - y)).sum() / d
    alpha = 4 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0:
        return alpha / (beta + EPS)
    return 1.0 if beta == 0 else 0.0


def _s_region(pred, gt):
    g = gt > 0.5
    h, w = g.shape
    cx, cy = _centroid(g)
    area = h * w
    weights = (cx * cy / area, (w - cx) * cy / area, cx * (h - cy) / area)
    weights = weights + (1 - sum(weights),)
    quads = (
        (slice(0, cy), slice(0, cx)),
        (slice(0, cy), slice(cx, w)),
        (slice(cy, h), slice(0, cx)),
        (slice(cy, h), slice(cx, w)),
    )
    return sum(wt * _ssim(pred[q], g[q].astype(np.float64)) for wt, q in zip(weights, quads))


def s_measure(pred, gt, alpha: float = 0.5) -> float:
    """Structure measure: alpha * object-aware + (1 - alpha) * region-aware similarity."""
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    pred, gt = _pair(pred, gt)
    y = (gt > 0.5).mean()
    if y == 0:
        return float(1.0 - pred.mean())
    if y == 1:
        return float(pred.mean())
    score = alpha * _s_object(pred, gt) + (1 - alpha) * _s_region(pred, gt)
    return float(max(score, 0.0))


# ------------------------------------------------------------------------- E-measure

def e_measure(pred, gt) -> float:
    """Enhanced-alignment measure on a continuous prediction."""
    pred, gt = _pair(pred, gt)
    g = gt > 0.5
    if not g.any():
        phi = 1.0 - pred
    elif g.all():
        phi = pred
    else:
        fp = pred - pred.mean()
        fg = g - g.mean()
        xi = 2.0 * fg * fp / (fg * fg + fp * fp + E_DELTA)
        phi = (xi + 1.0) ** 2 / 4.0
    return float(phi.mean())


# ------------------------------------------------------------------------- reporting

@dataclass
class MetricReport:
    ids: list = field(default_factory=list)
    rows: list = field(default_factory=list)  # dicts keyed by COLUMNS

    @property
    def means(self) -> dict[str, float]:
        if not self.rows:
            return {c: float("nan") for c in COLUMNS}
        return {c: float(np.mean([r[c] for r in self.rows])) for c in COLUMNS}

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("id",) + COLUMNS)
            for i, row in zip(self.ids, self.rows):
                writer.writerow([i] + [repr(float(row[c])) for c in COLUMNS])
            means = self.means
            writer.writerow(["mean"] + [repr(means[c]) for c in COLUMNS])

    @classmethod
    def from_csv(cls, path) -> "MetricReport":
        with Path(path).open(newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != ("id",) + COLUMNS:
                raise ValueError(f"unexpected CSV header: {reader.fieldnames}")
            ids, rows = [], []
            for r in reader:
                if r["id"] == "mean":
                    continue
                ids.append(r["id"])
                rows.append({c: float(r[c]) for c in COLUMNS})
        return cls(ids, rows)


def image_metrics(pred, gt, threshold: float = 0.5) -> dict[str, float]:
    pred, gt = _pair(pred, gt)
    pb = pred >= threshold
    counts = confusion(pb, gt)
    prec, rec = precision_recall(counts)
    return {
        "dsc": float(dsc(pb, gt)),
        "prec": prec,
        "recall": rec,
        "sm": s_measure(pred, gt),
        "ephi": e_measure(pred, gt),
        "mae": mae(pred, gt),
    }


def evaluate_dataset(predictions, records, threshold: float = 0.5) -> MetricReport:
    """``predictions`` maps record id -> H x W probability map."""
    ids = [r.id for r in records]
    if set(predictions) != set(ids) or len(ids) != len(set(ids)):
        missing = sorted(set(ids) - set(predictions))
        extra = sorted(set(predictions) - set(ids))
        raise ValueError(f"prediction ids do not match records (missing {missing}, unexpected {extra})")
    report = MetricReport()
    for r in records:
        report.ids.append(r.id)
        report.rows.append(image_metrics(predictions[r.id], r.mask, threshold))
    return report
