"""Weighted BCE / weighted IoU segmentation losses, boundary BCE, and the
total training objective over the five side outputs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

CLAMP = 1e-7
SEG_KEYS = ("s2", "s3", "s4", "ss")


def _as_tensor(x, like=None):
    if isinstance(x, torch.Tensor):
        return x
    dtype = like.dtype if like is not None else torch.float64
    return torch.as_tensor(np.asarray(x), dtype=dtype)


def make_weight_map(mask, k: int = 31, lam: float = 5.0):
    """eps = lam * |meanpool_k(G) - G| with reflect padding (edge not repeated).

    Accepts an H x W array or an N x 1 x H x W tensor; returns the same kind.
    """
    if k < 1 or k % 2 == 0:
        raise ValueError(f"pooling window must be a positive odd integer, got {k}")
    if isinstance(mask, torch.Tensor):
        g = mask.detach().to(torch.float64)
        shape = g.shape
        g4 = g.reshape(-1, 1, *shape[-2:])
        pad = k // 2
        if pad >= min(shape[-2:]):
            eps = torch.stack([torch.as_tensor(make_weight_map(m[0].numpy(), k, lam)) for m in g4])
            return eps.reshape(shape).to(mask.dtype)
        padded = F.pad(g4, (pad, pad, pad, pad), mode="reflect")
        local = F.avg_pool2d(padded, k, stride=1)
        return (lam * (local - g4).abs()).reshape(shape).to(mask.dtype)
    g = np.asarray(mask, dtype=np.float64)
    pad = k // 2
    padded = np.pad(g, pad, mode="reflect")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k, k))
    return lam * np.abs(windows.mean(axis=(-1, -2)) - g)


def _check_shapes(*maps):
    s = maps[0].shape
    for m in maps[1:]:
        if m.shape != s:
            raise ValueError(f"shape mismatch: {tuple(s)} vs {tuple(m.shape)}")


def _reduce_dims(p):
    return tuple(range(-2, 0)) if p.dim() <= 2 else tuple(range(1, p.dim()))


def _bce(pred, target):
    # clamp p and 1 - p separately so the two log terms mirror each other exactly
    log_p = torch.log(pred.clamp(min=CLAMP))
    log_q = torch.log((1 - pred).clamp(min=CLAMP))
    return -(target * log_p + (1 - target) * log_q)


def wbce(pred, target, eps) -> torch.Tensor:
    """Pixel BCE weighted by (1 + eps) and divided by sum(eps).

    Falls back to sum(1 + eps) when sum(eps) == 0 (constant target).
    Batched inputs return one value per leading element.
    """
    pred = _as_tensor(pred)
    target, eps = _as_tensor(target, pred), _as_tensor(eps, pred)
    _check_shapes(pred, target, eps)
    bce = _bce(pred, target)
    dims = _reduce_dims(pred)
    num = (bce * (1 + eps)).sum(dim=dims)
    den = eps.sum(dim=dims)
    den = torch.where(den > 0, den, (1 + eps).sum(dim=dims))
    return num / den


def wiou(pred, target, eps) -> torch.Tensor:
    """1 - sum(P*G*(1+eps)) / sum((P + G - P*G)*(1+eps)); empty-over-empty is 0."""
    pred = _as_tensor(pred)
    target, eps = _as_tensor(target, pred), _as_tensor(eps, pred)
    _check_shapes(pred, target, eps)
    w = 1 + eps
    dims = _reduce_dims(pred)
    inter = (pred * target * w).sum(dim=dims)
    union = ((pred + target - pred * target) * w).sum(dim=dims)
    safe = torch.where(union > 0, union, torch.ones_like(union))
    return torch.where(union > 0, 1 - inter / safe, torch.zeros_like(union))


def boundary_bce(pred, target) -> torch.Tensor:
    """Mean pixel BCE of the boundary map (per leading element when batched)."""
    pred = _as_tensor(pred)
    target = _as_tensor(target, pred)
    _check_shapes(pred, target)
    return _bce(pred, target).mean(dim=_reduce_dims(pred))


@dataclass
class LossBreakdown:
    total: torch.Tensor
    wbce: dict
    wiou: dict
    boundary: torch.Tensor

    def components(self) -> dict[str, float]:
        out = {f"wbce_{k}": v.item() for k, v in self.wbce.items()}
        out.update({f"wiou_{k}": v.item() for k, v in self.wiou.items()})
        out["boundary_bce"] = self.boundary.item()
        return out


def total_loss(outputs, mask, boundary, eps=None, k: int = 31, lam: float = 5.0) -> LossBreakdown:
    """Sum of wiou + wbce over S2, S3, S4, S_s plus boundary BCE on S_b.

    ``mask``/``boundary`` are N x 1 x H x W; each component is averaged over
    the batch. ``eps`` is computed from ``mask`` when not supplied.
    """
    if eps is None:
        eps = make_weight_map(mask, k, lam)
    parts_bce, parts_iou = {}, {}
    total = 0
    for key in SEG_KEYS:
        p = getattr(outputs, key)
        parts_bce[key] = wbce(p, mask, eps).mean()
        parts_iou[key] = wiou(p, mask, eps).mean()
        total = total + parts_bce[key] + parts_iou[key]
    b = boundary_bce(outputs.sb, boundary).mean()
    total = total + b
    return LossBreakdown(total, parts_bce, parts_iou, b)
