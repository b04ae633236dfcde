"""Central finite-difference check of autograd gradients of the total loss."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .config import TrainConfig
from .data import synth_blobs
from .losses import total_loss

STEP = 1e-4
TOLERANCE = 1e-3
# a miss at STEP that vanishes at STEP / KINK_REFINE is a ReLU / max-pool crossing
KINK_REFINE = 100
# gradients below this magnitude on both sides are compared absolutely
GRAD_FLOOR = 1e-6
GROUPS = ("encoder", "ba", "sg", "aggc", "fusion", "side")
MAX_SIZE = 32
MAX_CHANNELS = 8


def param_group(name: str) -> str:
    if name.startswith("encoder."):
        return "encoder"
    if name.startswith("decoder.ba."):
        return "ba"
    if name.startswith("decoder.sg."):
        return "sg"
    if ".aggc." in name:
        return "aggc"
    if ".fuse." in name:
        return "fusion"
    if ".side." in name:
        return "side"
    raise KeyError(name)


@dataclass
class GradEntry:
    name: str
    index: int
    analytic: float
    numeric: float
    numeric_fine: float | None = None

    @staticmethod
    def _rel(a, n):
        return abs(a - n) / max(abs(a), abs(n), GRAD_FLOOR)

    @property
    def rel_error(self) -> float:
        return self._rel(self.analytic, self.numeric)

    @property
    def fine_rel_error(self) -> float | None:
        return None if self.numeric_fine is None else self._rel(self.analytic, self.numeric_fine)


@dataclass
class GradcheckReport:
    """``entries`` were compared at the primary step. ``kinks`` missed there but
    agree at the refined step, i.e. the perturbation crossed a non-smooth point."""

    entries: list = field(default_factory=list)
    kinks: list = field(default_factory=list)
    tolerance: float = TOLERANCE

    @property
    def max_rel_error(self) -> float:
        return max((e.rel_error for e in self.entries), default=0.0)

    @property
    def failures(self) -> list[str]:
        return [f"{e.name}[{e.index}]" for e in self.entries if e.rel_error > self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL " + ",".join(self.failures)
        return (f"gradcheck n={len(self.entries)} kinks={len(self.kinks)} "
                f"max_rel_error={self.max_rel_error:.3e} {status}")


def _central(loss_fn, flat, idx, step):
    orig = flat[idx].item()
    flat[idx] = orig + step
    up = loss_fn().item()
    flat[idx] = orig - step
    down = loss_fn().item()
    flat[idx] = orig
    return (up - down) / (2 * step)


def check_gradients(loss_fn, params: dict, picks, step: float = STEP,
                    tolerance: float = TOLERANCE) -> GradcheckReport:
    """Compare d loss_fn() / d params[name].flat[index] for each (name, index) pick.

    Misses at ``step`` are re-differenced at ``step / KINK_REFINE``; if that
    agrees the entry goes to ``report.kinks`` instead of ``report.entries``.
    """
    names = sorted({n for n, _ in picks})
    loss = loss_fn()
    grads = torch.autograd.grad(loss, [params[n] for n in names], allow_unused=True)
    grads = {n: (torch.zeros_like(params[n]) if g is None else g) for n, g in zip(names, grads)}
    report = GradcheckReport(tolerance=tolerance)
    with torch.no_grad():
        for name, idx in picks:
            flat = params[name].view(-1)
            entry = GradEntry(name, idx, grads[name].view(-1)[idx].item(), _central(loss_fn, flat, idx, step))
            if entry.rel_error > tolerance:
                entry.numeric_fine = _central(loss_fn, flat, idx, step / KINK_REFINE)
                if entry.fine_rel_error <= tolerance:
                    report.kinks.append(entry)
                    continue
            report.entries.append(entry)
    return report


def _check_tiny(config: TrainConfig) -> None:
    if max(config.image_size) > MAX_SIZE:
        raise ValueError(f"gradcheck needs image_size <= {MAX_SIZE}, got {config.image_size}")
    widths = (*config.encoder_channels, config.decoder_width, config.boundary_width)
    if max(widths) > MAX_CHANNELS:
        raise ValueError(f"gradcheck needs every channel width <= {MAX_CHANNELS}, got {widths}")


def sample_params(named: dict, n_params: int, rng: np.random.Generator) -> list[tuple[str, int]]:
    """Every AGGC gain, one entry per module group, the rest uniform over scalars."""
    picks = []
    for name in sorted(named):
        if name.endswith("aggc.gain"):
            picks.append((name, 0))
    by_group: dict[str, list[str]] = {}
    for name in sorted(named):
        by_group.setdefault(param_group(name), []).append(name)
    for g in GROUPS:
        if g not in by_group:
            continue
        # the gains are already in; draw the group's representative elsewhere
        names = [n for n in by_group[g] if (n, 0) not in picks or named[n].numel() > 1]
        if not names:
            continue
        name = names[rng.integers(len(names))]
        while True:
            pick = (name, int(rng.integers(named[name].numel())))
            if pick not in picks:
                break
        picks.append(pick)
    all_names = sorted(named)
    sizes = np.array([named[n].numel() for n in all_names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    seen = set(picks)
    while len(picks) < n_params and len(seen) < offsets[-1]:
        flat = int(rng.integers(offsets[-1]))
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        pick = (all_names[k], flat - int(offsets[k]))
        if pick not in seen:
            seen.add(pick)
            picks.append(pick)
    return picks


def gradcheck(config: TrainConfig, n_params: int = 50, seed: int = 0,
              step: float = STEP, tolerance: float = TOLERANCE) -> GradcheckReport:
    """Double-precision finite-difference check on a tiny model.

    The AGGC gains start at zero in training; here they are drawn uniformly
    from [-1, 1] so the context branch contributes to every gradient.
    """
    from .training import model_from_config, _tensors

    _check_tiny(config)
    torch.manual_seed(seed)
    model = model_from_config(config, seed=seed).double().train()
    rng = np.random.default_rng(seed)
    with torch.no_grad():
        for gain in model.gains().values():
            gain.fill_(float(rng.uniform(-1, 1)))
    records = synth_blobs(2, config.image_size, seed)
    images, masks, bounds, eps = _tensors(records, config, dtype=torch.float64)

    def loss_fn():
        return total_loss(model(images), masks, bounds, eps).total

    named = {n: p for n, p in model.named_parameters() if p.requires_grad}
    picks = sample_params(named, n_params, rng)
    report = check_gradients(loss_fn, named, picks, step, tolerance)
    # kinks are replaced by fresh draws so n_params entries are compared at ``step``
    tried = set(picks)
    while report.kinks and len(report.entries) < n_params:
        extra = [p for p in sample_params(named, len(tried) + n_params - len(report.entries), rng)
                 if p not in tried][: n_params - len(report.entries)]
        if not extra:
            break
        tried.update(extra)
        more = check_gradients(loss_fn, named, extra, step, tolerance)
        report.entries += more.entries
        report.kinks += more.kinks
    return report
