"""BCSR decoder: boundary attention, semantic guidance, AGGC and the three
boundary-context-semantic reconstruction blocks (levels 4 -> 3 -> 2)."""
from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F


def resize(x: torch.Tensor, size) -> torch.Tensor:
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    return F.interpolate(x, size=tuple(size), mode="bilinear", align_corners=False)


@dataclass
class DecoderOutputs:
    """Five side-output probability maps, each N x 1 x H x W at input resolution.

    ``s2`` is the final prediction. ``aux`` is only filled when the decoder is
    asked for intermediates (attention maps, context matrices).
    """

    sb: torch.Tensor
    ss: torch.Tensor
    s4: torch.Tensor
    s3: torch.Tensor
    s2: torch.Tensor
    aux: dict = field(default_factory=dict, repr=False)

    def as_tuple(self) -> tuple[torch.Tensor, ...]:
        return self.sb, self.ss, self.s4, self.s3, self.s2


# --------------------------------------------------------------------------- AGGC

class SpatialAttention(nn.Module):
    """A_s = sigmoid(conv3x3([mean_c(f), max_c(f)]))."""

    def __init__(self):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, 3, padding=1)

    def forward(self, f: torch.Tensor) -> torch.Tensor:
        pooled = torch.cat([f.mean(dim=1, keepdim=True), f.amax(dim=1, keepdim=True)], dim=1)
        return torch.sigmoid(self.conv(pooled))


def spatial_enhance(f: torch.Tensor, attention: SpatialAttention) -> tuple[torch.Tensor, torch.Tensor]:
    a_s = attention(f)
    return a_s * f + f, a_s


def boundary_enhance(f_s: torch.Tensor, s_b: torch.Tensor) -> torch.Tensor:
    s_b = resize(s_b, f_s.shape[-2:])
    return s_b * f_s + f_s


def global_context(f_b: torch.Tensor, gain) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Global context modelling with a learnable residual gain.

    Features are L2-normalised along channels at each location, the location
    affinity ``f~^T f~`` is softmax-normalised row-wise into ``omega``
    (N x hw x hw), and the context map is ``G = f~ @ omega``. Returns
    ``(gain * G * f_b + f_b, omega, G)``.
    """
    if not torch.isfinite(f_b).all():
        raise ValueError("global_context received non-finite features")
    n, c, h, w = f_b.shape
    flat = F.normalize(f_b, p=2, dim=1).reshape(n, c, h * w)
    affinity = torch.bmm(flat.transpose(1, 2), flat).transpose(1, 2)
    omega = torch.softmax(affinity, dim=-1)
    g = torch.bmm(flat, omega).reshape(n, c, h, w)
    return gain * (g * f_b) + f_b, omega, g


class AGGC(nn.Module):
    def __init__(self):
        super().__init__()
        self.attention = SpatialAttention()
        self.gain = nn.Parameter(torch.zeros(()))

    def forward(self, f, s_b, aux=None):
        f_s, a_s = spatial_enhance(f, self.attention)
        f_b = boundary_enhance(f_s, s_b)
        out, omega, _ = global_context(f_b, self.gain)
        if aux is not None:
            aux["attention"] = a_s
            aux["omega"] = omega
        return out


# ------------------------------------------------------------------ BA / SG units

class BoundaryAttention(nn.Module):
    """Boundary logits conv1x1(conv3x3(conv1x1(f1))) at f1's native resolution."""

    def __init__(self, in_channels: int, mid_channels: int):
        super().__init__()
        self.reduce = nn.Conv2d(in_channels, mid_channels, 1)
        self.body = nn.Conv2d(mid_channels, mid_channels, 3, padding=1)
        self.head = nn.Conv2d(mid_channels, 1, 1)

    def forward(self, f1):
        return self.head(self.body(self.reduce(f1)))


class SemanticGuidance(nn.Module):
    """Fuses f2, f3, f4 at f3's resolution into 1-channel guidance logits.

    Each level is first projected to the common width ``width`` with a 1x1
    conv, since the maps cannot be summed at their native channel counts.
    """

    def __init__(self, channels: tuple[int, int, int], width: int):
        super().__init__()
        c2, c3, c4 = channels
        self.proj2 = nn.Conv2d(c2, width, 1)
        self.proj3 = nn.Conv2d(c3, width, 1)
        self.proj4 = nn.Conv2d(c4, width, 1)
        self.fuse = nn.Conv2d(width, 1, 3, padding=1)

    def forward(self, f2, f3, f4):
        h3, w3 = f3.shape[-2:]
        if f2.shape[-2:] != (2 * h3, 2 * w3) or (2 * f4.shape[-2], 2 * f4.shape[-1]) != (h3, w3):
            raise ValueError(
                f"semantic guidance expects levels 2,3,4 at strides 2x apart, got "
                f"{tuple(f2.shape[-2:])}, {tuple(f3.shape[-2:])}, {tuple(f4.shape[-2:])}"
            )
        x = F.avg_pool2d(self.proj2(f2), 2) + self.proj3(f3) + resize(self.proj4(f4), (h3, w3))
        return self.fuse(x)


# -------------------------------------------------------------------- BCSR block

class BCSRBlock(nn.Module):
    def __init__(self, level: int, prev_channels: int, enc_channels: int, out_channels: int):
        super().__init__()
        self.level = level
        self.aggc = AGGC()
        self.fuse = nn.Sequential(
            nn.Conv2d(prev_channels + enc_channels, out_channels, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_channels),
        )
        self.side = nn.Conv2d(out_channels, 1, 1)

    def merge(self, f_prev, f_i, s_b, aux=None, use_aggc=True):
        """Channel concatenation of the (resampled) previous decoder features
        and the AGGC-refined encoder features."""
        f_prev = resize(f_prev, f_i.shape[-2:])
        enc = self.aggc(f_i, s_b, aux) if use_aggc else f_i
        return torch.cat([f_prev, enc], dim=1)

    def forward(self, f_prev, f_i, s_b, s_s, aux=None, use_aggc=True, use_sg=True):
        merged = self.merge(f_prev, f_i, s_b, aux, use_aggc)
        if use_sg:
            if s_s.shape[-2:] != merged.shape[-2:]:
                raise ValueError(
                    f"semantic map at {tuple(s_s.shape[-2:])} does not match level-{self.level} "
                    f"features at {tuple(merged.shape[-2:])}"
                )
            merged = merged + merged * s_s
        out = F.relu(self.fuse(merged))
        return out, self.side(out)


def resample_semantic(s_s: torch.Tensor, level: int) -> torch.Tensor:
    """S_s lives at level 3: pooled once for level 4, upsampled once for level 2."""
    if level == 4:
        return F.avg_pool2d(s_s, 2)
    if level == 3:
        return s_s
    if level == 2:
        h, w = s_s.shape[-2:]
        return resize(s_s, (2 * h, 2 * w))
    raise ValueError(f"no BCSR block at level {level}")


class BCSRDecoder(nn.Module):
    def __init__(self, enc_channels=(16, 32, 64, 128), width: int = 32, boundary_width: int = 16,
                 disable_aggc: bool = False, disable_sg: bool = False):
        super().__init__()
        c1, c2, c3, c4 = enc_channels
        self.disable_aggc = disable_aggc
        self.disable_sg = disable_sg
        self.ba = BoundaryAttention(c1, boundary_width)
        self.sg = SemanticGuidance((c2, c3, c4), c3)
        self.blocks = nn.ModuleDict({
            "4": BCSRBlock(4, c4, c4, width),
            "3": BCSRBlock(3, width, c3, width),
            "2": BCSRBlock(2, width, c2, width),
        })

    def forward(self, feats, input_size, return_aux: bool = False) -> DecoderOutputs:
        f1, f2, f3, f4 = feats
        aux = {} if return_aux else None
        sb_logit = self.ba(f1)
        ss_logit = self.sg(f2, f3, f4)
        s_b, s_s = torch.sigmoid(sb_logit), torch.sigmoid(ss_logit)
        prev = f4
        sides = {}
        for level in (4, 3, 2):
            block_aux = {} if return_aux else None
            prev, sides[level] = self.blocks[str(level)](
                prev, feats[level - 1], s_b, resample_semantic(s_s, level), block_aux,
                use_aggc=not self.disable_aggc, use_sg=not self.disable_sg,
            )
            if return_aux:
                aux[f"level{level}"] = block_aux
                aux[f"F{level}"] = prev
        if return_aux:
            aux["sb_native"] = s_b
            aux["ss_native"] = s_s
        # logits are resized before the sigmoid; at native resolution this is the same map
        up = lambda z: torch.sigmoid(resize(z, input_size))  # noqa: E731
        return DecoderOutputs(up(sb_logit), up(ss_logit), up(sides[4]), up(sides[3]), up(sides[2]), aux or {})


def decode(features, decoder: BCSRDecoder, input_size) -> DecoderOutputs:
    return decoder(features, input_size)
