"""Tiny convolutional backbone producing the four-level feature pyramid f1..f4.

Stage ``i`` outputs ``C_i x H/2^i x W/2^i``. Any backbone that honours this
contract can be swapped in for the decoder.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class EncoderConfig:
    channels: tuple[int, int, int, int] = (16, 32, 64, 128)
    input_size: tuple[int, int] = (64, 64)
    blocks_per_stage: int = 2

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        object.__setattr__(self, "input_size", tuple(int(s) for s in self.input_size))
        if len(self.channels) != 4 or any(c <= 0 for c in self.channels):
            raise ValueError(f"channels must be 4 positive integers, got {self.channels}")
        if len(self.input_size) != 2 or any(s <= 0 or s % 16 for s in self.input_size):
            raise ValueError(f"input_size must be positive multiples of 16, got {self.input_size}")
        if self.blocks_per_stage < 1:
            raise ValueError("blocks_per_stage must be >= 1")


def conv_bn_relu(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


class Encoder(nn.Module):
    def __init__(self, config: EncoderConfig = EncoderConfig()):
        super().__init__()
        self.config = config
        stages = []
        cin = 3
        for cout in config.channels:
            blocks = [conv_bn_relu(cin if b == 0 else cout, cout) for b in range(config.blocks_per_stage)]
            stages.append(nn.Sequential(*blocks))
            cin = cout
        self.stages = nn.ModuleList(stages)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, ...]:
        if x.dim() != 4 or x.shape[1] != 3:
            raise ValueError(f"expected an N x 3 x H x W batch, got shape {tuple(x.shape)}")
        if tuple(x.shape[-2:]) != self.config.input_size:
            raise ValueError(
                f"input size {tuple(x.shape[-2:])} does not match configured {self.config.input_size}"
            )
        feats = []
        for stage in self.stages:
            x = F.max_pool2d(stage(x), 2)
            feats.append(x)
        return tuple(feats)


def init_uniform_(module: nn.Module, generator: torch.Generator) -> None:
    """Fan-in scaled uniform init for every conv in ``module``.

    Convs feeding a ReLU get the He bound sqrt(6 / fan_in); everything else
    (heads, projections) gets 1 / sqrt(fan_in). Norm layers reset to identity.
    """
    convs = [m for m in module.modules() if isinstance(m, nn.Conv2d)]
    relu_fed = set()
    for m in module.modules():
        if isinstance(m, nn.Sequential):
            kids = list(m)
            for a, b in zip(kids, kids[1:]):
                if isinstance(a, nn.Conv2d) and isinstance(b, (nn.BatchNorm2d, nn.ReLU)):
                    relu_fed.add(id(a))
    for conv in convs:
        fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1] // conv.groups
        bound = math.sqrt(6.0 / fan_in) if id(conv) in relu_fed else 1.0 / math.sqrt(fan_in)
        with torch.no_grad():
            conv.weight.copy_(torch.empty_like(conv.weight).uniform_(-bound, bound, generator=generator))
            if conv.bias is not None:
                b = 1.0 / math.sqrt(fan_in)
                conv.bias.copy_(torch.empty_like(conv.bias).uniform_(-b, b, generator=generator))
    for m in module.modules():
        if isinstance(m, nn.BatchNorm2d):
            m.reset_parameters()
            m.reset_running_stats()


def init_encoder(config: EncoderConfig, seed: int) -> Encoder:
    enc = Encoder(config)
    g = torch.Generator().manual_seed(seed)
    init_uniform_(enc, g)
    return enc


def encode(images: torch.Tensor, encoder: Encoder) -> tuple[torch.Tensor, ...]:
    return encoder(images)
