from __future__ import annotations

import torch
import torch.nn as nn

from .decoder import BCSRDecoder, DecoderOutputs
from .encoder import Encoder, EncoderConfig, init_uniform_


class BCSNet(nn.Module):
    """Encoder + BCSR decoder. ``forward`` returns :class:`DecoderOutputs`."""

    def __init__(self, encoder_config: EncoderConfig = EncoderConfig(), decoder_width: int = 32,
                 boundary_width: int = 16, disable_aggc: bool = False, disable_sg: bool = False):
        super().__init__()
        self.encoder = Encoder(encoder_config)
        self.decoder = BCSRDecoder(encoder_config.channels, decoder_width, boundary_width,
                                   disable_aggc=disable_aggc, disable_sg=disable_sg)

    @property
    def input_size(self) -> tuple[int, int]:
        return self.encoder.config.input_size

    def forward(self, x: torch.Tensor, return_aux: bool = False) -> DecoderOutputs:
        feats = self.encoder(x)
        return self.decoder(feats, x.shape[-2:], return_aux=return_aux)

    def gains(self) -> dict[str, nn.Parameter]:
        return {f"level{k}": b.aggc.gain for k, b in self.decoder.blocks.items()}


def build_model(encoder_config: EncoderConfig, seed: int, **kwargs) -> BCSNet:
    model = BCSNet(encoder_config, **kwargs)
    init_uniform_(model, torch.Generator().manual_seed(seed))
    return model
