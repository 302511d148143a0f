# Copyright © 2026 TSONet contributors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""
The complete two-stream ordinal network and its ablation variants.

Switches (see `ModelConfig`):

* `use_csem`             exchange between the streams, bypassed when off
* `use_febr`             bin head; when off the height comes from a 1x1
                         convolution on the height features
* `use_footprint_stream` footprint decoder + head; when off the exchange is
                         skipped too and no footprint logits are produced
"""

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from tsonet.config import ModelConfig
from tsonet.febr_head import BinPrediction, FebrHead
from tsonet.model_core import (Csem, CsemOutputs, Encoder, FootprintHead, StreamDecoders,
                               StreamFeatures)


@dataclass
class NetworkOutputs:
    """Everything one forward pass produces."""

    height: torch.Tensor
    footprint_logits: Optional[torch.Tensor]
    streams: StreamFeatures
    refined_fp: Optional[torch.Tensor]
    refined_h: torch.Tensor
    csem: Optional[CsemOutputs] = None
    bins: Optional[BinPrediction] = None


class DirectRegressionHead(nn.Module):
    """1x1 convolution to a height map, upsampled to the input size."""

    def __init__(self, channels=128):
        super().__init__()
        self.conv = nn.Conv2d(channels, 1, kernel_size=1)

    def forward(self, features, size=(256, 256)):
        height = self.conv(features)
        return F.interpolate(height, size=size, mode="bilinear", align_corners=False)


class TSONet(nn.Module):
    """Shared encoder, footprint and height streams, exchange and heads."""

    def __init__(self, config=None):
        super().__init__()
        self.config = (config or ModelConfig()).validate()
        c = self.config
        self.encoder = Encoder(c.in_channels, c.encoder_channels, c.norm_groups)
        self.decoders = StreamDecoders(c.encoder_channels, c.stream_channels, c.norm_groups,
                                       footprint=True)
        self.footprint_head = FootprintHead(c.stream_channels)
        self.csem = Csem(c.stream_channels, c.lrgt_reduction, c.lrgt_blocks, c.group_count,
                         c.exchange_mode, c.zero_init_exchange) if c.use_csem else None
        if c.use_febr:
            self.height_head = FebrHead(
                c.stream_channels, c.n_bins, c.attention_heads, c.ffn_expansion,
                query_norm=c.query_norm, query_init=c.query_init,
                query_init_std=c.query_init_std, similarity_scale=c.similarity_scale,
                learn_similarity_scale=c.learn_similarity_scale,
                normalize_readout=c.normalize_readout, bin_value_scale=c.bin_value_scale,
                eps=c.norm_eps)
        else:
            self.height_head = DirectRegressionHead(c.stream_channels)

    def forward(self, image):
        """Predict height map and footprint logits for [B, bands, H, W] image."""
        size = tuple(image.shape[-2:])
        use_footprint = self.config.use_footprint_stream

        pyramid = self.encoder(image)
        streams = self.decoders(pyramid, with_footprint=use_footprint)

        refined_fp, refined_h, exchange = streams.f_fp, streams.f_h, None
        if self.csem is not None and use_footprint:
            exchange = self.csem(streams.f_fp, streams.f_h)
            refined_fp, refined_h = exchange.f_fp, exchange.f_h

        footprint_logits = None
        if use_footprint:
            footprint_logits = self.footprint_head(refined_fp, size).squeeze(1)

        bins = None
        if self.config.use_febr:
            bins = self.height_head(streams.height_levels, refined_h, size)
            height = bins.height
        else:
            height = self.height_head(refined_h, size).squeeze(1)

        return NetworkOutputs(height=height, footprint_logits=footprint_logits, streams=streams,
                              refined_fp=refined_fp, refined_h=refined_h, csem=exchange,
                              bins=bins)

    def footprint_parameters(self):
        """Parameters that only serve the footprint stream."""
        modules = [self.decoders.footprint, self.footprint_head]
        return [p for module in modules for p in module.parameters()]
