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
Shared encoder, the two task-stream decoders, cross-stream exchange and footprint head.

Spatial schedule for a 256x256 input:

```
encoder levels    256  128   64   32   16
stream pyramid         128   64   32   16     (FPN, C channels, one per task)
height levels for bin refinement  64   32   16
```

Normalization layers are GroupNorm, so a sample gives the same output no
matter which batch it is part of.
"""

import math
from dataclasses import dataclass
from typing import List, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from tsonet.errors import ContractError


def group_norm(channels, groups=8):
    """GroupNorm whose group count always divides the channel count."""
    return nn.GroupNorm(math.gcd(groups, channels), channels)


def conv_groups(group_count, in_channels, out_channels):
    """Largest usable group count not above `group_count`."""
    return math.gcd(group_count, math.gcd(in_channels, out_channels))


def depthwise3x3(channels):
    """3x3 convolution with one group per channel."""
    return nn.Conv2d(channels, channels, kernel_size=3, padding=1, groups=channels)


class ConvBlock(nn.Module):
    """Two 3x3 convolutions, each followed by GroupNorm and GELU."""

    def __init__(self, in_channels, out_channels, norm_groups=8):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1),
            group_norm(out_channels, norm_groups),
            nn.GELU(),
            nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1),
            group_norm(out_channels, norm_groups),
            nn.GELU(),
        )

    def forward(self, x):
        return self.body(x)


@dataclass
class FeaturePyramid:
    """Multi-resolution features, finest level first."""

    levels: List[torch.Tensor]

    def validate(self):
        """Check that every level halves the spatial size of the previous one."""
        for finer, coarser in zip(self.levels, self.levels[1:]):
            if finer.shape[-2] != 2 * coarser.shape[-2] or \
                    finer.shape[-1] != 2 * coarser.shape[-1]:
                raise ContractError(f"pyramid levels {tuple(finer.shape)} and "
                                    f"{tuple(coarser.shape)} are not a factor 2 apart")
        return self


@dataclass
class StreamFeatures:
    """Highest-resolution stream features plus the coarse height levels."""

    f_fp: Optional[torch.Tensor]
    f_h: torch.Tensor
    height_levels: List[torch.Tensor]


@dataclass
class CsemOutputs:
    """Refined stream features with the confidence and gating masks."""

    f_fp: torch.Tensor
    f_h: torch.Tensor
    confidence: torch.Tensor
    gate: torch.Tensor


class Encoder(nn.Module):
    """Five-level hierarchical encoder shared by both streams."""

    def __init__(self, in_channels=7, channels=(32, 64, 128, 256, 512), norm_groups=8):
        super().__init__()
        self.in_channels = in_channels
        self.levels = nn.ModuleList()
        previous = in_channels
        for width in channels:
            self.levels.append(ConvBlock(previous, width, norm_groups))
            previous = width

    def forward(self, image):
        """Encode [B, bands, H, W] image into a five-level FeaturePyramid."""
        if image.ndim != 4 or image.shape[1] != self.in_channels:
            raise ContractError(f"encoder expects [B, {self.in_channels}, H, W], "
                                f"got {tuple(image.shape)}")
        if image.shape[-2] % 16 or image.shape[-1] % 16:
            raise ContractError("input height and width must be multiples of 16")

        levels = []
        x = image
        for index, block in enumerate(self.levels):
            if index > 0:
                x = F.max_pool2d(x, kernel_size=2)
            x = block(x)
            levels.append(x)
        return FeaturePyramid(levels)


class FpnDecoder(nn.Module):
    """Top-down feature pyramid over encoder levels 2..5."""

    def __init__(self, in_channels, channels=128, norm_groups=8):
        super().__init__()
        self.lateral = nn.ModuleList(nn.Conv2d(c, channels, kernel_size=1) for c in in_channels)
        self.smooth = nn.ModuleList(
            nn.Sequential(nn.Conv2d(channels, channels, kernel_size=3, padding=1),
                          group_norm(channels, norm_groups),
                          nn.GELU())
            for _ in in_channels)

    def forward(self, levels):
        """Decode finest-first list of encoder levels, return finest-first outputs."""
        outputs = [None] * len(levels)
        top_down = None
        # coarsest level first, each finer level adds the upsampled coarser one
        for index in reversed(range(len(levels))):
            x = self.lateral[index](levels[index])
            if top_down is not None:
                x = x + F.interpolate(top_down, size=x.shape[-2:], mode="bilinear",
                                      align_corners=False)
            top_down = x
            outputs[index] = self.smooth[index](x)
        return outputs


class StreamDecoders(nn.Module):
    """Footprint and height decoders, one FPN per task."""

    def __init__(self, encoder_channels, channels=128, norm_groups=8, footprint=True):
        super().__init__()
        # encoder level 1 stays inside the encoder, streams start at half resolution
        stream_inputs = tuple(encoder_channels[1:])
        self.height = FpnDecoder(stream_inputs, channels, norm_groups)
        self.footprint = FpnDecoder(stream_inputs, channels, norm_groups) if footprint else None

    def forward(self, pyramid, with_footprint=True):
        """Return StreamFeatures for the pyramid."""
        pyramid.validate()
        levels = pyramid.levels[1:]
        height_pyramid = self.height(levels)
        f_fp = None
        if with_footprint and self.footprint is not None:
            f_fp = self.footprint(levels)[0]
        # three coarsest height levels, coarsest first
        height_levels = height_pyramid[-3:][::-1]
        return StreamFeatures(f_fp=f_fp, f_h=height_pyramid[0], height_levels=height_levels)


class ResidualDepthwiseBlock(nn.Module):
    """Residual block built only of depth-wise 3x3 convolutions."""

    def __init__(self, channels):
        super().__init__()
        self.conv1 = depthwise3x3(channels)
        self.conv2 = depthwise3x3(channels)

    def forward(self, x):
        return x + self.conv2(F.gelu(self.conv1(x)))


class Lrgt(nn.Module):
    """Lightweight residual group-wise trunk: 2C -> C/M -> N blocks -> C."""

    def __init__(self, channels, reduction=4, blocks=2, group_count=4):
        super().__init__()
        hidden = channels // reduction
        self.reduce = nn.Conv2d(2 * channels, hidden, kernel_size=1,
                                groups=conv_groups(group_count, 2 * channels, hidden))
        self.blocks = nn.Sequential(*[ResidualDepthwiseBlock(hidden) for _ in range(blocks)])
        self.restore = nn.Conv2d(hidden, channels, kernel_size=1,
                                 groups=conv_groups(group_count, hidden, channels))

    def forward(self, x):
        return self.restore(self.blocks(F.gelu(self.reduce(x))))


class Csem(nn.Module):
    """Cross-stream exchange between footprint and height features."""

    def __init__(self, channels=128, reduction=4, blocks=2, group_count=4,
                 exchange_mode="residual", zero_init=True):
        super().__init__()
        self.channels = channels
        self.exchange_mode = exchange_mode
        self.confidence = nn.Sequential(depthwise3x3(channels),
                                        nn.Conv2d(channels, 1, kernel_size=1))
        self.trunk = Lrgt(channels, reduction, blocks, group_count)
        self.gate = nn.Conv2d(channels, channels, kernel_size=1)
        self.footprint_projection = nn.Conv2d(channels, channels, kernel_size=1)
        self.height_projection = nn.Sequential(depthwise3x3(channels),
                                               nn.Conv2d(channels, channels, kernel_size=1))
        if zero_init:
            # exchange starts as identity of the residual path
            for layer in (self.footprint_projection, self.height_projection[-1]):
                nn.init.zeros_(layer.weight)
                nn.init.zeros_(layer.bias)

    def forward(self, f_fp, f_h):
        """Exchange cues between the streams, return CsemOutputs."""
        if f_fp.shape != f_h.shape or f_fp.ndim != 4 or f_fp.shape[1] != self.channels:
            raise ContractError(f"CSEM needs two [B, {self.channels}, H, W] features, got "
                                f"{tuple(f_fp.shape)} and {tuple(f_h.shape)}")

        confidence = torch.sigmoid(self.confidence(f_fp))
        z = self.trunk(torch.cat((f_fp, f_h), dim=1))
        gate = torch.sigmoid(self.gate(z))

        exchanged_fp = self.footprint_projection(z) * gate
        exchanged_h = self.height_projection(z) * gate * confidence

        if self.exchange_mode == "residual":
            refined_fp, refined_h = f_fp + exchanged_fp, f_h + exchanged_h
        else:
            refined_fp, refined_h = exchanged_fp, exchanged_h
        return CsemOutputs(f_fp=refined_fp, f_h=refined_h, confidence=confidence, gate=gate)


class FootprintHead(nn.Module):
    """3x3 convolution to one logit channel, upsampled to the input size."""

    def __init__(self, channels=128):
        super().__init__()
        self.conv = nn.Conv2d(channels, 1, kernel_size=3, padding=1)

    def forward(self, features, size=(256, 256)):
        logits = self.conv(features)
        return F.interpolate(logits, size=size, mode="bilinear", align_corners=False)

