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

"""Footprint mask, eroded interior and spatial weights derived from a height label."""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from tsonet.errors import ConfigError


@dataclass
class SupervisionPack:
    """Footprint FP, interior I and weight map W for a batch of labels."""

    footprint: torch.Tensor
    interior: torch.Tensor
    weights: torch.Tensor
    tau_fp: float = 2.0
    alpha_outer: float = 0.1


def derive_footprint_mask(heights, tau_fp=2.0):
    """Binary footprint, 1 where height is strictly above `tau_fp`."""
    return (heights > tau_fp).to(heights.dtype if heights.is_floating_point() else torch.float32)


def erode_footprint(footprint):
    """Erode footprint with 3x3 window: I = 1 - maxpool3x3(1 - FP).

    The complement is max-pooled with stride 1. Outside of the image the
    complement is 0, so buildings touching the frame are not eroded there.
    """
    shape = footprint.shape
    background = (1.0 - footprint).reshape(-1, 1, shape[-2], shape[-1])
    # max_pool2d pads with -inf, which equals zero padding for a {0,1} map
    # because the window always contains its own center
    grown = F.max_pool2d(background, kernel_size=3, stride=1, padding=1)
    return (1.0 - grown).reshape(shape)


def build_weight_map(interior, alpha_outer=0.1):
    """Weights 1 inside building interiors and `alpha_outer` elsewhere."""
    if not 0.0 < alpha_outer <= 1.0:
        raise ConfigError(f"alpha_outer must be in (0, 1], got {alpha_outer}")
    return interior + alpha_outer * (1.0 - interior)


def derive_supervision(heights, tau_fp=2.0, alpha_outer=0.1):
    """Compute the complete supervision pack for height label(s)."""
    footprint = derive_footprint_mask(heights, tau_fp)
    interior = erode_footprint(footprint)
    weights = build_weight_map(interior, alpha_outer)
    return SupervisionPack(footprint=footprint, interior=interior, weights=weights,
                           tau_fp=tau_fp, alpha_outer=alpha_outer)
