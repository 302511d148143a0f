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
Multi-task training objective.

```
L   = L_h + lambda_f * (L_tver + lambda_bce * L_bce)
L_h = sum(v * w * |h^ - h|) / (sum(v * w) + eps)
```

Without the footprint stream only the plain masked L1 over valid pixels is
kept. Every sum runs over valid pixels only, so pixels with `v = 0` never
influence any term.
"""

from dataclasses import dataclass
from typing import Optional

import torch

from tsonet.supervision import derive_supervision


def masked_l1_loss(prediction, target, valid, eps=1e-3):
    """Plain L1 over valid pixels: sum(v * |h^ - h|) / (sum(v) + eps)."""
    return weighted_l1_loss(prediction, target, valid, torch.ones_like(valid), eps)


def weighted_l1_loss(prediction, target, valid, weights, eps=1e-3):
    """Spatially weighted L1: sum(v * w * |h^ - h|) / (sum(v * w) + eps)."""
    vw = valid * weights
    # where() keeps masked pixels out of the graph, also for non-finite values
    residual = torch.where(vw > 0, (prediction - target).abs(), torch.zeros_like(prediction))
    return (vw * residual).sum() / (vw.sum() + eps)


def tversky_loss(probability, footprint, valid, alpha_t=0.7, beta_t=0.3, eps=1e-3):
    """Tversky loss, `alpha_t` weights false negatives and `beta_t` false positives."""
    p = probability * valid
    f = footprint * valid
    intersection = (p * footprint).sum()
    false_negative = (f * (1.0 - probability)).sum()
    false_positive = ((1.0 - footprint) * p).sum()
    denominator = intersection + alpha_t * false_negative + beta_t * false_positive
    return 1.0 - (intersection + eps) / (denominator + eps)


def bce_loss(probability, footprint, valid, eps=1e-3):
    """Binary cross-entropy averaged over valid pixels, `eps` inside the logs."""
    log_likelihood = footprint * torch.log(probability + eps) + \
        (1.0 - footprint) * torch.log(1.0 - probability + eps)
    log_likelihood = torch.where(valid > 0, log_likelihood, torch.zeros_like(log_likelihood))
    return -(valid * log_likelihood).sum() / (valid.sum() + eps)


def total_loss(loss_h, loss_tver=None, loss_bce=None, lambda_f=1.0, lambda_bce=1.0):
    """Compose L = L_h + lambda_f * (L_tver + lambda_bce * L_bce).

    Missing footprint terms mean a height-only configuration, L = L_h.
    """
    if loss_tver is None and loss_bce is None:
        return loss_h
    footprint_term = (loss_tver if loss_tver is not None else 0.0) + \
        lambda_bce * (loss_bce if loss_bce is not None else 0.0)
    return loss_h + lambda_f * footprint_term


@dataclass
class LossBreakdown:
    """Total loss and the terms it is made of."""

    total: torch.Tensor
    height: torch.Tensor
    footprint: Optional[torch.Tensor] = None
    tversky: Optional[torch.Tensor] = None
    bce: Optional[torch.Tensor] = None

    def as_floats(self):
        """Detached values for the training log."""
        def value(t):
            return None if t is None else float(t.detach())
        return {"loss": value(self.total), "loss_h": value(self.height),
                "loss_f": value(self.footprint), "loss_tver": value(self.tversky),
                "loss_bce": value(self.bce)}


def compute_objective(outputs, heights, valid, loss_config, use_footprint_stream=True):
    """Loss for a batch of network outputs against [B, H, W] labels."""
    cfg = loss_config
    if not use_footprint_stream or outputs.footprint_logits is None:
        loss_h = masked_l1_loss(outputs.height, heights, valid, cfg.epsilon)
        return LossBreakdown(total=loss_h, height=loss_h)

    # NoData pixels count as background for the footprint and its erosion
    supervision = derive_supervision(torch.where(valid > 0, heights, torch.zeros_like(heights)),
                                     cfg.tau_fp, cfg.alpha_outer)
    loss_h = weighted_l1_loss(outputs.height, heights, valid, supervision.weights, cfg.epsilon)

    probability = torch.sigmoid(outputs.footprint_logits)
    loss_tver = tversky_loss(probability, supervision.footprint, valid, cfg.alpha_t,
                             cfg.beta_t, cfg.epsilon)
    loss_bce = bce_loss(probability, supervision.footprint, valid, cfg.epsilon)
    total = total_loss(loss_h, loss_tver, loss_bce, cfg.lambda_f, cfg.lambda_bce)
    return LossBreakdown(total=total, height=loss_h,
                         footprint=loss_tver + cfg.lambda_bce * loss_bce,
                         tversky=loss_tver, bce=loss_bce)
