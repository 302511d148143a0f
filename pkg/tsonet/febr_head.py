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
Feature-enhanced bin refinement: ordinal height prediction from bin queries.

Processing order
-----

1. the three coarsest height levels are aligned to C channels, fused
   coarse-to-fine (bilinear upsample + add) and enhanced by a Restormer-style
   block (channel-transposed attention + gated depth-wise feed-forward)
2. after each level, the K bin queries read out the enhanced tokens:

```
A = softmax(s * norm(Q) . norm(F)^T)  rows sum to 1, s is a learned scale
R = A . norm(F)                       (A . F with normalize_readout off)
Q = norm(Q + R)
```

3. two MLPs turn the final queries into bin values (scaled softplus, >= 0) and bin
   embeddings; embeddings times the refined height features give per-pixel
   bin logits, the height is the expectation of bin values.
"""

import math
from dataclasses import dataclass
from typing import List

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange

from tsonet.errors import ContractError

MAX_LOG_SIMILARITY_SCALE = math.log(100.0)


def l2_normalize(x, eps=1e-6):
    """Row-wise L2 normalization with `eps` in the denominator, so norm(0) == 0."""
    return x / (torch.linalg.vector_norm(x, dim=-1, keepdim=True) + eps)


def to_3d(x):
    return rearrange(x, "b c h w -> b (h w) c")


def to_4d(x, h, w):
    return rearrange(x, "b (h w) c -> b c h w", h=h, w=w)


class LayerNorm2d(nn.Module):
    """Per-pixel LayerNorm over channels."""

    def __init__(self, channels):
        super().__init__()
        self.norm = nn.LayerNorm(channels)

    def forward(self, x):
        h, w = x.shape[-2:]
        return to_4d(self.norm(to_3d(x)), h, w)


class ChannelAttention(nn.Module):
    """Multi-head attention across channels with learnable temperature."""

    def __init__(self, channels, heads=4):
        super().__init__()
        self.heads = heads
        self.temperature = nn.Parameter(torch.ones(heads, 1, 1))
        self.qkv = nn.Conv2d(channels, channels * 3, kernel_size=1)
        self.qkv_dwconv = nn.Conv2d(channels * 3, channels * 3, kernel_size=3, padding=1,
                                    groups=channels * 3)
        self.project_out = nn.Conv2d(channels, channels, kernel_size=1)

    def forward(self, x):
        _, _, h, w = x.shape
        q, k, v = self.qkv_dwconv(self.qkv(x)).chunk(3, dim=1)

        q = rearrange(q, "b (head c) h w -> b head c (h w)", head=self.heads)
        k = rearrange(k, "b (head c) h w -> b head c (h w)", head=self.heads)
        v = rearrange(v, "b (head c) h w -> b head c (h w)", head=self.heads)

        q = F.normalize(q, dim=-1)
        k = F.normalize(k, dim=-1)

        # C x C attention map per head, cost is linear in the number of pixels
        attn = (q @ k.transpose(-2, -1)) * self.temperature
        attn = attn.softmax(dim=-1)

        out = rearrange(attn @ v, "b head c (h w) -> b (head c) h w", head=self.heads,
                        h=h, w=w)
        return self.project_out(out)


class GatedFeedForward(nn.Module):
    """Gated depth-wise feed-forward network."""

    def __init__(self, channels, expansion=2.66):
        super().__init__()
        hidden = int(channels * expansion)
        self.project_in = nn.Conv2d(channels, hidden * 2, kernel_size=1)
        self.dwconv = nn.Conv2d(hidden * 2, hidden * 2, kernel_size=3, padding=1,
                                groups=hidden * 2)
        self.project_out = nn.Conv2d(hidden, channels, kernel_size=1)

    def forward(self, x):
        x1, x2 = self.dwconv(self.project_in(x)).chunk(2, dim=1)
        return self.project_out(F.gelu(x1) * x2)


class RestormerBlock(nn.Module):
    """Pre-norm attention and feed-forward, both with residual connections."""

    def __init__(self, channels, heads=4, expansion=2.66):
        super().__init__()
        self.norm1 = LayerNorm2d(channels)
        self.attn = ChannelAttention(channels, heads)
        self.norm2 = LayerNorm2d(channels)
        self.ffn = GatedFeedForward(channels, expansion)

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.ffn(self.norm2(x))


class LevelEnhancer(nn.Module):
    """Channel alignment, coarse-to-fine fusion and enhancement of one level."""

    def __init__(self, in_channels, channels, heads=4, expansion=2.66):
        super().__init__()
        self.align = nn.Conv2d(in_channels, channels, kernel_size=1)
        self.block = RestormerBlock(channels, heads, expansion)

    def forward(self, feature, previous=None):
        """Enhance `feature`, fusing the enhanced coarser level when given."""
        x = self.align(feature)
        if previous is not None:
            upsampled = F.interpolate(previous, scale_factor=2, mode="bilinear",
                                      align_corners=False)
            if upsampled.shape != x.shape:
                raise ContractError(f"upsampled coarser level {tuple(upsampled.shape)} does "
                                    f"not match {tuple(x.shape)}")
            x = x + upsampled
        return self.block(x)


def cfqr_update(queries, feature, eps=1e-6, query_norm=None, scale=1.0, normalize_tokens=False):
    """One coarse-to-fine query readout step.

    `queries` is [B, K, C], `feature` is [B, C, H, W]. Returns the updated
    queries and the [B, K, H*W] attention map. `scale` multiplies the cosine
    similarities before the softmax. With `normalize_tokens` the readout
    averages unit-length tokens, so it stays on the scale of the queries.
    `query_norm` replaces the final L2 normalization when given (LayerNorm
    variant).
    """
    if queries.shape[-1] != feature.shape[1]:
        raise ContractError(f"queries have {queries.shape[-1]} channels, feature has "
                            f"{feature.shape[1]}")
    tokens = to_3d(feature)
    unit_tokens = l2_normalize(tokens, eps)
    similarity = l2_normalize(queries, eps) @ unit_tokens.transpose(-2, -1)
    attention = (similarity * scale).softmax(dim=-1)
    readout = attention @ (unit_tokens if normalize_tokens else tokens)

    updated = queries + readout
    if query_norm is None:
        updated = l2_normalize(updated, eps)
    else:
        updated = query_norm(updated)
    return updated, attention


def mlp(channels, out_channels):
    """Two-layer perceptron with GELU."""
    return nn.Sequential(nn.Linear(channels, channels), nn.GELU(),
                         nn.Linear(channels, out_channels))


class BinPredictor(nn.Module):
    """Bin values and bin embeddings from the final queries."""

    def __init__(self, channels, value_scale=1.0):
        super().__init__()
        self.value_scale = value_scale
        self.values = mlp(channels, 1)
        self.embeddings = mlp(channels, channels)

    def forward(self, queries):
        """Return bin values [B, K] in meters (non-negative) and embeddings [B, K, C]."""
        values = self.value_scale * F.softplus(self.values(queries)).squeeze(-1)
        return values, self.embeddings(queries)


def bin_logits(embeddings, features, size=(256, 256)):
    """Per-pixel bin logits upsampled to `size` and the softmax probabilities."""
    if embeddings.shape[-1] != features.shape[1]:
        raise ContractError(f"bin embeddings have {embeddings.shape[-1]} channels, height "
                            f"features have {features.shape[1]}")
    logits = torch.einsum("bkc,bchw->bkhw", embeddings, features)
    # logits are resampled, softmax is taken at output resolution
    logits = F.interpolate(logits, size=size, mode="bilinear", align_corners=False)
    return logits, logits.softmax(dim=1)


def height_expectation(probs, values):
    """Expected height per pixel: sum_k p_k * b_k."""
    return torch.einsum("bkhw,bk->bhw", probs, values)


def initial_queries(n_bins, channels, mode="orthogonal", std=0.02):
    """Starting bin queries [K, C].

    `orthogonal` gives unit-length rows, orthonormal while K <= C. `normal`
    draws N(0, std). `zeros` is the all-zero start, every query then reads
    out the same mean token and the bins stay identical.
    """
    queries = torch.zeros(n_bins, channels)
    if mode == "orthogonal":
        nn.init.orthogonal_(queries)
        queries = l2_normalize(queries)
    elif mode == "normal" and std > 0:
        nn.init.normal_(queries, std=std)
    elif mode not in ("normal", "zeros"):
        raise ContractError(f"unknown query initialization {mode!r}")
    return queries


@dataclass
class BinPrediction:
    """Outputs of the bin head."""

    bin_values: torch.Tensor
    bin_embeddings: torch.Tensor
    bin_probs: torch.Tensor
    height: torch.Tensor
    attentions: List[torch.Tensor]


class FebrHead(nn.Module):
    """Three-level bin refinement head."""

    def __init__(self, channels=128, n_bins=64, heads=4, expansion=2.66, query_norm="l2",
                 query_init="orthogonal", query_init_std=0.02, similarity_scale=10.0,
                 learn_similarity_scale=True, normalize_readout=True, bin_value_scale=10.0,
                 eps=1e-6, levels=3):
        super().__init__()
        self.eps = eps
        self.normalize_readout = normalize_readout
        self.enhancers = nn.ModuleList(LevelEnhancer(channels, channels, heads, expansion)
                                       for _ in range(levels))
        self.queries = nn.Parameter(initial_queries(n_bins, channels, query_init,
                                                    query_init_std))
        log_scale = torch.tensor(math.log(similarity_scale))
        if learn_similarity_scale:
            self.log_similarity_scale = nn.Parameter(log_scale)
        else:
            self.register_buffer("log_similarity_scale", log_scale)
        self.query_norms = nn.ModuleList(nn.LayerNorm(channels) for _ in range(levels)) \
            if query_norm == "layer" else None
        self.predictor = BinPredictor(channels, bin_value_scale)

    @property
    def similarity_scale(self):
        return self.log_similarity_scale.clamp(max=MAX_LOG_SIMILARITY_SCALE).exp()

    def refine_queries(self, height_levels):
        """Run all enhancement + readout stages, coarsest level first."""
        if len(height_levels) != len(self.enhancers):
            raise ContractError(f"expected {len(self.enhancers)} height levels, "
                                f"got {len(height_levels)}")
        batch = height_levels[0].shape[0]
        queries = self.queries.unsqueeze(0).expand(batch, -1, -1)
        scale = self.similarity_scale

        enhanced = None
        attentions = []
        for index, (enhancer, feature) in enumerate(zip(self.enhancers, height_levels)):
            enhanced = enhancer(feature, enhanced)
            norm = self.query_norms[index] if self.query_norms is not None else None
            queries, attention = cfqr_update(queries, enhanced, self.eps, norm, scale,
                                             self.normalize_readout)
            attentions.append(attention)
        return queries, attentions

    def forward(self, height_levels, features, size=(256, 256)):
        """Predict bins and expected height from the levels and refined features."""
        queries, attentions = self.refine_queries(height_levels)
        values, embeddings = self.predictor(queries)
        _, probs = bin_logits(embeddings, features, size)
        return BinPrediction(bin_values=values, bin_embeddings=embeddings, bin_probs=probs,
                             height=height_expectation(probs, values), attentions=attentions)
