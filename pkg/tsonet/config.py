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
Configuration objects for the network, the objective, training and the scene synthesizer.

Config files are YAML documents (plain JSON is accepted as well, it is a
subset of YAML). Keys mirror the dataclass field names, nested `model:` and
`loss:` sections fill in `ModelConfig` and `LossConfig`:

```
data_dir: data/
batch_size: 10
epochs: 30
use_csem: true
loss:
  tau_fp: 2.0
model:
  stream_channels: 128
```
"""

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import yaml

from tsonet.errors import ConfigError

# Number of input bands for each supported band configuration.
BAND_SET_CHANNELS = {"ALL7": 7, "RGB_NIR": 4, "RGB": 3}


@dataclass
class LossConfig:
    """Weights and thresholds of the multi-task objective."""

    tau_fp: float = 2.0
    alpha_outer: float = 0.1
    alpha_t: float = 0.7
    beta_t: float = 0.3
    lambda_bce: float = 1.0
    lambda_f: float = 1.0
    epsilon: float = 1e-3

    def validate(self):
        """Check that all values are usable."""
        if not 0.0 < self.alpha_outer <= 1.0:
            raise ConfigError(f"alpha_outer must be in (0, 1], got {self.alpha_outer}")
        for name in ("tau_fp", "alpha_t", "beta_t", "epsilon"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        # lambda_f = 0 is a legal way to switch the footprint term off
        for name in ("lambda_bce", "lambda_f"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must not be negative")
        return self


@dataclass
class ModelConfig:
    """Widths and switches of the two-stream network."""

    in_channels: int = 7
    encoder_channels: Tuple[int, ...] = (32, 64, 128, 256, 512)
    stream_channels: int = 128
    n_bins: int = 64
    attention_heads: int = 4
    ffn_expansion: float = 2.66
    lrgt_reduction: int = 4
    lrgt_blocks: int = 2
    group_count: int = 4
    norm_groups: int = 8
    exchange_mode: str = "residual"
    zero_init_exchange: bool = True
    query_norm: str = "l2"
    query_init: str = "orthogonal"
    query_init_std: float = 0.02
    similarity_scale: float = 10.0
    learn_similarity_scale: bool = True
    normalize_readout: bool = True
    bin_value_scale: float = 10.0
    norm_eps: float = 1e-6
    use_csem: bool = True
    use_febr: bool = True
    use_footprint_stream: bool = True

    def validate(self):
        """Check widths and enumerated options."""
        if len(self.encoder_channels) != 5:
            raise ConfigError("encoder_channels must list exactly five widths")
        if self.in_channels not in BAND_SET_CHANNELS.values():
            raise ConfigError(f"unsupported number of input bands: {self.in_channels}")
        if self.stream_channels % self.group_count != 0:
            raise ConfigError("stream_channels must be divisible by group_count")
        if self.stream_channels % self.attention_heads != 0:
            raise ConfigError("stream_channels must be divisible by attention_heads")
        if self.stream_channels % self.lrgt_reduction != 0:
            raise ConfigError("stream_channels must be divisible by lrgt_reduction")
        if self.exchange_mode not in ("residual", "replace"):
            raise ConfigError(f"unknown exchange_mode {self.exchange_mode!r}")
        if self.query_norm not in ("l2", "layer"):
            raise ConfigError(f"unknown query_norm {self.query_norm!r}")
        if self.n_bins < 1:
            raise ConfigError("n_bins must be positive")
        if self.query_init_std < 0:
            raise ConfigError("query_init_std must not be negative")
        if self.query_init not in ("orthogonal", "normal", "zeros"):
            raise ConfigError(f"unknown query_init {self.query_init!r}")
        if self.similarity_scale <= 0 or self.bin_value_scale <= 0:
            raise ConfigError("similarity_scale and bin_value_scale must be positive")
        return self


@dataclass
class SyntheticSceneSpec:
    """Parameters of the rectangle-city scene generator."""

    size: int = 256
    n_buildings: Tuple[int, int] = (3, 12)
    footprint_size: Tuple[int, int] = (8, 40)
    # log-normal heights reproduce the long tail of real building heights
    height_log_mean: float = 2.5
    height_log_sigma: float = 0.6
    height_range: Tuple[float, float] = (3.0, 120.0)
    footprint_coeffs: Tuple[float, ...] = (0.08, 0.10, 0.12, 0.10, 0.09, 0.07, 0.05)
    height_coeffs: Tuple[float, ...] = (0.30, 0.25, 0.20, 0.25, 0.30, 0.35, 0.40)
    band_offsets: Tuple[float, ...] = (0.05, 0.07, 0.06, 0.12, 0.18, 0.22, 0.25)
    noise_sigma: float = 0.01
    gsd_m: float = 4.75

    def validate(self):
        """Reject degenerate ranges."""
        low, high = self.n_buildings
        if low < 0 or high < low:
            raise ConfigError(f"invalid n_buildings range {self.n_buildings}")
        low, high = self.footprint_size
        if low < 1 or high < low or high > self.size:
            raise ConfigError(f"invalid footprint_size range {self.footprint_size}")
        low, high = self.height_range
        if low <= 0 or high < low:
            raise ConfigError(f"invalid height_range {self.height_range}")
        if self.height_log_sigma < 0 or self.noise_sigma < 0:
            raise ConfigError("height_log_sigma and noise_sigma must not be negative")
        for name in ("footprint_coeffs", "height_coeffs", "band_offsets"):
            if len(getattr(self, name)) != 7:
                raise ConfigError(f"{name} needs one value per band (7)")
        if self.size < 16 or self.gsd_m <= 0:
            raise ConfigError("scene size must be >= 16 pixels and gsd_m positive")
        return self


@dataclass
class TrainConfig:
    """Training recipe, dataset location and ablation switches."""

    data_dir: str = "data"
    out_dir: str = "runs/tsonet"
    batch_size: int = 10
    epochs: int = 30
    base_lr: float = 1e-4
    weight_decay: float = 0.01
    warmup_fraction: float = 0.30
    grad_clip_l2: float = 10.0
    seed: int = 0
    num_workers: int = 0
    max_steps: Optional[int] = None
    band_set: str = "ALL7"
    target_gsd_m: Optional[float] = None
    deterministic: bool = True
    device: str = "cpu"
    log_every: int = 10
    use_csem: bool = True
    use_febr: bool = True
    use_footprint_stream: bool = True
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)

    def validate(self):
        """Check the recipe values and the nested sections."""
        if not 0.0 < self.warmup_fraction < 1.0:
            raise ConfigError("warmup_fraction must be in (0, 1)")
        for name in ("base_lr", "grad_clip_l2", "batch_size", "epochs"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must not be negative")
        if self.band_set not in BAND_SET_CHANNELS:
            raise ConfigError(f"unknown band_set {self.band_set!r}")
        if self.max_steps is not None and self.max_steps <= 0:
            raise ConfigError("max_steps must be positive when set")
        self.loss.validate()
        self.network_config().validate()
        return self

    def network_config(self):
        """Model configuration with band count and ablation switches applied."""
        return dataclasses.replace(self.model,
                                   in_channels=BAND_SET_CHANNELS[self.band_set],
                                   use_csem=self.use_csem,
                                   use_febr=self.use_febr,
                                   use_footprint_stream=self.use_footprint_stream)


def from_dict(cls, data):
    """Construct dataclass `cls` from a (possibly nested) dictionary."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"section for {cls.__name__} must be a mapping")

    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {', '.join(unknown)}")

    values = {}
    for name, value in data.items():
        default = getattr(cls(), name)
        if dataclasses.is_dataclass(default):
            value = from_dict(type(default), value)
        elif isinstance(default, tuple) and isinstance(value, list):
            value = tuple(value)
        values[name] = value
    return cls(**values)


def to_dict(config):
    """Plain dictionary (JSON and YAML friendly) representation of a config object."""
    data = dataclasses.asdict(config)
    return _untuple(data)


def _untuple(value):
    if isinstance(value, dict):
        return {k: _untuple(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_untuple(v) for v in value]
    return value


def load_config(path, cls=TrainConfig):
    """Read YAML/JSON config file and return validated config object."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    with path.open() as fin:
        try:
            data = yaml.safe_load(fin)
        except yaml.YAMLError as e:
            raise ConfigError(f"config file {path} can not be parsed: {e}") from e
    return from_dict(cls, data).validate()

