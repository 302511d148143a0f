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
Checkpoints stored as numpy `.npz` archives.

Every entry of the model state dict is one array named `state/<name>`; the
`__descriptor__` entry is a JSON string with the model config, the training
config echo, the global step, the epoch and the best validation RMSE.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from tsonet.config import ModelConfig, from_dict, to_dict
from tsonet.errors import DataError, FormatError
from tsonet.network import TSONet

logger = logging.getLogger(__name__)

DESCRIPTOR_KEY = "__descriptor__"
STATE_PREFIX = "state/"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """Descriptor of a stored model."""

    model_config: dict
    train_config: dict = field(default_factory=dict)
    step: int = 0
    epoch: Optional[int] = None
    best_val_rmse: Optional[float] = None
    format_version: int = FORMAT_VERSION

    def network_config(self):
        """ModelConfig the stored parameters belong to."""
        return from_dict(ModelConfig, self.model_config)


def save_checkpoint(path, model, train_config=None, step=0, epoch=None, best_val_rmse=None):
    """Write model parameters and descriptor into `path`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    descriptor = Checkpoint(model_config=to_dict(model.config),
                            train_config=to_dict(train_config) if train_config else {},
                            step=int(step), epoch=epoch,
                            best_val_rmse=None if best_val_rmse is None else float(best_val_rmse))

    arrays = {STATE_PREFIX + name: tensor.detach().cpu().numpy()
              for name, tensor in model.state_dict().items()}
    arrays[DESCRIPTOR_KEY] = np.array(json.dumps(descriptor.__dict__))

    # np.savez appends .npz to names without that suffix
    with open(path, "wb") as fout:
        np.savez(fout, **arrays)
    logger.debug("checkpoint with %d tensors written to %s", len(arrays) - 1, path)
    return path


def read_descriptor(path):
    """Read only the Checkpoint descriptor."""
    with _open_archive(path) as archive:
        return _descriptor(archive, path)


def load_checkpoint(path, device="cpu"):
    """Rebuild the model from `path`, return (model, Checkpoint)."""
    with _open_archive(path) as archive:
        descriptor = _descriptor(archive, path)
        model = TSONet(descriptor.network_config())
        state = {name[len(STATE_PREFIX):]: torch.from_numpy(archive[name].copy())
                 for name in archive.files if name.startswith(STATE_PREFIX)}
    try:
        model.load_state_dict(state)
    except RuntimeError as e:
        raise FormatError(f"checkpoint {path} does not match its model config: {e}") from e
    model.to(device)
    model.eval()
    return model, descriptor


def _open_archive(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint {path} does not exist")
    try:
        return np.load(path, allow_pickle=False)
    except (OSError, ValueError) as e:
        raise FormatError(f"checkpoint {path} can not be read: {e}") from e


def _descriptor(archive, path):
    if DESCRIPTOR_KEY not in archive.files:
        raise FormatError(f"checkpoint {path} has no descriptor")
    data = json.loads(archive[DESCRIPTOR_KEY].item())
    return Checkpoint(**data)
