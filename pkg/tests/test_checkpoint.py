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

"""Checkpoint storage."""

import dataclasses

import pytest
import torch
from conftest import tiny_model_config

from tsonet.checkpoint import load_checkpoint, read_descriptor, save_checkpoint
from tsonet.config import TrainConfig
from tsonet.errors import DataError, FormatError
from tsonet.network import TSONet


def test_round_trip_gives_identical_outputs(tmp_path):
    torch.manual_seed(0)
    model = TSONet(tiny_model_config()).eval()
    config = TrainConfig(model=tiny_model_config(), band_set="ALL7")
    path = save_checkpoint(tmp_path / "model.npz", model, config, step=12, epoch=3,
                           best_val_rmse=4.5)

    loaded, descriptor = load_checkpoint(path)
    assert descriptor.step == 12
    assert descriptor.epoch == 3
    assert descriptor.best_val_rmse == 4.5
    assert descriptor.train_config["band_set"] == "ALL7"
    assert descriptor.network_config() == model.config
    assert not loaded.training

    image = torch.randn(1, 7, 32, 32)
    with torch.no_grad():
        expected, got = model(image), loaded(image)
    assert torch.equal(expected.height, got.height)
    assert torch.equal(expected.footprint_logits, got.footprint_logits)


def test_descriptor_alone(tmp_path):
    model = TSONet(tiny_model_config(use_febr=False))
    path = save_checkpoint(tmp_path / "nested" / "model.npz", model)
    descriptor = read_descriptor(path)
    assert descriptor.model_config["use_febr"] is False
    assert descriptor.train_config == {}
    assert descriptor.best_val_rmse is None


def test_missing_checkpoint(tmp_path):
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "none.npz")


def test_unreadable_checkpoint(tmp_path):
    path = tmp_path / "broken.npz"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(FormatError):
        read_descriptor(path)


def test_state_not_matching_config(tmp_path):
    model = TSONet(tiny_model_config())
    model.config = dataclasses.replace(model.config, n_bins=8)
    path = save_checkpoint(tmp_path / "model.npz", model)
    with pytest.raises(FormatError):
        load_checkpoint(path)
