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

"""Shared fixtures and hypothesis profiles."""

import os

import hypothesis
import numpy as np
import pytest
import torch

from tsonet.config import ModelConfig, SyntheticSceneSpec, TrainConfig
from tsonet.dataset_io import ManifestEntry, SplitManifest, save_patch, write_manifest
from tsonet.synthetic import SyntheticSceneGenerator, synthesize_dataset

np.seterr(all="warn")

hypothesis.settings.register_profile("ci", max_examples=100, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


def tiny_model_config(**overrides):
    """Narrow network usable on CPU in unit tests."""
    values = dict(encoder_channels=(8, 8, 16, 16, 16), stream_channels=8, n_bins=4,
                  attention_heads=2, norm_groups=4, lrgt_reduction=4, group_count=4)
    values.update(overrides)
    return ModelConfig(**values)


def small_scene_spec(**overrides):
    """Scenes of 64x64 pixels with a few buildings."""
    values = dict(size=64, n_buildings=(1, 4), footprint_size=(6, 16))
    values.update(overrides)
    return SyntheticSceneSpec(**values)


def write_dataset(directory, patches, splits):
    """Write patches and a hand-made manifest with the given split of each patch."""
    entries = []
    for patch, split in zip(patches, splits):
        header = save_patch(patch, directory / "samples")
        entries.append(ManifestEntry(header.relative_to(directory).as_posix(), split))
    write_manifest(SplitManifest(entries=entries), directory)
    return directory


@pytest.fixture
def scene_spec():
    return small_scene_spec()


@pytest.fixture
def small_dataset(tmp_path, scene_spec):
    """Twelve 64x64 synthetic samples split 10/1/1 by hand."""
    generator = SyntheticSceneGenerator(scene_spec)
    patches = [generator.generate(seed) for seed in range(12)]
    return write_dataset(tmp_path / "data", patches, ["train"] * 10 + ["val", "test"])


@pytest.fixture
def synthetic_dataset(tmp_path, scene_spec):
    """Twenty synthetic samples with the seeded 70/20/10 split."""
    synthesize_dataset(scene_spec, 20, tmp_path / "synth", seed=3)
    return tmp_path / "synth"


@pytest.fixture
def tiny_train_config(small_dataset, tmp_path):
    """Training config for a couple of steps on the small dataset."""
    return TrainConfig(data_dir=str(small_dataset), out_dir=str(tmp_path / "run"),
                       batch_size=4, epochs=2, log_every=1, model=tiny_model_config())


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(1)
    yield
