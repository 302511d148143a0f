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

"""Sample format, split, band selection and resolution degradation."""

import dataclasses
import json
import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from tsonet.dataset_io import (BAND_NAMES, Patch, PatchDataset, PatchMeta, area_weights,
                               band_table, band_wavelengths, degrade_resolution,
                               derive_valid_mask, linear_weights, load_patch, read_manifest,
                               sample_files, save_patch, select_bands, split_counts,
                               split_dataset, write_manifest)
from tsonet.errors import ConfigError, DataError, FormatError, PairingError


def random_patch(seed=0, size=256, scene_id="scene"):
    rng = np.random.default_rng(seed)
    image = rng.uniform(0.01, 1.0, size=(7, size, size)).astype(np.float32)
    heights = np.where(rng.uniform(size=(size, size)) > 0.7,
                       rng.uniform(3.0, 60.0, size=(size, size)), 0.0).astype(np.float32)
    return Patch(image=image, heights=heights, valid_mask=np.ones((size, size), np.uint8),
                 meta=PatchMeta(scene_id=scene_id))


def test_save_load_round_trip_is_bit_exact(tmp_path):
    patch = random_patch()
    header = save_patch(patch, tmp_path)
    loaded = load_patch(header)
    assert loaded.image.shape == (7, 256, 256)
    assert loaded.image.dtype == np.float32
    assert np.array_equal(loaded.image, patch.image)
    assert np.array_equal(loaded.heights, patch.heights)
    assert loaded.meta.scene_id == "scene"
    assert loaded.meta.gsd_m == 4.75
    assert loaded.meta.band_order == BAND_NAMES


def test_any_sample_file_identifies_the_sample(tmp_path):
    save_patch(random_patch(size=32), tmp_path)
    for path in sample_files(tmp_path / "scene"):
        assert load_patch(path, expected_size=32).meta.scene_id == "scene"


def test_empty_label(tmp_path):
    patch = dataclasses.replace(random_patch(size=32), heights=np.zeros((32, 32), np.float32))
    loaded = load_patch(save_patch(patch, tmp_path), expected_size=32)
    assert np.all(loaded.heights == 0)
    assert loaded.building_pixels(2.0) == 0


def test_nodata_column_is_masked(tmp_path):
    patch = random_patch(size=32)
    patch.image[:, :, 5] = 0.0
    loaded = load_patch(save_patch(patch, tmp_path), expected_size=32)

    expected = np.ones((32, 32), np.uint8)
    for i in range(32):
        for j in range(32):
            if all(patch.image[b, i, j] == 0.0 for b in range(7)):
                expected[i, j] = 0
    assert np.array_equal(loaded.valid_mask, expected)
    assert np.all(loaded.valid_mask[:, 5] == 0)
    # labels under NoData are reset to 0
    assert np.all(loaded.heights[:, 5] == 0)


def test_single_zero_band_is_still_valid():
    image = np.ones((7, 2, 2), np.float32)
    image[3, 0, 0] = 0.0
    assert derive_valid_mask(image).tolist() == [[1, 1], [1, 1]]


def test_missing_label_is_pairing_error(tmp_path):
    header = save_patch(random_patch(size=32), tmp_path)
    sample_files(header)[2].unlink()
    with pytest.raises(PairingError):
        load_patch(header, expected_size=32)


def test_wrong_shape_is_format_error(tmp_path):
    header = save_patch(random_patch(size=32), tmp_path)
    with pytest.raises(FormatError):
        load_patch(header)


def test_truncated_payload_is_format_error(tmp_path):
    header = save_patch(random_patch(size=32), tmp_path)
    image_path = sample_files(header)[1]
    image_path.write_bytes(image_path.read_bytes()[:-4])
    with pytest.raises(FormatError):
        load_patch(header, expected_size=32)


def test_header_band_mismatch_is_format_error(tmp_path):
    header = save_patch(random_patch(size=32), tmp_path)
    data = json.loads(header.read_text())
    data["band_order"] = data["band_order"][:3]
    header.write_text(json.dumps(data))
    with pytest.raises(FormatError):
        load_patch(header, expected_size=32)


def test_non_finite_values_are_data_error(tmp_path):
    header = save_patch(random_patch(size=32), tmp_path)
    label_path = sample_files(header)[2]
    heights = np.fromfile(label_path, dtype="<f4")
    heights[10] = np.nan
    heights.tofile(label_path)
    with pytest.raises(DataError):
        load_patch(header, expected_size=32)


def test_split_of_ten():
    manifest = split_dataset([f"s{i}.json" for i in range(10)], (0.7, 0.2, 0.1), seed=0)
    assert manifest.counts() == (7, 2, 1)


def test_split_is_deterministic_and_exhaustive():
    paths = [f"samples/{i:04d}.json" for i in range(57)]
    first = split_dataset(paths, seed=5)
    second = split_dataset(paths, seed=5)
    assert first.entries == second.entries

    assigned = [set(first.paths(split)) for split in ("train", "val", "test")]
    assert set().union(*assigned) == set(paths)
    assert sum(len(a) for a in assigned) == len(paths)


def test_split_of_full_dataset_size():
    n_train, n_val, n_test = split_counts(9475, (0.7, 0.2, 0.1))
    assert n_val == math.floor(9475 * 0.2) == 1895
    assert n_test == math.floor(9475 * 0.1) == 947
    assert n_train == 9475 - 1895 - 947
    for got, expected in zip((n_train, n_val, n_test), (6632, 1895, 948)):
        assert abs(got - expected) <= 1


@given(st.permutations(list(range(20))), st.integers(min_value=0, max_value=1000))
def test_split_ignores_entry_order(order, seed):
    paths = [f"p{i:02d}.json" for i in range(20)]
    shuffled = [paths[i] for i in order]
    assert split_dataset(paths, seed=seed).entries == split_dataset(shuffled, seed=seed).entries


def test_split_rejects_bad_ratios():
    with pytest.raises(ConfigError):
        split_dataset([f"s{i}" for i in range(10)], (0.5, 0.2, 0.1))


def test_split_needs_ten_entries():
    with pytest.raises(DataError):
        split_dataset([f"s{i}" for i in range(9)])


def test_manifest_round_trip(tmp_path):
    manifest = split_dataset([f"samples/s{i}.json" for i in range(12)], seed=2)
    write_manifest(manifest, tmp_path)
    loaded = read_manifest(tmp_path)
    assert loaded.entries == manifest.entries
    assert loaded.seed == 2


def test_band_table():
    table = band_table()
    assert len(table) == 7
    wavelengths = [band.wavelength_nm for band in table]
    assert wavelengths == sorted(wavelengths)
    assert wavelengths[0] == 490 and wavelengths[-1] == 842


def test_select_bands():
    patch = random_patch(size=16)
    assert np.array_equal(select_bands(patch, "ALL7").image, patch.image)

    rgb = select_bands(patch, "RGB")
    assert rgb.image.shape[0] == 3
    assert band_wavelengths(rgb.meta.band_order) == (665, 560, 490)
    assert np.array_equal(rgb.image[0], patch.image[2])

    rgb_nir = select_bands(patch, "RGB_NIR")
    assert rgb_nir.image.shape[0] == 4
    assert 842 in band_wavelengths(rgb_nir.meta.band_order)


def test_select_unknown_band_set():
    with pytest.raises(ConfigError):
        select_bands(random_patch(size=16), "SWIR")


def area_weights_ref(fine, coarse):
    width = fine / coarse
    out = np.zeros((coarse, fine))
    for j in range(coarse):
        for x in range(fine):
            out[j, x] = max(0.0, min(x + 1, (j + 1) * width) - max(x, j * width)) / width
    return out


def basis_ref(u, j, coarse):
    u = min(max(u, 0.5), coarse - 0.5)
    return max(0.0, 1.0 - abs(u - (j + 0.5)))


def linear_weights_ref(fine, coarse):
    scale = coarse / fine
    out = np.zeros((fine, coarse))
    for x in range(fine):
        lo, hi = x * scale, (x + 1) * scale
        for j in range(coarse):
            # piecewise linear between kinks, trapezoids are exact
            kinks = [0.5, coarse - 0.5, j - 0.5, j + 0.5, j + 1.5]
            points = sorted({lo, hi, *[k for k in kinks if lo < k < hi]})
            area = sum((b - a) * (basis_ref(a, j, coarse) + basis_ref(b, j, coarse)) / 2
                       for a, b in zip(points, points[1:]))
            out[x, j] = area / scale
    return out


def test_degrade_identity_and_constant():
    patch = random_patch(size=64)
    same = degrade_resolution(patch, 4.75)
    assert np.array_equal(same.image, patch.image)
    assert same.meta.simulated_gsd_m == 4.75

    constant = dataclasses.replace(patch, image=np.full((7, 64, 64), 0.3, np.float32))
    degraded = degrade_resolution(constant, 30.0)
    np.testing.assert_allclose(degraded.image, 0.3, rtol=0, atol=1e-6)
    assert np.array_equal(degraded.heights, patch.heights)
    assert degraded.meta.simulated_gsd_m == 30.0


@pytest.mark.parametrize("fine,coarse", [(256, 41), (256, 122), (256, 128), (7, 3), (9, 1)])
def test_resampling_weights(fine, coarse):
    area = area_weights(fine, coarse)
    linear = linear_weights(fine, coarse)
    np.testing.assert_allclose(area, area_weights_ref(fine, coarse), rtol=0, atol=1e-12)
    np.testing.assert_allclose(linear, linear_weights_ref(fine, coarse), rtol=0, atol=1e-12)
    np.testing.assert_allclose(area.sum(axis=1), 1.0)
    np.testing.assert_allclose(linear.sum(axis=1), 1.0)
    np.testing.assert_allclose(linear.sum(axis=0), fine / coarse)


def test_degrade_impulse_matches_loop_oracle():
    image = np.full((7, 256, 256), 0.1, np.float32)
    image[:, 128, 128] = 1.0
    patch = dataclasses.replace(random_patch(size=256), image=image)
    degraded = degrade_resolution(patch, 30.0)

    coarse = round(256 / (30.0 / 4.75))
    down = area_weights_ref(256, coarse)
    up = linear_weights_ref(256, coarse)
    oracle = up @ (down @ image[0].astype(np.float64) @ down.T) @ up.T
    for band in range(7):
        np.testing.assert_allclose(degraded.image[band], oracle, rtol=0, atol=1e-6)
    # energy is spread out, not lost
    assert degraded.image[0, 128, 128] < 0.2
    assert degraded.image[0].sum() == pytest.approx(image[0].sum(), rel=1e-5)


@pytest.mark.parametrize("target", [9.5, 10.0, 30.0])
def test_degrade_preserves_band_mean(target):
    patch = random_patch(size=256)
    degraded = degrade_resolution(patch, target)
    np.testing.assert_allclose(degraded.image.mean(axis=(1, 2), dtype=np.float64),
                               patch.image.mean(axis=(1, 2), dtype=np.float64), rtol=1e-5)


def test_degrade_to_finer_resolution_is_rejected():
    with pytest.raises(ConfigError):
        degrade_resolution(random_patch(size=16), 3.0)


def test_patch_dataset(small_dataset):
    dataset = PatchDataset(small_dataset, "train", band_set="RGB_NIR")
    assert len(dataset) == 10
    item = dataset[0]
    assert item["image"].shape == (4, 64, 64)
    assert item["heights"].shape == (64, 64)
    assert item["valid_mask"].dtype == torch.float32
    assert isinstance(item["scene_id"], str)
