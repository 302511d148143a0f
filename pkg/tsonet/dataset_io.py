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
Patch samples: on-disk format, validation, dataset split and input experiments.

Dataset layout
-----

```
<dataset>/manifest.json
<dataset>/samples/<id>.img.f32     image, little-endian float32 [bands, H, W]
<dataset>/samples/<id>.hgt.f32     height label, little-endian float32 [H, W]
<dataset>/samples/<id>.json        header {scene_id, shape, dtype, band_order, gsd_m}
```

A pixel is NoData when the image value is exactly 0.0 in every band at once.
"""

import dataclasses
import json
import logging
import math
from collections import namedtuple
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import torch
from torch.utils.data import Dataset

from tsonet.errors import ConfigError, DataError, FormatError, PairingError

logger = logging.getLogger(__name__)

# Native ground sampling distance of the imagery.
NATIVE_GSD_M = 4.75

# NoData sentinel, must appear in all bands simultaneously.
NODATA = 0.0

# Data type to represent one spectral band of the sensor.
Band = namedtuple("Band", ["name", "wavelength_nm", "bandwidth_nm"])

BAND_TABLE = (
    Band("MS1", 490, 65),
    Band("MS2", 560, 35),
    Band("MS3", 665, 30),
    Band("MS4", 705, 15),
    Band("MS5", 740, 15),
    Band("MS6", 783, 20),
    Band("MS7", 842, 115),
)

BAND_NAMES = tuple(band.name for band in BAND_TABLE)

# RGB is stored red first, NIR is the 842 nm band.
BAND_SETS = {
    "ALL7": BAND_NAMES,
    "RGB_NIR": ("MS3", "MS2", "MS1", "MS7"),
    "RGB": ("MS3", "MS2", "MS1"),
}

SPLITS = ("train", "val", "test")
DEFAULT_RATIOS = (0.7, 0.2, 0.1)
MANIFEST_NAME = "manifest.json"
SAMPLES_DIR = "samples"


def band_table():
    """Return the table of sensor bands ordered by central wavelength."""
    return BAND_TABLE


def band_wavelengths(band_order):
    """Central wavelengths (nm) for the given list of band names."""
    lookup = {band.name: band.wavelength_nm for band in BAND_TABLE}
    return tuple(lookup[name] for name in band_order)


@dataclass
class PatchMeta:
    """Descriptive part of a sample."""

    scene_id: str
    gsd_m: float = NATIVE_GSD_M
    band_order: Tuple[str, ...] = BAND_NAMES
    simulated_gsd_m: Optional[float] = None


@dataclass
class Patch:
    """Co-registered image, height label and valid mask."""

    image: np.ndarray
    heights: np.ndarray
    valid_mask: np.ndarray
    meta: PatchMeta = field(default_factory=lambda: PatchMeta(scene_id="patch"))

    @property
    def shape(self):
        """Spatial shape (H, W) of the sample."""
        return self.heights.shape

    def validate(self):
        """Check the sample invariants, raise DataError/FormatError when broken."""
        if self.image.ndim != 3 or self.heights.ndim != 2 or self.valid_mask.ndim != 2:
            raise FormatError("image must be [bands, H, W], heights and mask [H, W]")
        if self.image.shape[1:] != self.heights.shape or \
                self.valid_mask.shape != self.heights.shape:
            raise FormatError(f"spatial shapes differ: image {self.image.shape}, "
                              f"heights {self.heights.shape}, mask {self.valid_mask.shape}")
        if self.image.shape[0] != len(self.meta.band_order):
            raise FormatError(f"{self.image.shape[0]} bands but band_order lists "
                              f"{len(self.meta.band_order)}")
        if not np.all(np.isfinite(self.image)) or not np.all(np.isfinite(self.heights)):
            raise DataError(f"sample {self.meta.scene_id} contains non-finite values")
        if np.any(self.heights < 0):
            raise DataError(f"sample {self.meta.scene_id} contains negative heights")
        if not np.all((self.valid_mask == 0) | (self.valid_mask == 1)):
            raise DataError(f"sample {self.meta.scene_id} has non-binary valid mask")
        return self

    def building_pixels(self, tau_fp=0.0):
        """Count of valid pixels higher than `tau_fp`."""
        return int(np.count_nonzero((self.valid_mask == 1) & (self.heights > tau_fp)))


def derive_valid_mask(image):
    """Valid mask: 0 where every band holds the NoData sentinel, 1 elsewhere."""
    return np.any(image != NODATA, axis=0).astype(np.uint8)


def _sample_stem(path):
    """Strip known suffixes, so any of the three sample files identifies the sample."""
    path = Path(path)
    name = path.name
    for suffix in (".img.f32", ".hgt.f32", ".json"):
        if name.endswith(suffix):
            return path.with_name(name[:-len(suffix)])
    return path


def sample_files(path):
    """Return (header, image, label) paths of the sample."""
    stem = _sample_stem(path)
    return (stem.with_name(stem.name + ".json"),
            stem.with_name(stem.name + ".img.f32"),
            stem.with_name(stem.name + ".hgt.f32"))


def _read_raw(path, shape):
    """Read raw little-endian float32 payload with an exact size check."""
    expected = int(np.prod(shape))
    data = np.fromfile(path, dtype="<f4")
    if data.size != expected:
        raise FormatError(f"{path}: {data.size} values found, header declares "
                          f"{list(shape)} ({expected} values)")
    return data.reshape(shape).astype(np.float32, copy=False)


def load_patch(path, expected_size=256):
    """Load and validate one sample; `path` may name any of its three files."""
    header_path, image_path, label_path = sample_files(path)

    # the pairing has to be complete before anything is parsed
    for part in (header_path, image_path, label_path):
        if not part.is_file():
            raise PairingError(f"sample {_sample_stem(path)}: missing {part.name}")

    with header_path.open() as fin:
        try:
            header = json.load(fin)
        except ValueError as e:
            raise FormatError(f"{header_path}: invalid header: {e}") from e

    try:
        shape = tuple(int(x) for x in header["shape"])
        band_order = tuple(header["band_order"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{header_path}: header lacks shape/band_order") from e

    if header.get("dtype", "float32") != "float32":
        raise FormatError(f"{header_path}: only float32 payloads are supported")
    if len(shape) != 3 or shape[0] != len(band_order):
        raise FormatError(f"{header_path}: image shape {list(shape)} does not match "
                          f"{len(band_order)} bands")
    if expected_size is not None and shape[1:] != (expected_size, expected_size):
        raise FormatError(f"{header_path}: expected {expected_size}x{expected_size} patch, "
                          f"header declares {shape[1]}x{shape[2]}")

    image = _read_raw(image_path, shape)
    heights = _read_raw(label_path, shape[1:])

    if not np.all(np.isfinite(image)) or not np.all(np.isfinite(heights)):
        raise DataError(f"sample {header_path.name} contains non-finite values")

    valid_mask = derive_valid_mask(image)

    # NoData label pixels are defined to be zero
    stray = (valid_mask == 0) & (heights != 0)
    if np.any(stray):
        logger.warning("%s: %d labelled NoData pixels reset to 0", header_path.name,
                       int(np.count_nonzero(stray)))
        heights = np.where(stray, np.float32(0.0), heights)

    meta = PatchMeta(scene_id=str(header.get("scene_id", _sample_stem(path).name)),
                     gsd_m=float(header.get("gsd_m", NATIVE_GSD_M)),
                     band_order=band_order,
                     simulated_gsd_m=header.get("simulated_gsd_m"))
    return Patch(image=image, heights=heights, valid_mask=valid_mask, meta=meta).validate()


def save_patch(patch, directory):
    """Write the sample files into `directory`, return path of the header."""
    patch.validate()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header_path, image_path, label_path = sample_files(directory / patch.meta.scene_id)

    patch.image.astype("<f4").tofile(image_path)
    patch.heights.astype("<f4").tofile(label_path)

    header = {
        "scene_id": patch.meta.scene_id,
        "shape": list(patch.image.shape),
        "dtype": "float32",
        "band_order": list(patch.meta.band_order),
        "gsd_m": patch.meta.gsd_m,
    }
    if patch.meta.simulated_gsd_m is not None:
        header["simulated_gsd_m"] = patch.meta.simulated_gsd_m

    with header_path.open("w") as fout:
        json.dump(header, fout, indent=4)
    return header_path


@dataclass
class ManifestEntry:
    """One sample of the dataset together with its split."""

    sample_path: str
    split: str


@dataclass
class SplitManifest:
    """Assignment of dataset samples to train/val/test."""

    entries: List[ManifestEntry]
    seed: int = 0
    ratios: Tuple[float, float, float] = DEFAULT_RATIOS

    def paths(self, split):
        """Sample paths assigned to `split`, in manifest order."""
        if split not in SPLITS:
            raise ConfigError(f"unknown split {split!r}")
        return [e.sample_path for e in self.entries if e.split == split]

    def counts(self):
        """Number of samples per split, as (train, val, test)."""
        return tuple(len(self.paths(split)) for split in SPLITS)


def split_counts(n, ratios):
    """Floor-allocated val/test counts, remainder goes to train."""
    # tiny guard so 0.2 * 10 is not floored to 1 because of rounding
    n_val = int(math.floor(n * ratios[1] + 1e-9))
    n_test = int(math.floor(n * ratios[2] + 1e-9))
    return n - n_val - n_test, n_val, n_test


def split_dataset(manifest_entries, ratios=DEFAULT_RATIOS, seed=0):
    """Seeded, order independent train/val/test split of sample paths."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-6:
        raise ConfigError(f"split ratios must be three non-negative values summing to 1, "
                          f"got {ratios}")

    # sorting first makes the split a function of the entry set only
    paths = sorted(set(str(e) for e in manifest_entries))
    if len(paths) < 10:
        raise DataError(f"at least 10 samples are needed for a split, got {len(paths)}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(paths))
    n_train, n_val, _ = split_counts(len(paths), ratios)

    entries = []
    for position, index in enumerate(order):
        if position < n_train:
            split = "train"
        elif position < n_train + n_val:
            split = "val"
        else:
            split = "test"
        entries.append(ManifestEntry(sample_path=paths[index], split=split))
    return SplitManifest(entries=entries, seed=seed, ratios=ratios)


def write_manifest(manifest, directory):
    """Store manifest JSON into dataset directory."""
    path = Path(directory) / MANIFEST_NAME
    payload = {
        "seed": manifest.seed,
        "ratios": list(manifest.ratios),
        "entries": [dataclasses.asdict(e) for e in manifest.entries],
    }
    with path.open("w") as fout:
        json.dump(payload, fout, indent=4)
    return path


def read_manifest(directory):
    """Read manifest JSON from dataset directory."""
    path = Path(directory) / MANIFEST_NAME
    if not path.is_file():
        raise DataError(f"dataset {directory} has no {MANIFEST_NAME}")
    with path.open() as fin:
        try:
            payload = json.load(fin)
            entries = [ManifestEntry(**e) for e in payload["entries"]]
        except (ValueError, KeyError, TypeError) as e:
            raise FormatError(f"{path}: malformed manifest: {e}") from e
    for entry in entries:
        if entry.split not in SPLITS:
            raise FormatError(f"{path}: unknown split {entry.split!r}")
    return SplitManifest(entries=entries, seed=payload.get("seed", 0),
                         ratios=tuple(payload.get("ratios", DEFAULT_RATIOS)))


def area_weights(fine, coarse):
    """[coarse, fine] area-averaging matrix, fractional overlaps at cell borders.

    Coarse cell j covers fine coordinates [j * w, (j + 1) * w) with
    w = fine / coarse; every row sums to 1.
    """
    width = fine / coarse
    lo = np.arange(coarse)[:, None] * width
    x = np.arange(fine)[None, :]
    overlap = np.clip(np.minimum(lo + width, x + 1) - np.maximum(lo, x), 0.0, None)
    return overlap / width


def _hat_antiderivative(t):
    """Integral of max(0, 1 - |s|) from -inf to t."""
    t = np.clip(t, -1.0, 1.0)
    return np.where(t < 0, (t + 1) ** 2 / 2, 1 - (1 - t) ** 2 / 2)


def linear_weights(fine, coarse):
    """[fine, coarse] bilinear reconstruction integrated over each fine pixel.

    Cell centers sit at j + 0.5 in coarse units, values are held constant
    beyond the outer centers. Rows sum to 1, every column sums to
    fine / coarse, so the restored image keeps the mean of the coarse one.
    """
    if coarse == 1:
        return np.ones((fine, 1))
    scale = coarse / fine
    lo = np.arange(fine) * scale
    hi = lo + scale
    center = np.arange(coarse) + 0.5
    weights = (_hat_antiderivative(hi[:, None] - center)
               - _hat_antiderivative(lo[:, None] - center))

    # outer cells: one side of the hat, flat beyond the center
    first, last = 0.5, coarse - 0.5
    weights[:, 0] = (_hat_antiderivative(np.maximum(hi, first) - first)
                     - _hat_antiderivative(np.maximum(lo, first) - first)
                     + np.clip(np.minimum(hi, first) - lo, 0.0, None))
    weights[:, -1] = (_hat_antiderivative(np.minimum(hi, last) - last)
                      - _hat_antiderivative(np.minimum(lo, last) - last)
                      + np.clip(hi - np.maximum(lo, last), 0.0, None))
    return weights / scale


def degrade_resolution(patch, target_gsd_m):
    """Simulate coarser imagery: area-average down, bilinear back up to the patch grid."""
    native = patch.meta.gsd_m
    if target_gsd_m < native:
        raise ConfigError(f"target GSD {target_gsd_m} m is finer than native {native} m")

    factor = target_gsd_m / native
    meta = dataclasses.replace(patch.meta, simulated_gsd_m=float(target_gsd_m))
    if factor == 1.0:
        return dataclasses.replace(patch, image=patch.image.copy(), meta=meta)

    height, width = patch.shape
    rows, cols = max(1, int(round(height / factor))), max(1, int(round(width / factor)))

    image = patch.image.astype(np.float64)
    coarse = area_weights(height, rows) @ image @ area_weights(width, cols).T
    restored = linear_weights(height, rows) @ coarse @ linear_weights(width, cols).T

    return dataclasses.replace(patch, image=restored.astype(np.float32), meta=meta)


def select_bands(patch, band_set):
    """Keep only the bands of the band configuration, in its order."""
    if band_set not in BAND_SETS:
        raise ConfigError(f"unknown band set {band_set!r}, use one of {sorted(BAND_SETS)}")
    wanted = BAND_SETS[band_set]
    order = list(patch.meta.band_order)
    missing = [name for name in wanted if name not in order]
    if missing:
        raise ConfigError(f"sample {patch.meta.scene_id} lacks bands {missing}")

    indices = [order.index(name) for name in wanted]
    meta = dataclasses.replace(patch.meta, band_order=tuple(wanted))
    return dataclasses.replace(patch, image=patch.image[indices].copy(), meta=meta)


class PatchDataset(Dataset):
    """Torch view of one split of a dataset directory."""

    def __init__(self, directory, split, band_set="ALL7", target_gsd_m=None,
                 expected_size=None):
        """Read the manifest and remember the input experiment settings."""
        self.directory = Path(directory)
        self.split = split
        self.band_set = band_set
        self.target_gsd_m = target_gsd_m
        self.expected_size = expected_size
        self.paths = read_manifest(self.directory).paths(split)

    def __len__(self):
        """Return number of samples in the split."""
        return len(self.paths)

    def load(self, index):
        """Load sample as Patch with band selection and degradation applied."""
        patch = load_patch(self.directory / self.paths[index], expected_size=self.expected_size)
        patch = select_bands(patch, self.band_set)
        if self.target_gsd_m is not None:
            patch = degrade_resolution(patch, self.target_gsd_m)
        return patch

    def __getitem__(self, index):
        """Return dictionary of tensors for one sample."""
        patch = self.load(index)
        return {
            "image": torch.from_numpy(patch.image),
            "heights": torch.from_numpy(patch.heights),
            "valid_mask": torch.from_numpy(patch.valid_mask.astype(np.float32)),
            "scene_id": patch.meta.scene_id,
        }
