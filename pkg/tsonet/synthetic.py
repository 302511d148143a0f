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
Generator of synthetic rectangle-city scenes that stand in for real patches.

Buildings are axis-aligned rectangles with constant, log-normally distributed
heights. Each band is rendered as

    band_k = a_k * footprint + b_k * (h / h_max) + c_k + N(0, sigma)

so that height is partially recoverable from the image.
"""

import logging
from pathlib import Path

import numpy as np

from tsonet.config import SyntheticSceneSpec
from tsonet.dataset_io import (BAND_NAMES, SAMPLES_DIR, Patch, PatchMeta, save_patch,
                               split_dataset, write_manifest)

logger = logging.getLogger(__name__)


class SyntheticSceneGenerator:
    """Generator of seeded synthetic patches."""

    def __init__(self, spec=None):
        """Initialize the generator, the scene description is validated once here."""
        self.spec = (spec or SyntheticSceneSpec()).validate()

    def draw_buildings(self, rng):
        """Return list of (row, col, rows, cols, height) rectangles."""
        spec = self.spec
        n_min, n_max = spec.n_buildings
        f_min, f_max = spec.footprint_size
        h_min, h_max = spec.height_range

        buildings = []
        for _ in range(int(rng.integers(n_min, n_max + 1))):
            rows, cols = (int(v) for v in rng.integers(f_min, f_max + 1, size=2))
            row = int(rng.integers(0, spec.size - rows + 1))
            col = int(rng.integers(0, spec.size - cols + 1))
            height = float(np.clip(rng.lognormal(spec.height_log_mean, spec.height_log_sigma),
                                   h_min, h_max))
            buildings.append((row, col, rows, cols, height))
        return buildings

    def rasterize(self, buildings):
        """Paint rectangles into height map, later buildings cover earlier ones."""
        heights = np.zeros((self.spec.size, self.spec.size), dtype=np.float32)
        for row, col, rows, cols, height in buildings:
            heights[row:row + rows, col:col + cols] = height
        return heights

    def render_bands(self, heights, rng):
        """Render seven bands from footprint and normalized height plus noise."""
        spec = self.spec
        footprint = (heights > 0).astype(np.float64)
        relative = heights.astype(np.float64) / spec.height_range[1]

        bands = []
        for a, b, c in zip(spec.footprint_coeffs, spec.height_coeffs, spec.band_offsets):
            noise = rng.normal(0.0, spec.noise_sigma, size=heights.shape) \
                if spec.noise_sigma > 0 else 0.0
            bands.append(a * footprint + b * relative + c + noise)
        return np.stack(bands).astype(np.float32)

    def generate(self, seed):
        """Generate one Patch, bit-identical for the same seed."""
        rng = np.random.default_rng(seed)
        heights = self.rasterize(self.draw_buildings(rng))
        image = self.render_bands(heights, rng)
        meta = PatchMeta(scene_id=f"synthetic-{seed:06d}", gsd_m=self.spec.gsd_m,
                         band_order=BAND_NAMES)
        valid_mask = np.ones(heights.shape, dtype=np.uint8)
        return Patch(image=image, heights=heights, valid_mask=valid_mask, meta=meta).validate()


def generate_synthetic_scene(spec, seed):
    """Generate single synthetic patch."""
    return SyntheticSceneGenerator(spec).generate(seed)


def synthesize_dataset(spec, n, out_dir, seed=0, ratios=(0.7, 0.2, 0.1)):
    """Write `n` synthetic samples plus split manifest into `out_dir`."""
    generator = SyntheticSceneGenerator(spec)
    out_dir = Path(out_dir)
    samples = out_dir / SAMPLES_DIR

    # scene seeds are derived from the dataset seed
    paths = []
    for index in range(n):
        patch = generator.generate(seed + index)
        header = save_patch(patch, samples)
        paths.append(header.relative_to(out_dir).as_posix())
        logger.debug("generated %s", header)

    manifest = split_dataset(paths, ratios=ratios, seed=seed)
    write_manifest(manifest, out_dir)
    logger.info("synthesized %d samples into %s, split %s", n, out_dir, manifest.counts())
    return manifest
