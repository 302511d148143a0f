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

"""Height, footprint and per-bin metrics."""

import json
import math

import numpy as np
import pandas as pd
import pytest
import torch

from tsonet.metrics import (DEFAULT_BIN_EDGES, MetricsAccumulator, MetricsReport,
                            footprint_metrics, height_metrics, rmse_by_height_bin)

EPS = 1e-3


def test_negative_prediction_is_clipped():
    metrics = height_metrics(np.array([[-2.0]]), np.array([[10.0]]), np.array([[1]]))
    assert metrics.mae == pytest.approx(10.0)
    assert metrics.rmse == pytest.approx(10.0)
    assert metrics.rel == pytest.approx(10.0 / 10.001)
    assert metrics.count == 1


def test_no_building_pixels():
    metrics = height_metrics(np.ones((4, 4)), np.full((4, 4), 1.5), np.ones((4, 4)))
    assert metrics == (None, None, None, 0)


def test_height_metrics_match_loop():
    rng = np.random.default_rng(0)
    prediction = rng.uniform(-5, 60, size=(16, 16))
    target = np.where(rng.uniform(size=(16, 16)) > 0.4, rng.uniform(0, 60, size=(16, 16)), 0.0)
    valid = (rng.uniform(size=(16, 16)) > 0.1).astype(np.uint8)

    errors, relative = [], []
    for i in range(16):
        for j in range(16):
            if valid[i, j] and target[i, j] > 2.0:
                error = max(prediction[i, j], 0.0) - target[i, j]
                errors.append(error)
                relative.append(abs(error) / (target[i, j] + EPS))
    metrics = height_metrics(torch.from_numpy(prediction), torch.from_numpy(target),
                             torch.from_numpy(valid))
    assert metrics.count == len(errors)
    assert metrics.mae == pytest.approx(np.mean(np.abs(errors)))
    assert metrics.rmse == pytest.approx(math.sqrt(np.mean(np.square(errors))))
    assert metrics.rel == pytest.approx(np.mean(relative))


def test_footprint_metric_cases():
    ones = np.ones((4, 4))
    perfect = footprint_metrics(ones, ones, ones)
    assert perfect.iou == pytest.approx(1.0)
    assert perfect.f1 == pytest.approx(2 / (2 + EPS))

    empty = footprint_metrics(np.zeros((4, 4)), np.zeros((4, 4)), ones)
    # nothing to find, nothing found
    assert empty.iou == pytest.approx(1.0)
    assert empty.recall == pytest.approx(1.0)

    missed = footprint_metrics(np.zeros((4, 4)), ones, ones)
    assert missed.tp == 0 and missed.fn == 16
    assert missed.iou == pytest.approx(EPS / (16 + EPS))
    assert missed.recall == pytest.approx(EPS / (16 + EPS))
    assert missed.precision == pytest.approx(1.0)


def test_footprint_threshold_and_mask():
    probability = np.array([[0.5, 0.51], [0.9, 0.2]])
    footprint = np.array([[1, 1], [0, 1]])
    valid = np.array([[1, 1], [1, 0]])
    metrics = footprint_metrics(probability, footprint, valid)
    # 0.5 is not above the threshold, masked pixel is ignored
    assert (metrics.tp, metrics.fp, metrics.fn) == (1, 1, 1)
    assert metrics.iou == pytest.approx((1 + EPS) / (3 + EPS))


def test_per_bin_rmse():
    target = np.array([[5.0, 15.0, 15.0, 150.0]])
    prediction = np.array([[6.0, 12.0, 18.0, 140.0]])
    rows = rmse_by_height_bin(prediction, target, np.ones((1, 4)))
    assert len(rows) == len(DEFAULT_BIN_EDGES) - 1
    assert rows[0]["label"] == "0-10" and rows[0]["count"] == 1
    assert rows[0]["rmse"] == pytest.approx(1.0)
    assert rows[1]["count"] == 2 and rows[1]["rmse"] == pytest.approx(3.0)
    assert rows[2]["rmse"] is None and rows[2]["count"] == 0
    assert rows[-1]["label"] == ">100" and rows[-1]["upper"] is None
    assert rows[-1]["rmse"] == pytest.approx(10.0)


def test_bin_edges_are_lower_inclusive():
    rows = rmse_by_height_bin(np.array([10.0, 20.0]), np.array([10.0, 20.0]), np.ones(2),
                              bin_edges=(0.0, 10.0, 20.0, math.inf))
    assert [row["count"] for row in rows] == [0, 1, 1]


def test_heights_outside_custom_edges_are_dropped():
    target = np.array([5.0, 25.0, 27.0, 30.0, 45.0])
    prediction = np.array([0.0, 24.0, 30.0, 0.0, 0.0])
    rows = rmse_by_height_bin(prediction, target, np.ones(5), bin_edges=(20.0, 30.0))
    assert len(rows) == 1
    assert rows[0]["label"] == "20-30"
    assert rows[0]["count"] == 2
    assert rows[0]["rmse"] == pytest.approx(math.sqrt((1.0 + 9.0) / 2))

    accumulator = MetricsAccumulator(bin_edges=(20.0, 30.0, math.inf))
    accumulator.update(prediction, target, np.ones(5))
    assert [row["count"] for row in accumulator.report().bins] == [2, 2]


def test_accumulator_equals_concatenated_computation():
    rng = np.random.default_rng(1)
    patches = []
    for _ in range(3):
        target = np.where(rng.uniform(size=(8, 8)) > 0.5, rng.uniform(0, 80, size=(8, 8)), 0.0)
        patches.append((rng.uniform(0, 80, size=(8, 8)), target, np.ones((8, 8)),
                        rng.uniform(size=(8, 8))))

    accumulator = MetricsAccumulator()
    for prediction, target, valid, probability in patches:
        accumulator.update(prediction, target, valid, probability)
    report = accumulator.report()

    stacked = [np.concatenate(column) for column in zip(*patches)]
    height = height_metrics(*stacked[:3])
    footprint = footprint_metrics(stacked[3], stacked[1] > 2.0, stacked[2])
    assert report.mae == pytest.approx(height.mae)
    assert report.rmse == pytest.approx(height.rmse)
    assert report.rel == pytest.approx(height.rel)
    assert report.iou == pytest.approx(footprint.iou)
    assert report.f1 == pytest.approx(footprint.f1)
    assert report.building_pixels == height.count
    assert sum(row["count"] for row in report.bins) == height.count


def test_report_without_footprint():
    accumulator = MetricsAccumulator()
    accumulator.update(np.ones((2, 2)), np.full((2, 2), 4.0), np.ones((2, 2)))
    report = accumulator.report()
    assert report.rmse == pytest.approx(3.0)
    assert report.iou is None


def test_report_files(tmp_path):
    accumulator = MetricsAccumulator()
    accumulator.update(np.full((2, 2), 12.0), np.full((2, 2), 10.0), np.ones((2, 2)),
                       np.full((2, 2), 0.9))
    report = accumulator.report()

    path = report.write_json(tmp_path / "report.json")
    data = json.loads(path.read_text())
    assert set(data) >= {"mae", "rmse", "rel", "iou", "recall", "precision", "f1", "bins"}
    assert MetricsReport.from_dict(data) == report

    scalars, bins = report.write_csv(tmp_path / "report.csv")
    frame = pd.read_csv(scalars)
    assert frame.loc[0, "rmse"] == pytest.approx(2.0)
    assert len(pd.read_csv(bins)) == len(DEFAULT_BIN_EDGES) - 1
