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
Evaluation metrics for height regression and footprint segmentation.

Height metrics are computed over building pixels only, i.e. over valid
pixels whose reference height is above `tau_fp`; predicted heights are
clipped to zero first. Footprint metrics threshold the probability at 0.5
and count TP/FP/FN over valid pixels.

Over a whole split the sums and counts are accumulated globally by
`MetricsAccumulator` and the ratios are computed once at the end. An empty
set of building pixels yields `None` instead of a number.
"""

import json
import math
from collections import namedtuple
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

EPSILON = 1e-3

# 10 m steps up to 100 m, then one open-ended bin
DEFAULT_BIN_EDGES = tuple(float(e) for e in range(0, 110, 10)) + (math.inf,)

HeightMetrics = namedtuple("HeightMetrics", ["mae", "rmse", "rel", "count"])
FootprintMetrics = namedtuple("FootprintMetrics",
                              ["iou", "recall", "precision", "f1", "tp", "fp", "fn"])

METRIC_FIELDS = ("mae", "rmse", "rel", "iou", "recall", "precision", "f1")


def _as_array(x):
    """Convert tensor or array-like into float64 numpy array."""
    if hasattr(x, "detach"):
        x = x.detach().cpu().numpy()
    return np.asarray(x, dtype=np.float64)


def building_pixels(target, valid, tau_fp=2.0):
    """Boolean mask of valid pixels with reference height above `tau_fp`."""
    return (_as_array(valid) > 0) & (_as_array(target) > tau_fp)


def height_sums(prediction, target, valid, tau_fp=2.0, eps=EPSILON):
    """Return (sum |e|, sum e^2, sum |e|/(h+eps), count) over building pixels."""
    mask = building_pixels(target, valid, tau_fp)
    predicted = np.clip(_as_array(prediction)[mask], 0.0, None)
    reference = _as_array(target)[mask]
    error = predicted - reference
    return (float(np.abs(error).sum()), float((error ** 2).sum()),
            float((np.abs(error) / (reference + eps)).sum()), int(mask.sum()))


def height_ratios(abs_sum, sq_sum, rel_sum, count):
    """MAE, RMSE and REL from accumulated sums, None for an empty pixel set."""
    if count == 0:
        return HeightMetrics(None, None, None, 0)
    return HeightMetrics(abs_sum / count, math.sqrt(sq_sum / count), rel_sum / count, count)


def height_metrics(prediction, target, valid, tau_fp=2.0, eps=EPSILON):
    """MAE, RMSE and REL over building pixels."""
    return height_ratios(*height_sums(prediction, target, valid, tau_fp, eps))


def confusion_counts(probability, footprint, valid, threshold=0.5):
    """TP, FP and FN over valid pixels for prediction `probability > threshold`."""
    predicted = _as_array(probability) > threshold
    reference = _as_array(footprint) > 0.5
    valid = _as_array(valid) > 0
    tp = int(np.sum(valid & predicted & reference))
    fp = int(np.sum(valid & predicted & ~reference))
    fn = int(np.sum(valid & ~predicted & reference))
    return tp, fp, fn


def footprint_ratios(tp, fp, fn, eps=EPSILON):
    """IoU, Recall, Precision and F1 from confusion counts."""
    iou = (tp + eps) / (tp + fp + fn + eps)
    recall = (tp + eps) / (tp + fn + eps)
    precision = (tp + eps) / (tp + fp + eps)
    f1 = 2.0 * precision * recall / (precision + recall + eps)
    return FootprintMetrics(iou, recall, precision, f1, tp, fp, fn)


def footprint_metrics(probability, footprint, valid, threshold=0.5, eps=EPSILON):
    """IoU, Recall, Precision and F1 of the thresholded footprint."""
    return footprint_ratios(*confusion_counts(probability, footprint, valid, threshold), eps)


def _bin_labels(edges):
    labels = []
    for lower, upper in zip(edges[:-1], edges[1:]):
        labels.append(f">{lower:g}" if math.isinf(upper) else f"{lower:g}-{upper:g}")
    return labels


def height_bin_sums(prediction, target, valid, tau_fp=2.0, bin_edges=DEFAULT_BIN_EDGES):
    """Per-bin squared error sums and pixel counts, bins by reference height."""
    edges = np.asarray(bin_edges, dtype=np.float64)
    mask = building_pixels(target, valid, tau_fp)
    predicted = np.clip(_as_array(prediction)[mask], 0.0, None)
    reference = _as_array(target)[mask]
    # bin k holds lower <= h < upper, heights outside all bins are dropped
    index = np.digitize(reference, edges, right=False) - 1
    n_bins = len(edges) - 1
    inside = (index >= 0) & (index < n_bins)
    squared = (predicted[inside] - reference[inside]) ** 2
    sq_sums = np.bincount(index[inside], weights=squared, minlength=n_bins)
    counts = np.bincount(index[inside], minlength=n_bins)
    return sq_sums, counts


def bin_table(sq_sums, counts, bin_edges=DEFAULT_BIN_EDGES):
    """List of {lower, upper, label, rmse, count} rows, rmse None for empty bins."""
    rows = []
    edges = list(bin_edges)
    for k, label in enumerate(_bin_labels(edges)):
        count = int(counts[k])
        rows.append({"lower": float(edges[k]),
                     "upper": None if math.isinf(edges[k + 1]) else float(edges[k + 1]),
                     "label": label,
                     "rmse": math.sqrt(sq_sums[k] / count) if count else None,
                     "count": count})
    return rows


def rmse_by_height_bin(prediction, target, valid, bin_edges=DEFAULT_BIN_EDGES, tau_fp=2.0):
    """RMSE per ground-truth height bin over building pixels."""
    sq_sums, counts = height_bin_sums(prediction, target, valid, tau_fp, bin_edges)
    return bin_table(sq_sums, counts, bin_edges)


@dataclass
class MetricsReport:
    """Height and footprint metrics of one evaluation run."""

    mae: Optional[float] = None
    rmse: Optional[float] = None
    rel: Optional[float] = None
    iou: Optional[float] = None
    recall: Optional[float] = None
    precision: Optional[float] = None
    f1: Optional[float] = None
    building_pixels: int = 0
    bins: List[dict] = field(default_factory=list)

    def to_dict(self):
        """Dictionary with the fixed field names."""
        data = {name: getattr(self, name) for name in METRIC_FIELDS}
        data["building_pixels"] = self.building_pixels
        data["bins"] = [dict(row) for row in self.bins]
        return data

    def to_frame(self):
        """One-row pandas DataFrame with the scalar metrics."""
        row = {name: getattr(self, name) for name in METRIC_FIELDS}
        row["building_pixels"] = self.building_pixels
        return pd.DataFrame([row])

    def bins_frame(self):
        """Per-bin RMSE table as pandas DataFrame."""
        return pd.DataFrame(self.bins, columns=["lower", "upper", "label", "rmse", "count"])

    def write_json(self, path):
        """Store report as JSON."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fout:
            json.dump(self.to_dict(), fout, indent=4)
        return path

    def write_csv(self, path):
        """Store scalar metrics into `path` and the bin table next to it."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        bins_path = path.with_name(path.stem + "_bins.csv")
        self.bins_frame().to_csv(bins_path, index=False)
        return path, bins_path

    @classmethod
    def from_dict(cls, data):
        """Inverse of to_dict."""
        return cls(**{name: data.get(name) for name in METRIC_FIELDS},
                   building_pixels=int(data.get("building_pixels", 0)),
                   bins=list(data.get("bins", [])))


class MetricsAccumulator:
    """Global accumulation of metric sums over many patches."""

    def __init__(self, tau_fp=2.0, eps=EPSILON, bin_edges=DEFAULT_BIN_EDGES, threshold=0.5):
        """Initialize empty sums."""
        self.tau_fp = tau_fp
        self.eps = eps
        self.bin_edges = tuple(bin_edges)
        self.threshold = threshold
        self.abs_sum = 0.0
        self.sq_sum = 0.0
        self.rel_sum = 0.0
        self.count = 0
        self.tp = self.fp = self.fn = 0
        self.has_footprint = False
        n_bins = len(self.bin_edges) - 1
        self.bin_sq_sums = np.zeros(n_bins)
        self.bin_counts = np.zeros(n_bins, dtype=np.int64)

    def update(self, prediction, target, valid, probability=None, footprint=None):
        """Add one patch (or batch) of predictions.

        `footprint` defaults to the footprint derived from `target`.
        """
        abs_sum, sq_sum, rel_sum, count = height_sums(prediction, target, valid, self.tau_fp,
                                                      self.eps)
        self.abs_sum += abs_sum
        self.sq_sum += sq_sum
        self.rel_sum += rel_sum
        self.count += count

        sq_sums, counts = height_bin_sums(prediction, target, valid, self.tau_fp,
                                          self.bin_edges)
        self.bin_sq_sums += sq_sums
        self.bin_counts += counts

        if probability is not None:
            if footprint is None:
                footprint = _as_array(target) > self.tau_fp
            tp, fp, fn = confusion_counts(probability, footprint, valid, self.threshold)
            self.tp += tp
            self.fp += fp
            self.fn += fn
            self.has_footprint = True

    def report(self):
        """Compute the MetricsReport from everything accumulated so far."""
        height = height_ratios(self.abs_sum, self.sq_sum, self.rel_sum, self.count)
        report = MetricsReport(mae=height.mae, rmse=height.rmse, rel=height.rel,
                               building_pixels=self.count,
                               bins=bin_table(self.bin_sq_sums, self.bin_counts,
                                              self.bin_edges))
        if self.has_footprint:
            fp_metrics = footprint_ratios(self.tp, self.fp, self.fn, self.eps)
            report.iou = fp_metrics.iou
            report.recall = fp_metrics.recall
            report.precision = fp_metrics.precision
            report.f1 = fp_metrics.f1
        return report
