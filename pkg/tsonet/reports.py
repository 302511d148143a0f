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
Figures and tables: per-height-bin RMSE, the building-height distribution of
a split and the training curves read back from the JSON-lines log.

All figures are rendered with the Agg backend and stored by `savefig`.
"""

from pathlib import Path

import matplotlib
import numpy as np
import pandas as pd

from tsonet.dataset_io import PatchDataset
from tsonet.train import read_log

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_rmse_by_bin(report, filename):
    """Bar chart of RMSE per ground-truth height bin."""
    bins = report.bins_frame()
    bins = bins[bins["count"] > 0]

    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(bins["label"], bins["rmse"].astype(float), color="#4477aa")
    ax.set_title("RMSE across ground-truth height bins")
    ax.set_xlabel("Height bin [m]")
    ax.set_ylabel("RMSE [m]")
    plt.setp(ax.get_xticklabels(), rotation=45)
    fig.tight_layout()
    fig.savefig(filename)
    plt.close(fig)
    return Path(filename)


def building_heights(directory, split="train", tau_fp=2.0):
    """Heights of all building pixels of a split as 1D array."""
    dataset = PatchDataset(directory, split)
    heights = []
    for index in range(len(dataset)):
        patch = dataset.load(index)
        mask = (patch.valid_mask == 1) & (patch.heights > tau_fp)
        heights.append(patch.heights[mask])
    if not heights:
        return np.zeros(0, dtype=np.float32)
    return np.concatenate(heights)


def height_distribution(directory, split="train", tau_fp=2.0):
    """Summary statistics of building-pixel heights (pandas describe)."""
    heights = pd.Series(building_heights(directory, split, tau_fp), name="height")
    summary = heights.describe()
    # share of pixels above the usual tall-building limits shows the long tail
    for limit in (30.0, 60.0, 100.0):
        summary[f"share > {limit:g} m"] = float((heights > limit).mean()) if len(heights) else 0.0
    return summary, heights


def plot_height_histogram(heights, filename, bin_size=2.0):
    """Histogram of building heights on a log-scaled count axis."""
    heights = np.asarray(heights)
    upper = max(float(heights.max()) if heights.size else 0.0, bin_size)
    edges = np.arange(0.0, upper + bin_size, bin_size)

    fig, ax = plt.subplots(figsize=(8, 4))
    ax.hist(heights, bins=edges, color="#cc6677")
    ax.set_yscale("log")
    ax.set_title("Building height distribution")
    ax.set_xlabel("Height [m]")
    ax.set_ylabel("Pixels")
    fig.tight_layout()
    fig.savefig(filename)
    plt.close(fig)
    return Path(filename)


def training_curves(log_path):
    """Step and validation records of a training log as two DataFrames."""
    records = pd.DataFrame(read_log(log_path))
    if records.empty:
        return records, records
    steps = records[records["event"] == "step"].dropna(axis=1, how="all")
    validations = records[records["event"] == "validation"].dropna(axis=1, how="all")
    return steps, validations


def plot_training_log(log_path, filename):
    """Loss and learning rate over optimizer steps, validation RMSE on top."""
    steps, validations = training_curves(log_path)

    fig, (loss_ax, lr_ax) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    if not steps.empty:
        loss_ax.plot(steps["step"], steps["loss"], "-", label="loss")
        lr_ax.plot(steps["step"], steps["lr"], "r-", label="learning rate")
    if not validations.empty and "val_rmse" in validations:
        rmse_ax = loss_ax.twinx()
        rmse_ax.plot(validations["step"], validations["val_rmse"], "go-", label="val RMSE")
        rmse_ax.set_ylabel("val RMSE [m]")
        rmse_ax.legend(loc="upper center")

    loss_ax.set_title("Training")
    loss_ax.set_ylabel("Loss")
    loss_ax.legend(loc="upper right")
    lr_ax.set_xlabel("Step")
    lr_ax.set_ylabel("Learning rate")
    lr_ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(filename)
    plt.close(fig)
    return Path(filename)
