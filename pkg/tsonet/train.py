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
Training, evaluation and prediction.

Training recipe
-----

* AdamW with decoupled weight decay 0.01, base learning rate 1e-4
* linear warm-up over the first 30 % of all optimizer steps, cosine decay
  to zero afterwards; `total_steps = epochs * ceil(n_train / batch_size)`
* global gradient L2 norm clipped at 10
* validation RMSE after every epoch, the best epoch is kept as
  `best.npz` (ties go to the earlier epoch)

Files written into `out_dir`:

```
config.yaml       echo of the training configuration
train_log.jsonl   one object per optimizer step and one per validation
best.npz          checkpoint with the lowest validation RMSE
last.npz          checkpoint after the final step
```
"""

import json
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import torch
import yaml
from torch.utils.data import DataLoader
from tqdm import tqdm

from tsonet.checkpoint import load_checkpoint, save_checkpoint
from tsonet.config import LossConfig, from_dict, to_dict
from tsonet.dataset_io import PatchDataset, load_patch, select_bands
from tsonet.errors import ConfigError, DataError, NumericalError
from tsonet.metrics import MetricsAccumulator
from tsonet.network import TSONet
from tsonet.objectives import compute_objective

logger = logging.getLogger(__name__)

LOG_NAME = "train_log.jsonl"
BEST_NAME = "best.npz"
LAST_NAME = "last.npz"
CONFIG_ECHO_NAME = "config.yaml"


def lr_at(step, total_steps, base_lr, warmup_fraction):
    """Learning rate at optimizer step `step` (0-based) out of `total_steps`."""
    if total_steps <= 0:
        raise ConfigError("total_steps must be positive")
    warmup = warmup_fraction * total_steps
    if step < warmup:
        return base_lr * step / warmup
    decay = max(total_steps - warmup, 1e-12)
    progress = min(max((step - warmup) / decay, 0.0), 1.0)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def seed_everything(seed, deterministic=True):
    """Seed python, numpy and torch generators."""
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(deterministic, warn_only=True)
    torch.backends.cudnn.benchmark = not deterministic


def gradient_norm(parameters):
    """Global L2 norm of all gradients."""
    norms = [p.grad.detach().norm(2) for p in parameters if p.grad is not None]
    if not norms:
        return 0.0
    return float(torch.linalg.vector_norm(torch.stack(norms), 2))


def to_device(batch, device):
    """Move tensors of a collated batch to `device`."""
    return {key: value.to(device) if torch.is_tensor(value) else value
            for key, value in batch.items()}


class JsonLinesLog:
    """Append-only JSON-lines log."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.fout = self.path.open("w")

    def write(self, record):
        self.fout.write(json.dumps(record) + "\n")
        self.fout.flush()

    def close(self):
        self.fout.close()


def read_log(path):
    """Read JSON-lines training log into list of dictionaries."""
    with open(path) as fin:
        return [json.loads(line) for line in fin if line.strip()]


@dataclass
class TrainResult:
    """Summary of one training run."""

    out_dir: Path
    best_checkpoint: Path
    last_checkpoint: Path
    log_path: Path
    best_val_rmse: Optional[float]
    best_epoch: Optional[int]
    steps: int
    validations: List[dict] = field(default_factory=list)


def make_loader(dataset, batch_size, shuffle=False, seed=0, num_workers=0):
    """DataLoader with a dedicated, seeded shuffling generator."""
    generator = torch.Generator()
    generator.manual_seed(seed)
    return DataLoader(dataset, batch_size=batch_size, shuffle=shuffle, generator=generator,
                      num_workers=num_workers, drop_last=False)


@torch.no_grad()
def evaluate_model(model, loader, loss_config, device="cpu"):
    """Single deterministic pass over `loader`, return the MetricsReport."""
    model.eval()
    accumulator = MetricsAccumulator(tau_fp=loss_config.tau_fp, eps=loss_config.epsilon)
    for batch in loader:
        batch = to_device(batch, device)
        outputs = model(batch["image"])
        if outputs.footprint_logits is not None:
            probability = torch.sigmoid(outputs.footprint_logits)
        else:
            # height-only variants: the footprint is the thresholded height map
            probability = (outputs.height > loss_config.tau_fp).float()
        accumulator.update(outputs.height, batch["heights"], batch["valid_mask"], probability)
    return accumulator.report()


def _datasets(config):
    train_set = PatchDataset(config.data_dir, "train", config.band_set, config.target_gsd_m)
    val_set = PatchDataset(config.data_dir, "val", config.band_set, config.target_gsd_m)
    if len(train_set) == 0:
        raise ConfigError(f"dataset {config.data_dir} has an empty train split")
    if len(val_set) == 0:
        raise ConfigError(f"dataset {config.data_dir} has an empty val split")
    return train_set, val_set


def train(config, model=None):
    """Train TSONet according to TrainConfig, return TrainResult."""
    config.validate()
    seed_everything(config.seed, config.deterministic)
    device = torch.device(config.device)

    train_set, val_set = _datasets(config)
    train_loader = make_loader(train_set, config.batch_size, shuffle=True, seed=config.seed,
                               num_workers=config.num_workers)
    val_loader = make_loader(val_set, config.batch_size, num_workers=config.num_workers)

    if model is None:
        model = TSONet(config.network_config())
    model.to(device)
    parameters = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.AdamW(parameters, lr=0.0, weight_decay=config.weight_decay)

    steps_per_epoch = math.ceil(len(train_set) / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    if config.max_steps is not None:
        total_steps = min(total_steps, config.max_steps)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / CONFIG_ECHO_NAME).open("w") as fout:
        yaml.safe_dump(to_dict(config), fout, sort_keys=False)

    log = JsonLinesLog(out_dir / LOG_NAME)
    best_path, last_path = out_dir / BEST_NAME, out_dir / LAST_NAME
    best_rmse, best_epoch = None, None
    validations = []
    step = 0

    logger.info("training on %d samples, validating on %d, %d steps", len(train_set),
                len(val_set), total_steps)
    try:
        for epoch in range(config.epochs):
            if step >= total_steps:
                break
            model.train()
            progress = tqdm(train_loader, desc=f"epoch {epoch}", leave=False, disable=None)
            for batch in progress:
                if step >= total_steps:
                    break
                lr = lr_at(step, total_steps, config.base_lr, config.warmup_fraction)
                for group in optimizer.param_groups:
                    group["lr"] = lr

                batch = to_device(batch, device)
                outputs = model(batch["image"])
                losses = compute_objective(outputs, batch["heights"], batch["valid_mask"],
                                           config.loss, config.use_footprint_stream)
                if not torch.isfinite(losses.total):
                    raise NumericalError(f"non-finite loss at step {step} (epoch {epoch}): "
                                         f"{losses.as_floats()}")

                optimizer.zero_grad(set_to_none=True)
                losses.total.backward()
                grad_norm = float(torch.nn.utils.clip_grad_norm_(parameters, config.grad_clip_l2))
                clipped_norm = gradient_norm(parameters)
                optimizer.step()

                record = {"event": "step", "step": step, "epoch": epoch, "lr": lr,
                          "grad_norm": grad_norm, "grad_norm_clipped": clipped_norm}
                record.update(losses.as_floats())
                log.write(record)
                if step % config.log_every == 0:
                    logger.info("step %d  loss %.4f  lr %.3g", step, record["loss"], lr)
                    progress.set_postfix(loss=f"{record['loss']:.4f}")
                step += 1

            report = evaluate_model(model, val_loader, config.loss, device)
            candidate = report.rmse if report.rmse is not None else math.inf
            improved = best_epoch is None or candidate < best_rmse
            if improved:
                best_rmse, best_epoch = candidate, epoch
                save_checkpoint(best_path, model, config, step=step, epoch=epoch,
                                best_val_rmse=report.rmse)
            validation = {"event": "validation", "epoch": epoch, "step": step,
                          "val_rmse": report.rmse, "val_mae": report.mae,
                          "val_iou": report.iou, "best": improved}
            log.write(validation)
            validations.append(validation)
            logger.info("epoch %d  val RMSE %s%s", epoch, report.rmse,
                        "  (best)" if improved else "")
    finally:
        log.close()

    save_checkpoint(last_path, model, config, step=step, epoch=best_epoch,
                    best_val_rmse=None if best_rmse in (None, math.inf) else best_rmse)
    return TrainResult(out_dir=out_dir, best_checkpoint=best_path, last_checkpoint=last_path,
                       log_path=out_dir / LOG_NAME,
                       best_val_rmse=None if best_rmse in (None, math.inf) else best_rmse,
                       best_epoch=best_epoch, steps=step, validations=validations)


def evaluate(checkpoint, data_dir, split="test", band_set=None, target_gsd_m=None,
             batch_size=10, device="cpu"):
    """Evaluate stored model on one split of a dataset, return MetricsReport."""
    model, descriptor = load_checkpoint(checkpoint, device)
    train_config = descriptor.train_config
    band_set = band_set or train_config.get("band_set", "ALL7")
    loss_config = _loss_config(train_config)

    dataset = PatchDataset(data_dir, split, band_set, target_gsd_m)
    if len(dataset) == 0:
        logger.warning("split %s of %s is empty", split, data_dir)
    report = evaluate_model(model, make_loader(dataset, batch_size), loss_config, device)
    logger.info("evaluated %s on %d %s samples", checkpoint, len(dataset), split)
    return report


def _loss_config(train_config):
    return from_dict(LossConfig, train_config.get("loss", {}))


@torch.no_grad()
def predict(checkpoint, input_dir, out_dir, band_set=None, device="cpu"):
    """Write height and footprint probability rasters for all samples in `input_dir`."""
    model, descriptor = load_checkpoint(checkpoint, device)
    band_set = band_set or descriptor.train_config.get("band_set", "ALL7")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    samples = sorted(Path(input_dir).rglob("*.img.f32"))
    if not samples:
        raise DataError(f"no samples found in {input_dir}")

    written = []
    for sample in tqdm(samples, desc="predict", disable=None):
        patch = select_bands(load_patch(sample, expected_size=None), band_set)
        image = torch.from_numpy(patch.image).unsqueeze(0).to(device)
        outputs = model(image)

        scene_id = patch.meta.scene_id
        height = np.clip(outputs.height[0].cpu().numpy(), 0.0, None).astype("<f4")
        height_path = out_dir / f"{scene_id}.pred.f32"
        height.tofile(height_path)
        sidecar = {"scene_id": scene_id, "shape": list(height.shape), "dtype": "float32",
                   "checkpoint": str(checkpoint), "band_set": band_set,
                   "height": height_path.name}

        if outputs.footprint_logits is not None:
            probability = torch.sigmoid(outputs.footprint_logits[0]).cpu().numpy().astype("<f4")
            footprint_path = out_dir / f"{scene_id}.fp.f32"
            probability.tofile(footprint_path)
            sidecar["footprint_probability"] = footprint_path.name

        sidecar_path = out_dir / f"{scene_id}.pred.json"
        with sidecar_path.open("w") as fout:
            json.dump(sidecar, fout, indent=4)
        written.append(sidecar_path)
    logger.info("%d predictions written to %s", len(written), out_dir)
    return written
