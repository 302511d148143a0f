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
Command line interface of TSONet.

Usage
-----

```
tsonet [-v] {synth,train,eval,predict,ablate,check,stats,plot-log} ...

  synth      write seeded synthetic scenes and the split manifest
  train      train the network described by a YAML/JSON config
  eval       evaluate a checkpoint on one split
  predict    write height and footprint rasters for a directory of samples
  ablate     train and evaluate the module and task ablations
  check      validate all samples of a dataset
  stats      building-height distribution of a split
  plot-log   plot loss, learning rate and val RMSE of a training log
```

Examples
--------

```
tsonet synth --spec spec.json --n 64 --out data/
tsonet train --config cfg.yaml
tsonet eval --ckpt runs/tsonet/best.npz --split test --report out.json
tsonet predict --ckpt runs/tsonet/best.npz --input data/samples --out heights/
tsonet ablate --matrix default --config cfg.yaml --out reports/
```

Exit codes: 0 success, 1 other failure, 2 config error, 3 data error,
4 numerical failure.
"""

import logging
import sys
from argparse import ArgumentParser
from pathlib import Path

import yaml

from tsonet.ablation import run_ablation
from tsonet.checkpoint import read_descriptor
from tsonet.checks import check_dataset, display_report
from tsonet.config import SyntheticSceneSpec, TrainConfig, from_dict, load_config
from tsonet.errors import ConfigError, TsonetError
from tsonet.reports import (height_distribution, plot_height_histogram, plot_rmse_by_bin,
                            plot_training_log)
from tsonet.synthetic import synthesize_dataset
from tsonet.train import evaluate, predict, train

logger = logging.getLogger("tsonet")


def cli_arguments(argv=None):
    """Retrieve all CLI arguments provided by user."""
    parser = ArgumentParser(prog="tsonet", description="Building height estimation "
                            "from monocular multispectral imagery")
    parser.add_argument("-v", "--verbose", dest="verbose", action="store_true", default=False,
                        help="Make messages verbose")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="Generate synthetic dataset")
    synth.add_argument("--spec", dest="spec", default=None,
                       help="YAML/JSON file with scene generator settings")
    synth.add_argument("--n", dest="n", type=int, default=64, help="Number of samples")
    synth.add_argument("--out", dest="out", required=True, help="Output dataset directory")
    synth.add_argument("--seed", dest="seed", type=int, default=0, help="Dataset seed")
    synth.add_argument("--ratios", dest="ratios", type=float, nargs=3, default=(0.7, 0.2, 0.1),
                       metavar=("TRAIN", "VAL", "TEST"), help="Split ratios")

    train = commands.add_parser("train", help="Train network")
    train.add_argument("--config", dest="config", required=True, help="Training config file")
    train.add_argument("--data", dest="data", default=None, help="Override data_dir")
    train.add_argument("--out", dest="out", default=None, help="Override out_dir")

    evaluate = commands.add_parser("eval", help="Evaluate checkpoint")
    evaluate.add_argument("--ckpt", dest="ckpt", required=True, help="Checkpoint file")
    evaluate.add_argument("--split", dest="split", default="test", help="Split to evaluate")
    evaluate.add_argument("--data", dest="data", default=None,
                          help="Dataset directory, defaults to the training data_dir")
    evaluate.add_argument("--report", dest="report", default=None, help="JSON report file")
    evaluate.add_argument("--csv", dest="csv", default=None, help="CSV report file")
    evaluate.add_argument("--band-set", dest="band_set", default=None,
                          help="Band configuration (ALL7, RGB_NIR, RGB)")
    evaluate.add_argument("--gsd", dest="gsd", type=float, default=None,
                          help="Simulated ground sampling distance in meters")
    evaluate.add_argument("--plot", dest="plot", default=None,
                          help="File with per-height-bin RMSE chart")

    predict = commands.add_parser("predict", help="Predict height maps")
    predict.add_argument("--ckpt", dest="ckpt", required=True, help="Checkpoint file")
    predict.add_argument("--input", dest="input", required=True, help="Directory with samples")
    predict.add_argument("--out", dest="out", required=True, help="Output directory")
    predict.add_argument("--band-set", dest="band_set", default=None,
                         help="Band configuration (ALL7, RGB_NIR, RGB)")

    ablate = commands.add_parser("ablate", help="Run ablation matrix")
    ablate.add_argument("--matrix", dest="matrix", default="default",
                        help="Ablation matrix: default, modules or tasks")
    ablate.add_argument("--config", dest="config", default=None, help="Base training config")
    ablate.add_argument("--data", dest="data", default=None, help="Override data_dir")
    ablate.add_argument("--out", dest="out", default="reports", help="Output directory")

    check = commands.add_parser("check", help="Check dataset samples")
    check.add_argument("--data", dest="data", required=True, help="Dataset directory")
    check.add_argument("--size", dest="size", type=int, default=256, help="Expected patch size")
    check.add_argument("-n", "--no-colors", dest="nocolors", action="store_true", default=False,
                       help="Disable color output")

    stats = commands.add_parser("stats", help="Building height distribution")
    stats.add_argument("--data", dest="data", required=True, help="Dataset directory")
    stats.add_argument("--split", dest="split", default="train", help="Split to analyze")
    stats.add_argument("--tau", dest="tau", type=float, default=2.0,
                       help="Footprint threshold in meters")
    stats.add_argument("--out", dest="out", default=None, help="Histogram file")

    plot_log = commands.add_parser("plot-log", help="Plot training log")
    plot_log.add_argument("--log", dest="log", required=True, help="train_log.jsonl file")
    plot_log.add_argument("--out", dest="out", required=True, help="Figure file")

    return parser.parse_args(argv)


def read_scene_spec(path):
    """Read scene generator settings, defaults when no file is given."""
    if path is None:
        return SyntheticSceneSpec()
    try:
        with open(path) as fin:
            data = yaml.safe_load(fin)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"scene spec {path} can not be read: {e}") from e
    return from_dict(SyntheticSceneSpec, data).validate()


def read_train_config(path, data_dir=None, out_dir=None):
    """Read training config and apply command line overrides."""
    config = load_config(path) if path is not None else TrainConfig()
    if data_dir is not None:
        config.data_dir = data_dir
    if out_dir is not None:
        config.out_dir = out_dir
    return config.validate()


def run_synth(args):
    manifest = synthesize_dataset(read_scene_spec(args.spec), args.n, args.out, args.seed,
                                  tuple(args.ratios))
    print("train/val/test: {}/{}/{}".format(*manifest.counts()))


def run_train(args):
    result = train(read_train_config(args.config, args.data, args.out))
    print("best checkpoint: {}".format(result.best_checkpoint))
    print("best val RMSE:   {}".format(result.best_val_rmse))
    print("steps:           {}".format(result.steps))


def run_eval(args):
    data_dir = args.data or read_descriptor(args.ckpt).train_config.get("data_dir")
    if data_dir is None:
        raise ConfigError("dataset directory is not known, use --data")
    report = evaluate(args.ckpt, data_dir, args.split, band_set=args.band_set,
                      target_gsd_m=args.gsd)
    print(report.to_frame().to_string(index=False))
    if args.report:
        report.write_json(args.report)
    if args.csv:
        report.write_csv(args.csv)
    if args.plot:
        plot_rmse_by_bin(report, args.plot)


def run_predict(args):
    written = predict(args.ckpt, args.input, args.out, band_set=args.band_set)
    print("{} predictions written".format(len(written)))


def run_ablate(args):
    run_ablation(read_train_config(args.config, args.data), args.matrix, args.out)


def run_check(args):
    report = check_dataset(args.data, verbose=args.verbose, expected_size=args.size)
    display_report(report, args.nocolors)
    return 1 if report.failures else 0


def run_stats(args):
    summary, heights = height_distribution(args.data, args.split, args.tau)
    print(summary.to_string())
    if args.out:
        plot_height_histogram(heights, args.out)


def run_plot_log(args):
    if not Path(args.log).is_file():
        raise ConfigError(f"training log {args.log} does not exist")
    plot_training_log(args.log, args.out)


COMMANDS = {
    "synth": run_synth,
    "train": run_train,
    "eval": run_eval,
    "predict": run_predict,
    "ablate": run_ablate,
    "check": run_check,
    "stats": run_stats,
    "plot-log": run_plot_log,
}


def main(argv=None):
    """Entry point to TSONet, returns the process exit code."""
    args = cli_arguments(argv)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logger.debug("running command %s", args.command)

    try:
        return COMMANDS[args.command](args) or 0
    except TsonetError as e:
        # one line diagnostic, exit code tells the error category
        print("{}: {}".format(type(e).__name__, e), file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
