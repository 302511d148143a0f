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
Checker of all samples of a dataset directory.

Every sample listed in the manifest is loaded the same way training loads
it. Image payloads lying around without a manifest entry are reported too.

```
tsonet check --data data/ [-v] [-n]
```
"""

import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

from tsonet.dataset_io import _sample_stem, load_patch, read_manifest
from tsonet.errors import DataError


@dataclass
class CheckReport:
    """Counters of passes and failures with the failure messages."""

    passes: int = 0
    failures: int = 0
    problems: List[str] = field(default_factory=list)


def read_control_code(operation):
    """Try to execute tput to read control code for selected operation."""
    if shutil.which("tput") is None:
        return ""
    result = subprocess.run(["tput"] + operation.split(), capture_output=True, text=True)
    return result.stdout if result.returncode == 0 else ""


def check_dataset(directory, verbose=False, expected_size=256):
    """Check all samples of the dataset in `directory`, return CheckReport."""
    directory = Path(directory)
    # Start with empty counters of passes and failures.
    report = CheckReport()

    # Manifest lists all samples of the dataset together with their splits.
    manifest = read_manifest(directory)

    # Iterate over all samples listed in manifest and remember them, so
    # unlisted payloads can be detected later.
    listed = set()
    for entry in manifest.entries:
        sample = directory / entry.sample_path
        listed.add(_sample_stem(sample).resolve())
        try:
            # Sample is loaded and validated exactly as in training.
            load_patch(sample, expected_size=expected_size)
            if verbose:
                print("{} is valid".format(entry.sample_path))
            report.passes += 1
        except DataError as e:
            # Exception message names the offending file and the reason, so
            # it is printed as is.
            print("{} is invalid".format(entry.sample_path))
            print(e)
            report.failures += 1
            report.problems.append(str(e))

    # Image payloads without manifest entry are counted as failures too.
    for image in sorted(directory.rglob("*.img.f32")):
        if _sample_stem(image).resolve() not in listed:
            message = "{} is not listed in the manifest".format(image.relative_to(directory))
            print(message)
            report.failures += 1
            report.problems.append(message)

    # Counters and messages are returned, details have been displayed already.
    return report


def display_report(report, nocolors=False):
    """Display report about number of passes and failures."""
    # Colors are terminal control codes, empty strings are used when colored
    # output is disabled.
    red_background = green_background = magenta_background = no_color = ""

    # Control codes are read from `tput` when colors are enabled.
    if not nocolors:
        red_background = read_control_code("setab 1")
        green_background = read_control_code("setab 2")
        magenta_background = read_control_code("setab 5")
        no_color = read_control_code("sgr0")

    # Three possible outcomes: empty dataset, all samples OK, some samples
    # broken or unlisted.
    if report.failures == 0:
        if report.passes == 0:
            print("{}[WARN]{}: no samples listed".format(magenta_background, no_color))
        else:
            print("{}[OK]{}: all samples can be loaded".format(green_background, no_color))
    else:
        print("{}[FAIL]{}: invalid sample(s) detected".format(red_background, no_color))

    # Counters are printed at the end, CI parses them.
    print("{} passes".format(report.passes))
    print("{} failures".format(report.failures))
