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
Module and task ablations.

Description
-----

Two groups of variants are trained with the same seed and evaluated on the
test split:

```
group    row                              use_csem  use_febr  use_footprint_stream
modules  Baseline                         0         0         1
modules  Baseline+CSEM                    1         0         1
modules  Baseline+FEBR                    0         1         1
modules  Baseline+CSEM+FEBR (TSONet)      1         1         1
tasks    Height                           0         0         0
tasks    Height + Bins                    0         1         0
tasks    Height + Footprint               1         0         1
tasks    Height + Bins + Footprint        1         1         1
```

Rows sharing the same switches reuse one training run. The comparison table
is written as `ablation.json`, `ablation.csv` and `ablation.xlsx`.
"""

import dataclasses
import json
import logging
from collections import namedtuple
from pathlib import Path

import pandas as pd
import xlsxwriter

from tsonet.errors import ConfigError
from tsonet.metrics import METRIC_FIELDS
from tsonet.train import BEST_NAME, evaluate, train

logger = logging.getLogger(__name__)

Variant = namedtuple("Variant", ["group", "name", "use_csem", "use_febr", "use_footprint_stream"])

MODULE_ABLATION = (
    Variant("modules", "Baseline", False, False, True),
    Variant("modules", "Baseline+CSEM", True, False, True),
    Variant("modules", "Baseline+FEBR", False, True, True),
    Variant("modules", "Baseline+CSEM+FEBR (TSONet)", True, True, True),
)

TASK_ABLATION = (
    Variant("tasks", "Height", False, False, False),
    Variant("tasks", "Height + Bins", False, True, False),
    Variant("tasks", "Height + Footprint", True, False, True),
    Variant("tasks", "Height + Bins + Footprint", True, True, True),
)

MATRICES = {
    "default": MODULE_ABLATION + TASK_ABLATION,
    "modules": MODULE_ABLATION,
    "tasks": TASK_ABLATION,
}

COLUMNS = ("group", "name", "use_csem", "use_febr", "use_footprint_stream",
           "run") + METRIC_FIELDS


def variant_config(base_config, variant, out_dir):
    """Training config of one variant, all other settings kept."""
    return dataclasses.replace(base_config, use_csem=variant.use_csem,
                               use_febr=variant.use_febr,
                               use_footprint_stream=variant.use_footprint_stream,
                               out_dir=str(out_dir))


def run_name(variant):
    """Directory name of the training run behind a variant."""
    return "csem{:d}_febr{:d}_fp{:d}".format(variant.use_csem, variant.use_febr,
                                            variant.use_footprint_stream)


def run_ablation(base_config, matrix="default", out_dir="reports", split="test"):
    """Train and evaluate all variants of `matrix`, write and return the table."""
    if isinstance(matrix, str):
        if matrix not in MATRICES:
            raise ConfigError(f"unknown ablation matrix {matrix!r}, use one of "
                              f"{sorted(MATRICES)}")
        matrix = MATRICES[matrix]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    # reports of finished runs, keyed by run name
    reports = {}
    rows = []
    for variant in matrix:
        name = run_name(variant)
        # train only when no previous row used the same switches
        if name not in reports:
            logger.info("ablation run %s (%s)", name, variant.name)
            config = variant_config(base_config, variant, out_dir / "runs" / name)
            result = train(config)
            reports[name] = evaluate(result.out_dir / BEST_NAME, config.data_dir, split,
                                     batch_size=config.batch_size, device=config.device)
        # one table row per variant, metrics taken from its run
        row = variant._asdict()
        row["run"] = name
        row.update({key: getattr(reports[name], key) for key in METRIC_FIELDS})
        rows.append(row)

    table = pd.DataFrame(rows, columns=list(COLUMNS))
    write_ablation(table, out_dir)
    print(table.to_string(index=False))
    return table


def write_ablation(table, out_dir):
    """Store comparison table as JSON, CSV and XLSX."""
    out_dir = Path(out_dir)
    # records go through pandas JSON export so NaN becomes null
    with open(out_dir / "ablation.json", "w") as fout:
        json.dump(json.loads(table.to_json(orient="records")), fout, indent=4)
    table.to_csv(out_dir / "ablation.csv", index=False)
    export_to_xlsx(out_dir / "ablation.xlsx", table)


def export_to_xlsx(filename, table):
    """Create XLSX workbook with one worksheet per ablation group."""
    with xlsxwriter.Workbook(str(filename)) as workbook:
        # define styles
        title_line_style = workbook.add_format()
        title_line_style.set_bold()
        title_line_style.set_bg_color("#99ccff")

        table_header_style = workbook.add_format()
        table_header_style.set_bg_color("#c0c0c0")

        table_cell_style = workbook.add_format()
        table_cell_style.set_bg_color("#ffffcc")

        number_cell_style = workbook.add_format()
        number_cell_style.set_bg_color("#ffffcc")
        number_cell_style.set_num_format("0.0000")

        # all styles passed to the export function at once
        styles = {
            "title_line": title_line_style,
            "table_header": table_header_style,
            "table_cell": table_cell_style,
            "number_cell": number_cell_style,
        }

        # one worksheet per ablation group, rows kept in table order
        for group, rows in table.groupby("group", sort=False):
            worksheet = workbook.add_worksheet(f"{group} ablation")
            worksheet.set_column("A:A", 32)
            worksheet.set_column("B:D", 10)
            worksheet.set_column("E:K", 12)
            xlsx_export_group(worksheet, styles, group, rows)


def xlsx_export_group(worksheet, styles, group, rows):
    """Write rows of one ablation group into worksheet."""
    headers = ["variant", "CSEM", "FEBR", "footprint"] + [m.upper() for m in METRIC_FIELDS]
    # title line spans the whole table
    worksheet.write(0, 0, f"Ablation of {group}", styles["title_line"])
    for column in range(1, len(headers)):
        worksheet.write(0, column, "", styles["title_line"])

    # table header
    for column, header in enumerate(headers):
        worksheet.write(1, column, header, styles["table_header"])

    # table content, one variant per row
    for i, row in enumerate(rows.itertuples(index=False)):
        r = i + 2
        worksheet.write(r, 0, row.name, styles["table_cell"])
        worksheet.write(r, 1, int(row.use_csem), styles["table_cell"])
        worksheet.write(r, 2, int(row.use_febr), styles["table_cell"])
        worksheet.write(r, 3, int(row.use_footprint_stream), styles["table_cell"])
        # metrics that were not computed are shown as n/a
        for column, metric in enumerate(METRIC_FIELDS, start=4):
            value = getattr(row, metric)
            if value is None or pd.isna(value):
                worksheet.write(r, column, "n/a", styles["table_cell"])
            else:
                worksheet.write(r, column, float(value), styles["number_cell"])
