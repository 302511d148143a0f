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

"""Style check of the package, its tests and the setup script.

Usage:

```
python3 run_pycodestyle.py
```

Settings (line length etc.) are read from `setup.cfg`. Exit code is 1 when
any issue is found.
"""

import sys
from pathlib import Path

import pycodestyle

CHECKED = ("tsonet", "tests")


def python_sources(root="."):
    """All Python sources of the checked directories plus top-level scripts."""
    root = Path(root)
    # scripts stored in the top level directory
    files = sorted(root.glob("*.py"))
    # all sources in the package and in tests, recursively
    for directory in CHECKED:
        files.extend(sorted((root / directory).rglob("*.py")))
    return [str(f) for f in files]


def main():
    """Run pycodestyle, print the number of issues."""
    # settings like max line length are read from setup.cfg
    style = pycodestyle.StyleGuide(quiet=False, config_file="setup.cfg")

    # all issues are printed by pycodestyle itself
    result = style.check_files(python_sources())

    # summary at the end, CI parses it
    print("Total errors:", result.total_errors)
    return 1 if result.total_errors > 0 else 0


if __name__ == "__main__":
    sys.exit(main())
