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

"""Exceptions raised by TSONet, each one carrying the CLI exit code it maps to."""


class TsonetError(Exception):
    """Base class for all errors reported by this package."""

    exit_code = 1


class ConfigError(TsonetError):
    """Invalid configuration value or inconsistent set of options."""

    exit_code = 2


class DataError(TsonetError):
    """Sample data can not be used (non-finite values, empty split...)."""

    exit_code = 3


class FormatError(DataError):
    """On-disk sample does not follow the declared header (shape, dtype)."""


class PairingError(DataError):
    """Image payload has no matching height label (or the other way around)."""


class NumericalError(TsonetError):
    """Training diverged, for example the loss became NaN."""

    exit_code = 4


class ContractError(TsonetError, ValueError):
    """Tensor shapes passed to a module do not satisfy its contract."""
