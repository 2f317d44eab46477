# Copyright 2026 The cdpsim Authors
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
"""Cyclic data parallelism simulator: timelines, costs, toy training."""

from ._cdpsim import (
    SCHEMES,
    ConfigError,
    DivergenceError,
    Error,
    InfeasibleRuleError,
    IoError,
    extrapolate,
    run_experiment,
    simulate,
    table1,
    triangular_series,
    validate_timeline_text,
)

__all__ = [
    "SCHEMES",
    "ConfigError",
    "DivergenceError",
    "Error",
    "InfeasibleRuleError",
    "IoError",
    "extrapolate",
    "run_experiment",
    "simulate",
    "table1",
    "triangular_series",
    "validate_timeline_text",
]
