# Copyright 2026 The rrrnet Authors.
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
"""Python access to the rrrnet C++ core."""

from ._rrrnet import (
    ArchSpec,
    FormatError,
    NumericError,
    ShapeError,
    ValidationError,
    compute_branch_width,
    cost_report_csv,
    extract_reduced,
    forward,
    init_store,
    load_store,
    minimal_arch,
    save_store,
    solve_budget_offset,
    split_kernels,
    template_arch,
    total_flops,
    total_params,
)

__all__ = [
    "ArchSpec",
    "FormatError",
    "NumericError",
    "ShapeError",
    "ValidationError",
    "compute_branch_width",
    "cost_report_csv",
    "extract_reduced",
    "forward",
    "init_store",
    "load_store",
    "minimal_arch",
    "save_store",
    "solve_budget_offset",
    "split_kernels",
    "template_arch",
    "total_flops",
    "total_params",
]
