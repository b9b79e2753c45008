"""Bi-layered parallel CNN training: bindings to the C++ library."""

from ._core import (
    RuntimeFailure,
    ValidationError,
    config_keys,
    crc32,
    gradcheck,
    inspect_plan,
    load_idx,
    parameter_count,
    presets,
    remaining_iterations,
    render_config,
    run_matrix,
    train,
    workload_balance,
)

__all__ = [
    "RuntimeFailure",
    "ValidationError",
    "config_keys",
    "crc32",
    "gradcheck",
    "inspect_plan",
    "load_idx",
    "parameter_count",
    "presets",
    "remaining_iterations",
    "render_config",
    "run_matrix",
    "train",
    "workload_balance",
]
