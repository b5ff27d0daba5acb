"""Helpers for named parameter groups.

A parameter-group collection ("the model") is an ordered dict mapping a
group name to a flat float64 vector; gradients and optimizer buffers share
the same structure. Groups model layers: per-group step-size scales and
norms are computed over one group's vector.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, InputError

ParamGroups = dict  # name -> 1-D float64 ndarray

__all__ = [
    "ParamGroups",
    "as_groups",
    "group_shapes",
    "zeros_like_shapes",
    "clone",
    "concat",
    "check_structure",
    "check_shapes",
    "check_finite",
]


def as_groups(groups) -> dict:
    """Coerce a mapping of vectors into float64 1-D arrays, keeping order."""
    out = {}
    for name, values in groups.items():
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1:
            raise DimensionError(
                f"group '{name}' must be a flat vector, got shape {arr.shape}"
            )
        out[name] = arr
    if not out:
        raise DimensionError("at least one parameter group is required")
    return out


def group_shapes(groups) -> dict:
    return {name: arr.shape[0] for name, arr in groups.items()}


def zeros_like_shapes(shapes: dict) -> dict:
    if not shapes:
        raise DimensionError("at least one parameter group is required")
    return {name: np.zeros(int(size), dtype=np.float64) for name, size in shapes.items()}


def clone(groups: dict) -> dict:
    return {name: arr.copy() for name, arr in groups.items()}


def concat(groups: dict) -> np.ndarray:
    return np.concatenate([groups[name] for name in groups])


def check_structure(a: dict, b: dict, what: str = "groups"):
    """Require identical group names and per-group lengths."""
    if list(a.keys()) != list(b.keys()):
        raise DimensionError(
            f"{what}: group names differ ({list(a.keys())} vs {list(b.keys())})"
        )
    for name in a:
        if a[name].shape != b[name].shape:
            raise DimensionError(
                f"{what}: group '{name}' lengths differ "
                f"({a[name].shape[0]} vs {b[name].shape[0]})"
            )


def check_shapes(shapes: dict, b: dict, what: str = "groups"):
    """Require group names and lengths to match a shape map."""
    if list(shapes.keys()) != list(b.keys()):
        raise DimensionError(
            f"{what}: group names differ ({list(shapes.keys())} vs {list(b.keys())})"
        )
    for name, size in shapes.items():
        if b[name].shape != (size,):
            raise DimensionError(
                f"{what}: group '{name}' lengths differ ({size} vs {b[name].shape[0]})"
            )


def check_finite(groups: dict, what: str = "groups"):
    for name, arr in groups.items():
        if not np.isfinite(arr).all():
            raise InputError(f"{what}: group '{name}' contains non-finite values")
