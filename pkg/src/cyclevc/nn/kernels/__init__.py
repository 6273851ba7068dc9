"""Kernel backend selection: compiled core when built, numpy otherwise.

The active backend is chosen at import time (override with the
CYCLEVC_KERNELS environment variable, values "ext" or "python") and can
be switched at runtime with set_backend(), which the kernel benchmark
uses to time both implementations in one process.
"""
from __future__ import annotations

import os

from . import pykernels

_IMPLS = {"python": pykernels}

try:
    from . import _convcore

    _IMPLS["ext"] = _convcore
except ImportError:
    _convcore = None

_requested = os.environ.get("CYCLEVC_KERNELS")
if _requested is not None and _requested not in _IMPLS:
    raise ImportError(
        f"CYCLEVC_KERNELS={_requested!r} but available backends are {sorted(_IMPLS)}"
    )
_active_name = _requested or ("ext" if "ext" in _IMPLS else "python")


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_IMPLS))


def active_backend() -> str:
    return _active_name


def set_backend(name: str) -> None:
    global _active_name
    if name not in _IMPLS:
        raise ValueError(f"unknown kernel backend {name!r}; have {sorted(_IMPLS)}")
    _active_name = name


def conv1d_valid_fwd(x, w, stride):
    return _IMPLS[_active_name].conv1d_valid_fwd(x, w, stride)


def conv1d_valid_bwd(x, w, dy, stride):
    return _IMPLS[_active_name].conv1d_valid_bwd(x, w, dy, stride)


def conv2d_valid_fwd(x, w, sh, sw):
    return _IMPLS[_active_name].conv2d_valid_fwd(x, w, sh, sw)


def conv2d_valid_bwd(x, w, dy, sh, sw):
    return _IMPLS[_active_name].conv2d_valid_bwd(x, w, dy, sh, sw)
