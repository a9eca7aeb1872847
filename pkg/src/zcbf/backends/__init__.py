"""Kernel backend selection.

Two interchangeable implementations of the network kernels exist: a
numba-compiled one (default when numba imports cleanly) and a pure-numpy
one. The environment variable ZCBF_BACKEND ("numba" or "numpy") picks
the default; `select_backend` overrides it programmatically. See
benchmarks/kernel_benchmark.py for a speed comparison.
"""
from __future__ import annotations

import os

from . import numpy_backend

_BACKENDS = {"numpy": numpy_backend}

try:
    from . import numba_backend

    _BACKENDS["numba"] = numba_backend
    _FALLBACK = "numba"
except ImportError:  # pragma: no cover - exercised only without numba
    _FALLBACK = "numpy"

_active = None


def available_backends() -> list[str]:
    return sorted(_BACKENDS)

def select_backend(name: str):
    """Force a backend by name; returns the backend module."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(
            f"unknown backend {name!r}; available: {', '.join(available_backends())}"
        )
    _active = _BACKENDS[name]
    return _active


def active_backend():
    """Backend module in effect (env var ZCBF_BACKEND on first use)."""
    global _active
    if _active is None:
        select_backend(os.environ.get("ZCBF_BACKEND", _FALLBACK))
    return _active
