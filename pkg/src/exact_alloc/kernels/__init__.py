"""Hot-loop kernels with a compiled core and a pure-numpy fallback.

The compiled backend (``_core``, Cython) is preferred when importable;
otherwise the numpy reference (``_ref``) is used.  Both produce
bit-identical outputs, so the choice never affects results, only speed.
``EXACT_ALLOC_KERNELS`` overrides selection: ``cy`` requires the compiled
core, ``py`` forces the fallback, ``auto`` (default) picks what is there.
"""

from __future__ import annotations

import os

from . import _ref


def _select():
    choice = os.environ.get("EXACT_ALLOC_KERNELS", "auto")
    if choice not in ("auto", "cy", "py"):
        raise ValueError(f"EXACT_ALLOC_KERNELS must be auto|cy|py, got {choice!r}")
    if choice == "py":
        return _ref, "python"
    try:
        from . import _core

        return _core, "cython"
    except ImportError:
        if choice == "cy":
            raise
        return _ref, "python"


_impl, BACKEND = _select()

effective_context = _impl.effective_context
bucket_indices = _impl.bucket_indices
bucket_counts = _impl.bucket_counts
map_bucket_weights = _impl.map_bucket_weights
segment_prefix_mean = _impl.segment_prefix_mean
segment_suffix_scatter = _impl.segment_suffix_scatter

__all__ = [
    "BACKEND",
    "bucket_counts",
    "bucket_indices",
    "effective_context",
    "map_bucket_weights",
    "segment_prefix_mean",
    "segment_suffix_scatter",
]
