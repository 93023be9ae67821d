"""Backend selection for the Gaussian-mixture kernels.

The compiled Cython module ``rfswarm._mixfast`` is used when it imported
cleanly at build time; otherwise the numpy implementation in
``rfswarm._mixslow`` takes over.  Set ``RFSWARM_KERNEL=python`` (or
``compiled``) to force a backend, e.g. for the benchmark in
``benchmarks/bench_kernels.py``.
"""

from __future__ import annotations

import os

from . import _mixslow

_FORCED = os.environ.get("RFSWARM_KERNEL", "").strip().lower()

_impl = None
if _FORCED in ("", "compiled", "cython", "fast"):
    try:
        from . import _mixfast as _impl
    except ImportError:
        _impl = None
        if _FORCED:
            raise ImportError(
                "RFSWARM_KERNEL requested the compiled kernel but "
                "rfswarm._mixfast is not built")
if _impl is None:
    _impl = _mixslow

BACKEND = "compiled" if _impl is not _mixslow else "python"

pair_log_terms = _impl.pair_log_terms
pair_terms = _impl.pair_terms
cost_terms = _impl.cost_terms


def backends():
    """Names of the importable kernel backends."""
    names = ["python"]
    try:
        from . import _mixfast  # noqa: F401
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names
