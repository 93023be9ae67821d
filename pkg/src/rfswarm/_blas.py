"""BLAS threading control.

The solvers here factor many small (tens-of-rows) matrices in sequence;
OpenBLAS thread wake-up latency dominates at that size, so the hot loops
run under a single-threaded BLAS limit.
"""

from contextlib import nullcontext

try:
    from threadpoolctl import threadpool_limits

    def single_threaded_blas():
        return threadpool_limits(limits=1, user_api="blas")
except ImportError:  # pragma: no cover - threadpoolctl is a declared dep
    def single_threaded_blas():
        return nullcontext()
