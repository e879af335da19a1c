"""``GOALIENET_THREADS``: the cap on internal parallelism."""

from __future__ import annotations

import contextlib
import os

ENV_VAR = "GOALIENET_THREADS"


def thread_count(default: int = 1) -> int:
    """Positive integer from the environment, ``default`` when unset."""
    raw = os.environ.get(ENV_VAR, "").strip()
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {raw!r}")
    return n


@contextlib.contextmanager
def limit_threads(n: int | None = None):
    """Cap BLAS/OpenMP pools at ``n``; by default at the environment value, if set."""
    from threadpoolctl import threadpool_limits

    limit = thread_count(default=0) if n is None else n
    if limit:
        with threadpool_limits(limits=limit):
            yield
    else:
        yield
