"""Central finite-difference checks for the autodiff engine."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from goalienet.tensor.engine import Tape, Tensor, backward


@dataclass
class GradCheckResult:
    passed: bool
    max_rel_error: float
    checked: int
    excluded: int
    failures: list[tuple[int, tuple[int, ...], float, float]] = field(default_factory=list)

    def __bool__(self):
        return self.passed


def _evaluate(f, inputs):
    with Tape() as tape:
        out = f(inputs)
    return float(np.asarray(out.data, dtype=np.float64).reshape(-1)[0]), tape.patterns()


def _same_region(pa, pb):
    return len(pa) == len(pb) and all(np.array_equal(a, b) for a, b in zip(pa, pb))


def gradient_check(
    f: Callable[[list[Tensor]], Tensor],
    inputs: Sequence[Tensor],
    wrt: Sequence[int] | None = None,
    eps: float = 1e-3,
    tol: float = 1e-3,
    atol: float = 0.0,
    coords: dict[int, Sequence[tuple[int, ...]]] | None = None,
    oracle_dtype=np.float64,
) -> GradCheckResult:
    """Compare autodiff gradients of scalar ``f(inputs)`` to central differences.

    The analytic gradient is taken in the inputs' own dtype. The difference
    quotient is evaluated on ``oracle_dtype`` copies of the same values, so a
    float32 check measures float32 backward error against an accurate oracle.

    Per coordinate, ``|analytic - numeric| / max(|analytic|, |numeric|, atol)``
    must not exceed ``tol``. Coordinates whose +/-eps probe leaves the current
    piecewise-linear region (a relu flips or a pool argmax moves) are retried
    at eps/10 and eps/100 and excluded if every probe crosses a kink.
    """
    inputs = list(inputs)
    wrt = list(range(len(inputs))) if wrt is None else list(wrt)
    with Tape() as tape:
        out = f(inputs)
    targets = [inputs[i] for i in wrt]
    analytic = backward(out, tape, params=targets)

    oracle = [Tensor(t.data.astype(oracle_dtype)) for t in inputs]
    _, base_pattern = _evaluate(f, oracle)

    worst, checked, excluded = 0.0, 0, 0
    failures = []
    for slot, idx in enumerate(wrt):
        arr = oracle[idx].data
        picks = coords.get(idx) if coords else None
        if picks is None:
            picks = list(np.ndindex(*arr.shape)) if arr.ndim else [()]
        for c in picks:
            orig = arr[c]
            numeric = None
            for scale in (1.0, 0.1, 0.01):
                h = eps * scale
                arr[c] = orig + h
                fp, pp = _evaluate(f, oracle)
                arr[c] = orig - h
                fm, pm = _evaluate(f, oracle)
                arr[c] = orig
                if _same_region(pp, base_pattern) and _same_region(pm, base_pattern):
                    numeric = (fp - fm) / (2 * h)
                    break
            if numeric is None:
                excluded += 1
                continue
            a = float(analytic[slot][c])
            denom = max(abs(a), abs(numeric), atol)
            rel = 0.0 if denom == 0 else abs(a - numeric) / denom
            checked += 1
            if rel > worst:
                worst = rel
            if rel > tol:
                failures.append((idx, tuple(c), a, numeric))
    return GradCheckResult(not failures, worst, checked, excluded, failures)


def random_coords(shape, n, rng):
    """Up to ``n`` distinct random index tuples into an array of ``shape``."""
    size = int(np.prod(shape))
    flat = rng.choice(size, size=min(n, size), replace=False)
    return [tuple(int(v) for v in np.unravel_index(i, shape)) for i in np.sort(flat)]
