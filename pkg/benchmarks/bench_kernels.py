"""Compare the compiled and pure-numpy kernel backends.

Run: python benchmarks/bench_kernels.py [--repeat N]

Times each kernel on training-sized inputs, checks the two backends agree
bit-for-bit, then times one full forward/backward step of the default
network under each backend.
"""

import argparse
import time

import numpy as np

from goalienet import model
from goalienet.tensor import Tape, Tensor, backward, kernels

KERNELS = ("im2col", "col2im", "maxpool2x2", "maxpool2x2_backward", "upsample2x", "upsample2x_backward")


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(rng):
    """(kernel name, args) pairs at the shapes one default training step sees."""
    x = rng.standard_normal((8, 64, 64, 32)).astype(np.float32)
    cols = rng.standard_normal((8 * 64 * 64, 5 * 5 * 32)).astype(np.float32)
    img = rng.standard_normal((8, 32, 128, 128)).astype(np.float32)
    pooled = rng.standard_normal((8, 32, 64, 64)).astype(np.float32)
    _, arg = kernels.available_backends()["python"].maxpool2x2(img)
    small = rng.standard_normal((8, 32, 32, 32)).astype(np.float32)
    return [
        ("im2col", (x, 5, 1, 2)),
        ("col2im", (cols, (8, 64, 64, 32), 5, 1, 2)),
        ("maxpool2x2", (img,)),
        ("maxpool2x2_backward", (pooled, arg)),
        ("upsample2x", (small,)),
        ("upsample2x_backward", (pooled,)),
    ]


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return a.shape == b.shape and a.dtype == b.dtype and np.array_equal(a, b)


def training_step(state, config, images, targets, masks):
    with Tape() as tape:
        outs = model.forward(state, config, Tensor(images))
        total = model.loss(outs, Tensor(targets), Tensor(masks))
    backward(total, tape, list(state.values()))
    return float(total.data)


def use_backend(module):
    for name in KERNELS:
        setattr(kernels, name, getattr(module, name))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled backend not built; only the numpy fallback is available")
    rng = np.random.default_rng(0)

    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in backends) + "   speedup  identical")
    for name, kargs in kernel_cases(rng):
        times, results = {}, {}
        for b, mod in backends.items():
            fn = getattr(mod, name)
            results[b] = fn(*kargs)
            times[b] = best_of(lambda: fn(*kargs), args.repeat)
        row = f"{name:<22}" + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
        if "cython" in backends:
            row += f"   {times['python'] / times['cython']:6.2f}x  {same(results['python'], results['cython'])}"
        print(row)

    config = model.ModelConfig()
    state = model.build(config, seed=0)
    images = rng.random((8, 3, *config.input_size)).astype(np.float32)
    targets = rng.random((8, 29, *config.heatmap_size)).astype(np.float32)
    masks = np.ones((8, 29), np.float32)
    original = {name: getattr(kernels, name) for name in KERNELS}
    print("\nfull forward+backward step, default network, batch 8")
    losses = {}
    try:
        for b, mod in backends.items():
            use_backend(mod)
            losses[b] = training_step(state, config, images, targets, masks)
            t = best_of(lambda: training_step(state, config, images, targets, masks), max(1, args.repeat // 2))
            print(f"  {b:<8} {t:.3f} s   loss {losses[b]!r}")
    finally:
        for name, fn in original.items():
            setattr(kernels, name, fn)
    if len(set(losses.values())) == 1:
        print("  losses identical across backends")


if __name__ == "__main__":
    main()
