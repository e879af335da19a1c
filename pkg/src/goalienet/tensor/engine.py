"""Dense tensors with tape-based reverse-mode differentiation.

Only the operations the pose network needs are provided. There is no
broadcasting: every binary op requires identical shapes and dtypes.
Layout is row-major NCHW; float32 for training, float64 for gradient checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from goalienet.tensor import kernels

SUPPORTED_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Raised when operand shapes or dtypes are incompatible."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in SUPPORTED_DTYPES:
            arr = arr.astype(np.float32)
        # ascontiguousarray would promote 0-d arrays to shape (1,)
        self.data = np.ascontiguousarray(arr).reshape(arr.shape)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad, name=self.name)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


@dataclass
class Node:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    op: str
    # piecewise-linear region marker (relu mask / pool argmax); used by gradient checks
    pattern: np.ndarray | None = None


@dataclass
class Tape:
    """Ordered record of executed operations. Use as a context manager."""

    nodes: list[Node] = field(default_factory=list)

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.pop()
        return False

    def patterns(self) -> list[np.ndarray]:
        return [n.pattern for n in self.nodes if n.pattern is not None]


_TAPES: list[Tape] = []


def _record(out: Tensor, inputs, backward, op, pattern=None) -> Tensor:
    if _TAPES and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _TAPES[-1].nodes.append(Node(out, tuple(inputs), backward, op, pattern))
    elif _TAPES and pattern is not None:
        # keep region markers even for constant subgraphs
        _TAPES[-1].nodes.append(Node(out, (), lambda g: (), op, pattern))
    return out


def _same(a: Tensor, b: Tensor, what: str):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {a.shape} vs {b.shape}")
    if a.dtype != b.dtype:
        raise ShapeError(f"{what}: dtype mismatch {a.dtype} vs {b.dtype}")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x[N,Cin,H,W]`` with ``weight[Cout,Cin,k,k]`` plus bias."""
    if x.data.ndim != 4 or weight.data.ndim != 4 or bias.data.ndim != 1:
        raise ShapeError("conv2d expects x[N,C,H,W], weight[Cout,Cin,k,k], bias[Cout]")
    n, cin, h, w = x.shape
    cout, wcin, k, k2 = weight.shape
    if wcin != cin:
        raise ShapeError(f"conv2d: input has {cin} channels, weight expects {wcin}")
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"conv2d: kernel must be square and odd, got {k}x{k2}")
    if bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({cout},)")
    if stride < 1 or padding < 0:
        raise ShapeError("conv2d: stride must be >= 1 and padding >= 0")
    if x.dtype != weight.dtype or x.dtype != bias.dtype:
        raise ShapeError("conv2d: dtype mismatch")
    span_h, span_w = h + 2 * padding - k, w + 2 * padding - k
    if span_h < 0 or span_w < 0 or span_h % stride or span_w % stride:
        raise ShapeError(f"conv2d: non-integral output size for H={h}, W={w}, k={k}, "
                         f"stride={stride}, padding={padding}")
    ho, wo = span_h // stride + 1, span_w // stride + 1

    # channels-last GEMM: rows are output pixels, which suits BLAS for few channels
    x_nhwc = np.ascontiguousarray(x.data.transpose(0, 2, 3, 1))
    cols = kernels.im2col(x_nhwc, k, stride, padding)
    wmat = np.ascontiguousarray(weight.data.transpose(0, 2, 3, 1)).reshape(cout, -1)
    out = cols @ wmat.T
    out += bias.data
    out = np.ascontiguousarray(out.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2))

    need_dx = x.requires_grad

    def backward(g):
        gm = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, cout)
        dw = (cols.T @ gm).T.reshape(cout, k, k, cin).transpose(0, 3, 1, 2)
        db = gm.sum(axis=0)
        dx = None
        if need_dx:
            dx = kernels.col2im(gm @ wmat, (n, h, w, cin), k, stride, padding).transpose(0, 3, 1, 2)
        return dx, np.ascontiguousarray(dw), db

    return _record(Tensor(out), (x, weight, bias), backward, "conv2d")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, x.data.dtype.type(0))

    def backward(g):
        return (np.where(mask, g, g.dtype.type(0)),)

    return _record(Tensor(out), (x,), backward, "relu", pattern=mask)


def max_pool2d(x: Tensor, window: int = 2, stride: int = 2) -> Tensor:
    if window != 2 or stride != 2:
        raise ShapeError("max_pool2d supports window=2, stride=2 only")
    if x.data.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(f"max_pool2d needs [N,C,H,W] with even H, W; got {x.shape}")
    out, arg = kernels.maxpool2x2(x.data)

    def backward(g):
        return (kernels.maxpool2x2_backward(np.ascontiguousarray(g), arg),)

    return _record(Tensor(out), (x,), backward, "max_pool2d", pattern=arg)


def upsample_nearest2x(x: Tensor) -> Tensor:
    if x.data.ndim != 4:
        raise ShapeError(f"upsample_nearest2x needs [N,C,H,W]; got {x.shape}")
    out = kernels.upsample2x(x.data)

    def backward(g):
        return (kernels.upsample2x_backward(np.ascontiguousarray(g)),)

    return _record(Tensor(out), (x,), backward, "upsample_nearest2x")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same(a, b, "add")

    def backward(g):
        return g, g

    return _record(Tensor(a.data + b.data), (a, b), backward, "add")


def tensor_sum(x: Tensor) -> Tensor:
    def backward(g):
        return (np.full(x.shape, g, dtype=x.dtype),)

    return _record(Tensor(np.asarray(x.data.sum(), dtype=x.dtype)), (x,), backward, "sum")


def mse_masked(pred: Tensor, target: Tensor, mask: Tensor) -> Tensor:
    """Masked heatmap MSE: per-channel spatial mean, summed over unmasked
    (n, k) pairs, divided by ``max(1, sum(mask))``."""
    _same(pred, target, "mse_masked")
    if pred.data.ndim != 4:
        raise ShapeError(f"mse_masked needs [N,K,H,W]; got {pred.shape}")
    if mask.shape != pred.shape[:2]:
        raise ShapeError(f"mse_masked: mask shape {mask.shape} != {pred.shape[:2]}")
    dt = pred.dtype
    m = mask.data.astype(dt, copy=False)
    denom = dt.type(max(1.0, float(m.sum())))
    hw = pred.shape[2] * pred.shape[3]
    diff = pred.data - target.data
    per = (diff * diff).mean(axis=(2, 3))
    loss = np.asarray((m * per).sum() / denom, dtype=dt)

    def backward(g):
        scale = (m * (dt.type(2) * g / (denom * hw))).astype(dt)
        dp = scale[:, :, None, None] * diff
        return dp, -dp, None

    return _record(Tensor(loss), (pred, target, mask), backward, "mse_masked")


def backward(loss: Tensor, tape: Tape, params: Sequence[Tensor] | None = None) -> list[np.ndarray] | None:
    """Reverse-mode accumulation over ``tape``.

    Sets ``.grad`` on every gradient-requiring leaf reached from ``loss``.
    Tensors in ``params`` that are not on the path receive a zero gradient.
    Returns the gradients of ``params`` (in order) when given.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss; got shape {loss.shape}")
    produced = {id(n.out) for n in tape.nodes}
    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=loss.dtype)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
            if key not in produced:
                leaves[key] = inp
    for key, t in leaves.items():
        t.grad = grads.get(key, np.zeros(t.shape, dtype=t.dtype)).reshape(t.shape)
    if params is None:
        return None
    out = []
    for p in params:
        if id(p) not in leaves:
            p.grad = np.zeros(p.shape, dtype=p.dtype)
        out.append(p.grad)
    return out
