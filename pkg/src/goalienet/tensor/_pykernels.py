"""Pure numpy implementations of the hot convolution/pooling kernels.

Used when the compiled ``_ckernels`` extension is unavailable (or disabled via
``GOALIENET_PURE_PYTHON=1``). Accumulation order matches the compiled kernels
so both backends produce bit-identical results.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def im2col(x, k, stride, pad):
    """Unfold channels-last ``x[N,H,W,C]`` into rows ``[N*Ho*Wo, k*k*C]``.

    Row order is (n, oy, ox); column order is (ky, kx, c).
    """
    n, h, w, c = x.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    x = np.ascontiguousarray(x)
    sn, sh, sw, sc = x.strides
    view = as_strided(
        x,
        shape=(n, ho, wo, k, k, c),
        strides=(sn, sh * stride, sw * stride, sh, sw, sc),
        writeable=False,
    )
    return view.reshape(n * ho * wo, k * k * c)


def col2im(cols, shape, k, stride, pad):
    """Adjoint of :func:`im2col`: scatter-add rows back into ``shape`` (NHWC).

    Contributions are summed in (ky, kx) order.
    """
    n, h, w, c = shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    hp, wp = h + 2 * pad, w + 2 * pad
    out = np.zeros((n, hp, wp, c), dtype=cols.dtype)
    cols = cols.reshape(n, ho, wo, k, k, c)
    for i in range(k):
        for j in range(k):
            out[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += cols[:, :, :, i, j, :]
    if pad:
        out = out[:, pad:pad + h, pad:pad + w, :]
    return np.ascontiguousarray(out)


def maxpool2x2(x):
    """2x2/stride-2 max pool. Returns (out, argmax) with argmax in 0..3,
    row-major within the window, first maximum wins."""
    n, c, h, w = x.shape
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(n, c, h // 2, w // 2, 4)
    arg = np.argmax(win, axis=-1).astype(np.int8)
    out = np.take_along_axis(win, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg


def maxpool2x2_backward(dout, arg):
    n, c, ho, wo = dout.shape
    dx = np.zeros((n, c, ho, 2, wo, 2), dtype=dout.dtype)
    for q in range(4):
        di, dj = divmod(q, 2)
        dx[:, :, :, di, :, dj] = np.where(arg == q, dout, 0)
    return dx.reshape(n, c, 2 * ho, 2 * wo)


def upsample2x(x):
    return np.ascontiguousarray(np.repeat(np.repeat(x, 2, axis=2), 2, axis=3))


def upsample2x_backward(dout):
    return np.ascontiguousarray(
        ((dout[:, :, 0::2, 0::2] + dout[:, :, 0::2, 1::2]) + dout[:, :, 1::2, 0::2])
        + dout[:, :, 1::2, 1::2]
    )
