"""Gaussian heatmap targets and quarter-offset decoding.

Coordinates: heatmap cell ``c`` covers crop pixels ``[c*stride, (c+1)*stride)``
and sits at continuous position ``c``; a crop coordinate ``p`` maps to
heatmap coordinate ``p / stride - 0.5``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from goalienet.annotations import CropTransform, FrameAnnotation, Keypoint2D

DEFAULT_SIGMA = 2.0
DEFAULT_STRIDE = 4
QUARTER = 0.25


@dataclass(frozen=True)
class Heatmap:
    values: np.ndarray  # [height, width], non-negative
    stride: int = DEFAULT_STRIDE

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 2:
            raise ValueError(f"heatmap must be 2-D with both sides >= 2, got {v.shape}")
        if np.any(v < 0):
            raise ValueError("heatmap values must be non-negative")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def heatmap_size(transform: CropTransform, stride: int) -> tuple[int, int]:
    return transform.target_width // stride, transform.target_height // stride


def _check(stride, sigma):
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")


def image_to_heatmap(x, y, transform: CropTransform, stride: int):
    cx, cy = transform.forward(x, y)
    return np.divide(cx, stride) - 0.5, np.divide(cy, stride) - 0.5


def gaussian(u, v, width: int, height: int, sigma: float) -> np.ndarray:
    """``exp(-((cx-u)^2 + (cy-v)^2) / (2 sigma^2))`` over cell indices, [height, width]."""
    cx = np.arange(width, dtype=np.float64)[None, :]
    cy = np.arange(height, dtype=np.float64)[:, None]
    return np.exp(-((cx - u) ** 2 + (cy - v) ** 2) / (2.0 * sigma * sigma))


def encode(kp: Keypoint2D, transform: CropTransform, stride: int = DEFAULT_STRIDE,
           sigma: float = DEFAULT_SIGMA) -> Heatmap:
    _check(stride, sigma)
    w, h = heatmap_size(transform, stride)
    if not kp.present:
        return Heatmap(np.zeros((h, w)), stride)
    u, v = image_to_heatmap(kp.x, kp.y, transform, stride)
    return Heatmap(gaussian(u, v, w, h, sigma), stride)


def encode_frame(frame: FrameAnnotation, transform: CropTransform, stride: int = DEFAULT_STRIDE,
                 sigma: float = DEFAULT_SIGMA, dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    """Targets ``[29, h, w]`` and presence mask ``[29]`` for one frame."""
    _check(stride, sigma)
    w, h = heatmap_size(transform, stride)
    mask = frame.present_mask()
    xy = np.nan_to_num(frame.coords())
    u, v = image_to_heatmap(xy[:, 0], xy[:, 1], transform, stride)
    cx = np.arange(w, dtype=np.float64)[None, None, :]
    cy = np.arange(h, dtype=np.float64)[None, :, None]
    d2 = (cx - u[:, None, None]) ** 2 + (cy - v[:, None, None]) ** 2
    maps = np.exp(-d2 / (2.0 * sigma * sigma))
    maps[~mask] = 0.0
    return maps.astype(dtype), mask.astype(dtype)


def _values(h) -> np.ndarray:
    return h.values if isinstance(h, Heatmap) else np.asarray(h)


def first_second_max(values: np.ndarray) -> tuple[tuple[int, int], tuple[int, int]]:
    """(x, y) cells of the highest and the second-highest value.

    Ties resolve in row-major scan order (smaller y, then smaller x). The
    second maximum is taken over every cell except the first.
    """
    flat = np.asarray(values, dtype=np.float64).reshape(-1)
    if flat.size < 2:
        raise ValueError("decoding needs at least 2 cells")
    w = values.shape[1]
    i1 = int(np.argmax(flat))
    rest = flat.copy()
    rest[i1] = -np.inf
    i2 = int(np.argmax(rest))
    return (i1 % w, i1 // w), (i2 % w, i2 // w)


def _local_second(values: np.ndarray, p1):
    v = np.asarray(values, dtype=np.float64)
    padded = np.pad(v, 1, constant_values=-np.inf)
    h, w = v.shape
    peak = np.ones_like(v, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy or dx:
                peak &= v >= padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
    peak[p1[1], p1[0]] = False
    if not peak.any():
        return None
    cand = np.where(peak, v, -np.inf).reshape(-1)
    i = int(np.argmax(cand))
    return i % w, i // w


def decode(h, second: str = "global") -> tuple[float, float]:
    """Heatmap coordinates 25% of the way from the first toward the second maximum.

    ``second="local"`` uses the highest other local maximum instead of the
    global runner-up (falls back to the global rule when there is none).
    """
    values = _values(h)
    p1, p2 = first_second_max(values)
    if second == "local":
        p2 = _local_second(values, p1) or p2
    elif second != "global":
        raise ValueError(f"unknown second-maximum rule {second!r}")
    return (p1[0] + QUARTER * (p2[0] - p1[0]), p1[1] + QUARTER * (p2[1] - p1[1]))


def decode_batch(maps: np.ndarray) -> np.ndarray:
    """Vectorised global-rule :func:`decode` over ``[..., h, w]`` -> ``[..., 2]``."""
    maps = np.asarray(maps)
    lead, (h, w) = maps.shape[:-2], maps.shape[-2:]
    flat = maps.reshape(-1, h * w).astype(np.float64)
    i1 = np.argmax(flat, axis=1)
    rows = np.arange(flat.shape[0])
    flat[rows, i1] = -np.inf
    i2 = np.argmax(flat, axis=1)
    p1 = np.stack([i1 % w, i1 // w], axis=1).astype(np.float64)
    p2 = np.stack([i2 % w, i2 // w], axis=1).astype(np.float64)
    return (p1 + QUARTER * (p2 - p1)).reshape(*lead, 2)


def to_image_coords(hm_point, transform: CropTransform, stride: int = DEFAULT_STRIDE):
    """Heatmap coordinates -> image pixels."""
    hx, hy = np.asarray(hm_point, dtype=np.float64)[..., 0], np.asarray(hm_point, dtype=np.float64)[..., 1]
    cx, cy = (hx + 0.5) * stride, (hy + 0.5) * stride
    ix, iy = transform.inverse(cx, cy)
    if np.ndim(ix) == 0:
        return float(ix), float(iy)
    return np.stack([ix, iy], axis=-1)

