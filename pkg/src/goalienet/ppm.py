"""Binary PPM (P6, 8-bit) image I/O."""

from __future__ import annotations

from pathlib import Path

import numpy as np


class ImageFormatError(ValueError):
    pass


def write_ppm(path, image: np.ndarray) -> None:
    """Write ``image[H, W, 3]`` (uint8) as P6."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ImageFormatError(f"expected uint8 [H, W, 3], got {img.dtype} {img.shape}")
    h, w, _ = img.shape
    with open(path, "wb") as fp:
        fp.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fp.write(np.ascontiguousarray(img).tobytes())


def _tokens(data: bytes, count: int):
    """First ``count`` whitespace-separated header tokens (``#`` comments skipped)
    and the offset just past the single whitespace byte that follows the last."""
    toks, pos = [], 0
    while len(toks) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PPM header")
        toks.append(data[start:pos])
    return toks, pos + 1


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    toks, off = _tokens(data, 4)
    if toks[0] != b"P6":
        raise ImageFormatError(f"{path}: not a binary PPM (magic {toks[0]!r})")
    try:
        w, h, maxval = (int(t) for t in toks[1:])
    except ValueError:
        raise ImageFormatError(f"{path}: bad PPM header") from None
    if maxval != 255:
        raise ImageFormatError(f"{path}: only 8-bit PPM is supported (maxval {maxval})")
    need = w * h * 3
    if len(data) - off < need:
        raise ImageFormatError(f"{path}: truncated pixel data")
    return np.frombuffer(data, dtype=np.uint8, count=need, offset=off).reshape(h, w, 3).copy()
