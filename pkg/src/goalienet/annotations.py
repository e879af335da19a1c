"""Annotated frames, the line-oriented annotation format, and crop geometry.

Annotation file layout::

    goalienet-annotations v1
    frame <frame_id> <image_path> <width> <height>
    kp <id> <x> <y>
    ...

Keypoint ids omitted from a frame are absent. Blank lines and ``#`` lines
are ignored. Image paths are resolved relative to the annotation file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from goalienet.schema import NUM_KEYPOINTS, SchemaError, check_id

HEADER = "goalienet-annotations v1"
DEFAULT_PAD_FRAC = 0.10


class ParseError(ValueError):
    """Malformed annotation file content."""


class DegenerateAnnotationError(ValueError):
    """Too few / coincident keypoints, or a zero-area box."""


@dataclass(frozen=True)
class Keypoint2D:
    x: float = 0.0
    y: float = 0.0
    present: bool = False


ABSENT = Keypoint2D()


@dataclass(frozen=True)
class FrameAnnotation:
    frame_id: str
    image_path: str
    width: int
    height: int
    keypoints: tuple[Keypoint2D, ...]

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"frame {self.frame_id}: image size must be positive")
        if len(self.keypoints) != NUM_KEYPOINTS:
            raise ValueError(f"frame {self.frame_id}: expected {NUM_KEYPOINTS} keypoints, "
                             f"got {len(self.keypoints)}")
        if not any(k.present for k in self.keypoints):
            raise DegenerateAnnotationError(f"frame {self.frame_id}: no keypoint present")
        for i, k in enumerate(self.keypoints, start=1):
            if k.present and not (0 <= k.x < self.width and 0 <= k.y < self.height):
                raise ValueError(f"frame {self.frame_id}: keypoint {i} at ({k.x}, {k.y}) "
                                 f"outside {self.width}x{self.height} image")

    def keypoint(self, kp_id: int) -> Keypoint2D:
        return self.keypoints[check_id(kp_id) - 1]

    def present_mask(self) -> np.ndarray:
        return np.array([k.present for k in self.keypoints], dtype=bool)

    def coords(self) -> np.ndarray:
        """[29, 2] array of (x, y); absent rows are NaN."""
        return np.array([(k.x, k.y) if k.present else (np.nan, np.nan) for k in self.keypoints])


@dataclass
class Dataset:
    frames: list[FrameAnnotation]
    root: Path = field(default_factory=Path)

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    def image_file(self, frame: FrameAnnotation) -> Path:
        p = Path(frame.image_path)
        return p if p.is_absolute() else self.root / p


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise DegenerateAnnotationError(f"degenerate box {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min


@dataclass(frozen=True)
class CropTransform:
    source_bbox: BBox
    target_width: int
    target_height: int

    @property
    def scale_x(self) -> float:
        return self.target_width / self.source_bbox.width

    @property
    def scale_y(self) -> float:
        return self.target_height / self.source_bbox.height

    def forward(self, x, y):
        """Image pixels -> crop pixels."""
        b = self.source_bbox
        return (np.subtract(x, b.x_min) * self.scale_x, np.subtract(y, b.y_min) * self.scale_y)

    def inverse(self, cx, cy):
        """Crop pixels -> image pixels."""
        b = self.source_bbox
        return (np.divide(cx, self.scale_x) + b.x_min, np.divide(cy, self.scale_y) + b.y_min)


def _parse_float(tok: str, frame_id: str, what: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"frame {frame_id}: non-numeric {what} {tok!r}") from None
    if not math.isfinite(v):
        raise ParseError(f"frame {frame_id}: non-finite {what} {tok!r}")
    return v


def _parse_int(tok: str, frame_id: str, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"frame {frame_id}: non-integer {what} {tok!r}") from None


def parse_annotations(text: str, root: Path | str = ".") -> Dataset:
    lines = text.splitlines()
    body = [(n, ln.strip()) for n, ln in enumerate(lines, start=1)]
    body = [(n, ln) for n, ln in body if ln and not ln.startswith("#")]
    if not body or body[0][1] != HEADER:
        raise ParseError(f"missing header line {HEADER!r}")

    frames: list[FrameAnnotation] = []
    current = None  # (frame_id, image_path, w, h, {id: Keypoint2D})

    def finish():
        if current is None:
            return
        fid, img, w, h, kps = current
        try:
            frames.append(FrameAnnotation(fid, img, w, h, tuple(kps.get(i, ABSENT)
                                                                  for i in range(1, NUM_KEYPOINTS + 1))))
        except ValueError as exc:
            raise ParseError(str(exc)) from None

    for lineno, ln in body[1:]:
        tok = ln.split()
        if tok[0] == "frame":
            finish()
            if len(tok) != 5:
                raise ParseError(f"line {lineno}: expected 'frame <id> <path> <width> <height>'")
            fid = tok[1]
            w, h = _parse_int(tok[3], fid, "width"), _parse_int(tok[4], fid, "height")
            if w <= 0 or h <= 0:
                raise ParseError(f"frame {fid}: image size must be positive")
            current = (fid, tok[2], w, h, {})
        elif tok[0] == "kp":
            if current is None:
                raise ParseError(f"line {lineno}: keypoint before any frame")
            fid, kps = current[0], current[4]
            if len(tok) != 4:
                raise ParseError(f"frame {fid}: expected 'kp <id> <x> <y>' at line {lineno}")
            kp_id = _parse_int(tok[1], fid, "keypoint id")
            try:
                check_id(kp_id)
            except SchemaError as exc:
                raise ParseError(f"frame {fid}: {exc}") from None
            if kp_id in kps:
                raise ParseError(f"frame {fid}: keypoint {kp_id} listed twice")
            kps[kp_id] = Keypoint2D(_parse_float(tok[2], fid, "x"), _parse_float(tok[3], fid, "y"), True)
        else:
            raise ParseError(f"line {lineno}: unknown record {tok[0]!r}")
    finish()
    return Dataset(frames, Path(root))


def parse_dataset(path) -> Dataset:
    """Read an annotation file. A directory path means ``<dir>/annotations.txt``."""
    path = Path(path)
    if path.is_dir():
        path = path / "annotations.txt"
    text = path.read_text(encoding="utf-8")
    return parse_annotations(text, root=path.parent)


def format_annotations(frames: Iterable[FrameAnnotation]) -> str:
    out = [HEADER]
    for f in frames:
        if any(c.isspace() for c in f.frame_id + f.image_path):
            raise ValueError(f"frame {f.frame_id}: ids and paths must not contain whitespace")
        out.append(f"frame {f.frame_id} {f.image_path} {f.width} {f.height}")
        for i, k in enumerate(f.keypoints, start=1):
            if k.present:
                # repr() is the shortest string that round-trips the float64 exactly
                out.append(f"kp {i} {float(k.x)!r} {float(k.y)!r}")
    return "\n".join(out) + "\n"


def write_dataset(path, frames: Iterable[FrameAnnotation]) -> None:
    Path(path).write_text(format_annotations(frames), encoding="utf-8")


def extended_bbox(frame: FrameAnnotation, pad_frac: float = DEFAULT_PAD_FRAC) -> BBox:
    """Box around every present keypoint (goalie, stick and net together),
    grown by ``pad_frac`` of its size on each side and clipped to the image."""
    if pad_frac < 0:
        raise ValueError("pad_frac must be >= 0")
    pts = [(k.x, k.y) for k in frame.keypoints if k.present]
    if len(pts) < 2:
        raise DegenerateAnnotationError(f"frame {frame.frame_id}: fewer than 2 present keypoints")
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    if not (x0 < x1 and y0 < y1):
        raise DegenerateAnnotationError(f"frame {frame.frame_id}: keypoints span a zero-area box")
    dx, dy = pad_frac * (x1 - x0), pad_frac * (y1 - y0)
    return BBox(max(0.0, x0 - dx), max(0.0, y0 - dy),
                min(float(frame.width), x1 + dx), min(float(frame.height), y1 + dy))


def presence_proportions(dataset: Sequence[FrameAnnotation] | Dataset) -> np.ndarray:
    frames = list(dataset)
    if not frames:
        raise ValueError("presence_proportions of an empty dataset")
    counts = np.sum([f.present_mask() for f in frames], axis=0)
    return counts / len(frames)


def bbox_diagonal(b: BBox) -> float:
    w, h = b.x_max - b.x_min, b.y_max - b.y_min
    if w <= 0 or h <= 0:
        raise DegenerateAnnotationError(f"degenerate box {b}")
    return math.hypot(w, h)


def crop_geometry(frame: FrameAnnotation, bbox: BBox, target_w: int, target_h: int) -> CropTransform:
    if target_w <= 0 or target_h <= 0:
        raise ValueError("crop target size must be positive")
    if bbox.x_max - bbox.x_min <= 0 or bbox.y_max - bbox.y_min <= 0:
        raise DegenerateAnnotationError(f"degenerate box {bbox}")
    if bbox.x_min < 0 or bbox.y_min < 0 or bbox.x_max > frame.width or bbox.y_max > frame.height:
        raise ValueError(f"frame {frame.frame_id}: box {bbox} leaves the "
                         f"{frame.width}x{frame.height} image")
    return CropTransform(bbox, int(target_w), int(target_h))


def crop_image(image: np.ndarray, transform: CropTransform) -> np.ndarray:
    """Bilinearly resample ``image[C,H,W]`` into the crop ``[C,th,tw]`` (float32).

    Crop pixel centres (i + 0.5) map through the inverse transform; image
    pixel p has its centre at p + 0.5. Samples outside the image clamp to
    the edge.
    """
    c, h, w = image.shape
    cx = np.arange(transform.target_width) + 0.5
    cy = np.arange(transform.target_height) + 0.5
    ix, iy = transform.inverse(cx, cy)
    ix, iy = np.clip(ix - 0.5, 0, w - 1), np.clip(iy - 0.5, 0, h - 1)
    x0 = np.minimum(np.floor(ix).astype(np.intp), w - 2 if w > 1 else 0)
    y0 = np.minimum(np.floor(iy).astype(np.intp), h - 2 if h > 1 else 0)
    x1, y1 = np.minimum(x0 + 1, w - 1), np.minimum(y0 + 1, h - 1)
    fx = (ix - x0).astype(np.float32)[None, None, :]
    fy = (iy - y0).astype(np.float32)[None, :, None]
    img = image.astype(np.float32, copy=False)
    top = img[:, y0][:, :, x0] * (1 - fx) + img[:, y0][:, :, x1] * fx
    bot = img[:, y1][:, :, x0] * (1 - fx) + img[:, y1][:, :, x1] * fx
    return np.ascontiguousarray(top * (1 - fy) + bot * fy, dtype=np.float32)

