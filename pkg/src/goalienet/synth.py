"""Procedural goalie scenes with exact keypoint ground truth.

Each frame is rendered back to front from flat-shaded primitives: rink,
net (quadrilateral, corners 26-29), legpads (rectangles, corners 7-14),
torso, arms, blocker (rectangle, corners 15-18), mit, mask, and the stick
polyline 22-23-24. All randomness for frame ``i`` comes from a Philox
stream keyed by ``(seed, i)``, so frames can be produced in any order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from goalienet.annotations import (
    ABSENT,
    Dataset,
    DegenerateAnnotationError,
    FrameAnnotation,
    Keypoint2D,
    extended_bbox,
    write_dataset,
)
from goalienet.ppm import write_ppm
from goalienet.schema import NUM_KEYPOINTS
from goalienet.tensor import Tensor
from goalienet.threads import thread_count

MANIFEST_NAME = "manifest.txt"
ANNOTATION_NAME = "annotations.txt"

# Absence probabilities, loosely following the real data: the net is almost
# always annotated, the stick least often.
DEFAULT_OCCLUSION = (
    0.06, 0.08, 0.10, 0.12, 0.10, 0.05,   # shoulders, elbows, hips
    0.10, 0.10, 0.14, 0.14,               # right legpad
    0.10, 0.10, 0.14, 0.14,               # left legpad
    0.12, 0.12, 0.16, 0.16,               # blocker
    0.04, 0.08, 0.06,                     # torso centre, mask
    0.40, 0.25, 0.30,                     # stick
    0.10,                                 # mit
    0.02, 0.02, 0.03, 0.03,               # net
)


@dataclass(frozen=True)
class SceneParams:
    seed: int = 0
    image_size: tuple[int, int] = (320, 240)  # (W, H)
    occlusion_rates: tuple[float, ...] = DEFAULT_OCCLUSION
    color_jitter: float = 18.0  # max per-channel offset, 8-bit units
    noise_std: tuple[float, float] = (0.0, 5.0)  # per-frame pixel noise range
    scale_range: tuple[float, float] = (0.9, 1.1)

    def __post_init__(self):
        rates = tuple(float(r) for r in self.occlusion_rates)
        if len(rates) != NUM_KEYPOINTS or any(not 0.0 <= r <= 1.0 for r in rates):
            raise ValueError(f"occlusion_rates needs {NUM_KEYPOINTS} values in [0, 1]")
        if sum(r < 1.0 for r in rates) < 2:
            raise ValueError("at least two keypoints must have occlusion rate < 1")
        object.__setattr__(self, "occlusion_rates", rates)
        w, h = self.image_size
        if w < 200 or h < 160:
            raise ValueError("image_size must be at least 200x160")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a u64")


def frame_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one frame."""
    return np.random.Generator(np.random.Philox(key=(int(index) << 64) | int(seed)))


# ---------------------------------------------------------------- rasterising

class _Canvas:
    def __init__(self, w, h, colour):
        self.w, self.h = w, h
        self.img = np.empty((h, w, 3), dtype=np.float32)
        self.img[:] = colour

    def _window(self, pts, pad):
        pts = np.asarray(pts, dtype=np.float64)
        x0 = max(int(math.floor(pts[:, 0].min() - pad)), 0)
        x1 = min(int(math.ceil(pts[:, 0].max() + pad)) + 1, self.w)
        y0 = max(int(math.floor(pts[:, 1].min() - pad)), 0)
        y1 = min(int(math.ceil(pts[:, 1].max() + pad)) + 1, self.h)
        if x0 >= x1 or y0 >= y1:
            return None
        xs = np.arange(x0, x1) + 0.5
        ys = np.arange(y0, y1)[:, None] + 0.5
        return (slice(y0, y1), slice(x0, x1)), xs[None, :], ys

    def _paint(self, win, inside, colour):
        sl = win[0]
        region = self.img[sl]
        region[inside] = colour

    def polygon(self, pts, colour):
        """Convex polygon, vertices in either winding."""
        win = self._window(pts, 1)
        if win is None:
            return
        _, xs, ys = win
        pts = np.asarray(pts, dtype=np.float64)
        area = 0.0
        for i in range(len(pts)):
            (ax, ay), (bx, by) = pts[i], pts[(i + 1) % len(pts)]
            area += ax * by - bx * ay
        sign = 1.0 if area > 0 else -1.0
        inside = np.ones((ys.shape[0], xs.shape[1]), dtype=bool)
        for i in range(len(pts)):
            (ax, ay), (bx, by) = pts[i], pts[(i + 1) % len(pts)]
            inside &= sign * ((bx - ax) * (ys - ay) - (by - ay) * (xs - ax)) >= 0
        self._paint(win, inside, colour)

    def ellipse(self, cx, cy, rx, ry, colour):
        win = self._window([(cx - rx, cy - ry), (cx + rx, cy + ry)], 1)
        if win is None:
            return
        _, xs, ys = win
        inside = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
        self._paint(win, inside, colour)

    def capsule(self, a, b, radius, colour):
        win = self._window([a, b], radius + 1)
        if win is None:
            return
        _, xs, ys = win
        ax, ay = a
        dx, dy = b[0] - ax, b[1] - ay
        L2 = dx * dx + dy * dy
        t = np.zeros((ys.shape[0], xs.shape[1])) if L2 == 0 else np.clip(((xs - ax) * dx + (ys - ay) * dy) / L2, 0, 1)
        d2 = (xs - ax - t * dx) ** 2 + (ys - ay - t * dy) ** 2
        self._paint(win, d2 <= radius * radius, colour)


def _rect(cx, cy, w, h, angle):
    """Corners (top-left, top-right, bottom-right, bottom-left) of a rotated rectangle."""
    c, s = math.cos(angle), math.sin(angle)
    out = []
    for ox, oy in ((-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)):
        out.append((cx + ox * c - oy * s, cy + ox * s + oy * c))
    return out


def _jit(rng, base, amount):
    return np.clip(np.asarray(base, dtype=np.float32) + rng.uniform(-amount, amount, 3), 0, 255)


def _scene(params: SceneParams, rng: np.random.Generator):
    """Render one scene; returns (uint8 image [H, W, 3], keypoints [29, 2])."""
    W, H = params.image_size
    sx, sy = W / 320.0, H / 240.0  # layout is authored for 320x240
    j = params.color_jitter
    kp = np.zeros((NUM_KEYPOINTS, 2))

    def put(i, p):
        kp[i - 1] = p

    cv = _Canvas(W, H, _jit(rng, (222, 228, 236), j))
    # net
    nx = W / 2 + rng.uniform(-25, 25) * sx
    nb = rng.uniform(160, 185) * sy
    nw = rng.uniform(150, 185) * sx
    nh = rng.uniform(85, 105) * sy
    persp = rng.uniform(0, 10) * sx

    def jj():
        return rng.uniform(-5, 5, 2) * (sx, sy)

    tl = np.array([nx - nw / 2 + persp, nb - nh]) + jj()
    tr = np.array([nx + nw / 2 - persp, nb - nh]) + jj()
    bl = np.array([nx - nw / 2, nb]) + jj()
    br = np.array([nx + nw / 2, nb]) + jj()
    for i, p in zip((26, 27, 28, 29), (tl, tr, bl, br)):
        put(i, p)
    goal_line = _jit(rng, (200, 40, 40), j)
    cv.capsule((0, nb), (W, nb), 1.2 * sy, goal_line)
    cv.polygon([tl, tr, br, bl], _jit(rng, (190, 192, 200), j))
    mesh = _jit(rng, (150, 152, 162), j)
    for t in np.linspace(0.1, 0.9, 7):
        cv.capsule(tl + t * (tr - tl), bl + t * (br - bl), 0.6, mesh)
    post = _jit(rng, (205, 30, 35), j)
    for a, b in ((tl, tr), (tl, bl), (tr, br)):
        cv.capsule(a, b, 2.4 * sx, post)

    # goalie
    s = rng.uniform(*params.scale_range) * sy
    tx = nx + rng.uniform(-20, 20) * sx
    pad_bottom = nb + rng.uniform(10, 25) * sy
    hip_y = pad_bottom - 56 * s
    th, tw = 42 * s, 40 * s
    ty = hip_y - th / 2
    jersey = _jit(rng, [(30, 60, 150), (20, 110, 60), (140, 30, 40), (40, 40, 40)][rng.integers(4)], j)
    gear = _jit(rng, (245, 245, 240), j)
    trim = _jit(rng, (30, 60, 150), j) if rng.random() < 0.5 else _jit(rng, (160, 40, 40), j)
    cage = _jit(rng, (60, 60, 60), j)

    def outline(pts, width):
        # white gear on white ice needs a visible edge to be localisable
        for q in range(len(pts)):
            cv.capsule(pts[q], pts[(q + 1) % len(pts)], width, trim)

    put(19, (tx, ty))
    put(1, (tx + tw / 2 - 2 * s, ty - th / 2 + 2 * s))
    put(2, (tx - tw / 2 + 2 * s, ty - th / 2 + 2 * s))
    put(5, (tx + 0.375 * tw, hip_y))
    put(6, (tx - 0.375 * tw, hip_y))

    # legpads: right pad on image left, left pad on image right
    spread = rng.uniform(-3, 4) * s
    for first, side in ((7, -1), (11, 1)):
        ang = rng.uniform(-0.12, 0.12)
        pw, ph = 20 * s, 54 * s
        cx = tx + side * (20 * s + spread)
        corners = _rect(cx, pad_bottom - ph / 2, pw, ph, ang)
        cv.polygon(corners, gear)
        outline(corners, 1.2 * s)
        for t in (0.3, 0.6):
            a = np.array(corners[0]) + t * (np.array(corners[3]) - np.array(corners[0]))
            b = np.array(corners[1]) + t * (np.array(corners[2]) - np.array(corners[1]))
            cv.capsule(a, b, 1.6 * s, trim)
        for q in range(4):
            put(first + q, corners[q])

    # torso
    cv.polygon([
        (kp[1][0] - 3 * s, kp[1][1] - 3 * s), (kp[0][0] + 3 * s, kp[0][1] - 3 * s),
        (kp[4][0] + 2 * s, kp[4][1] + 2 * s), (kp[5][0] - 2 * s, kp[5][1] + 2 * s),
    ], jersey)
    cv.ellipse(tx, ty, 7 * s, 7 * s, trim)  # crest marks the torso centre

    # arms
    e_l = kp[0] + (rng.uniform(8, 16) * s, rng.uniform(14, 20) * s)
    e_r = kp[1] + (-rng.uniform(8, 16) * s, rng.uniform(14, 20) * s)
    put(3, e_l)
    put(4, e_r)
    hand_r = e_r + (rng.uniform(-4, 4) * s, rng.uniform(10, 16) * s)
    hand_l = e_l + (rng.uniform(-2, 6) * s, rng.uniform(8, 14) * s)
    for a, b in ((kp[0], e_l), (kp[1], e_r), (e_l, hand_l), (e_r, hand_r)):
        cv.capsule(a, b, 5 * s, jersey)

    # blocker (goalie's right hand, image left)
    blocker = _rect(hand_r[0] - 6 * s, hand_r[1] + 2 * s, 14 * s, 22 * s, rng.uniform(-0.25, 0.25))
    cv.polygon(blocker, gear)
    outline(blocker, 1.0 * s)
    cv.capsule(blocker[0], blocker[1], 1.5 * s, trim)
    for q in range(4):
        put(15 + q, blocker[q])

    # mit (catching glove, image right)
    mcx, mcy, mrx, mry = hand_l[0] + 6 * s, hand_l[1] + 2 * s, 11 * s, 12 * s
    cv.ellipse(mcx, mcy, mrx, mry, trim)
    cv.ellipse(mcx, mcy + 2 * s, 0.6 * mrx, 0.6 * mry, gear)
    put(25, (mcx, mcy - mry))

    # mask
    mx, mry2 = tx + rng.uniform(-3, 3) * s, 11 * s
    my = ty - th / 2 - mry2
    cv.ellipse(mx, my, 9 * s + 1.5 * s, mry2 + 1.5 * s, cage)
    cv.ellipse(mx, my, 9 * s, mry2, gear)
    cv.capsule((mx - 5 * s, my + 2 * s), (mx + 5 * s, my + 2 * s), 1.0 * s, cage)
    cv.capsule((mx - 4 * s, my + 6 * s), (mx + 4 * s, my + 6 * s), 1.0 * s, cage)
    put(20, (mx, my + mry2))
    put(21, (mx, my - mry2))

    # stick, held in the blocker hand
    upper = hand_r + (2 * s, 6 * s)
    heel = np.array([tx - rng.uniform(0, 12) * s, pad_bottom + rng.uniform(3, 8) * s])
    tip = heel + (rng.uniform(16, 24) * s, rng.uniform(-2, 2) * s)
    shaft = _jit(rng, (70, 45, 25), j)
    cv.capsule(upper, heel, 1.8 * s, shaft)
    cv.capsule(heel, tip, 2.2 * s, _jit(rng, (25, 25, 25), j))
    put(22, upper)
    put(23, heel)
    put(24, tip)

    img = cv.img * rng.uniform(0.92, 1.08)
    sigma = rng.uniform(*params.noise_std)
    if sigma > 0:
        img = img + rng.standard_normal(img.shape).astype(np.float32) * sigma
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return img, kp


def render_frame(params: SceneParams, index: int) -> tuple[np.ndarray, FrameAnnotation]:
    """uint8 image ``[H, W, 3]`` and annotation for frame ``index``."""
    rng = frame_rng(params.seed, index)
    img, kp = _scene(params, rng)
    W, H = params.image_size
    if not (np.all(kp[:, 0] > 0) and np.all(kp[:, 0] < W) and np.all(kp[:, 1] > 0) and np.all(kp[:, 1] < H)):
        raise RuntimeError(f"frame {index}: keypoint left the image; scene layout is inconsistent")
    rates = np.asarray(params.occlusion_rates)
    frame_id = f"{index:06d}"
    while True:
        present = rng.random(NUM_KEYPOINTS) >= rates
        kps = tuple(Keypoint2D(float(x), float(y), True) if p else ABSENT for (x, y), p in zip(kp, present))
        if present.sum() < 2:
            continue
        frame = FrameAnnotation(frame_id, f"images/{frame_id}.ppm", W, H, kps)
        try:
            extended_bbox(frame)
        except DegenerateAnnotationError:
            continue
        return img, frame


def generate_frame(params: SceneParams, index: int) -> tuple[Tensor, FrameAnnotation]:
    """Image as a ``[3, H, W]`` tensor in [0, 1], plus its annotation."""
    img, frame = render_frame(params, index)
    return Tensor(img.transpose(2, 0, 1).astype(np.float32) / 255.0), frame


def generate_dataset(params: SceneParams, n_frames: int, out_dir, start_index: int = 0) -> Dataset:
    """Write ``images/*.ppm``, ``annotations.txt`` and ``manifest.txt`` under ``out_dir``."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)

    def one(i):
        img, frame = render_frame(params, i)
        write_ppm(out / frame.image_path, img)
        return frame

    indices = range(start_index, start_index + n_frames)
    with ThreadPoolExecutor(max_workers=thread_count(default=os.cpu_count() or 1)) as pool:
        frames = list(pool.map(one, indices))
    write_dataset(out / ANNOTATION_NAME, frames)
    (out / MANIFEST_NAME).write_text(f"generated seed={params.seed} n={n_frames}\n", encoding="ascii")
    return Dataset(frames, out)
