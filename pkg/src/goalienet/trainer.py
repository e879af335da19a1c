"""Training loop, checkpoints, and end-to-end evaluation."""

from __future__ import annotations

import io
import logging
import math
import struct
from collections import OrderedDict
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from goalienet import codec
from goalienet.annotations import (
    DEFAULT_PAD_FRAC,
    CropTransform,
    Dataset,
    FrameAnnotation,
    bbox_diagonal,
    crop_geometry,
    crop_image,
    extended_bbox,
)
from goalienet.metrics import AccuracyReport, KeypointResult, accuracy_report
from goalienet.model import ModelConfig, build, build_shapes, forward, loss, state_arrays, state_from_arrays
from goalienet.ppm import ImageFormatError, read_ppm
from goalienet.tensor import Tape, Tensor, backward
from goalienet.tensor.serialize import CorruptDataError, read_tensor, read_u32, write_tensor, write_u32

log = logging.getLogger(__name__)

MAGIC = b"GNCK"
FORMAT_VERSION = 1
OPTIMIZERS = ("SGD", "ADAM")


class TrainingError(RuntimeError):
    pass


class CorruptCheckpointError(CorruptDataError):
    pass


class ConfigFileError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    batch_size: int = 8
    epochs: int = 40
    optimizer: str = "ADAM"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    sigma: float = codec.DEFAULT_SIGMA
    stride: int = codec.DEFAULT_STRIDE
    pad_frac: float = DEFAULT_PAD_FRAC
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        object.__setattr__(self, "optimizer", str(self.optimizer).upper())
        if self.optimizer not in OPTIMIZERS:
            raise ConfigFileError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if not self.learning_rate >= 0:
            raise ConfigFileError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigFileError("batch_size and epochs must be >= 1")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ConfigFileError("adam betas must lie in (0, 1)")
        if not self.adam_eps > 0:
            raise ConfigFileError("adam_eps must be > 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigFileError("seed must be a u64")
        if self.sigma <= 0 or self.stride < 1 or self.pad_frac < 0:
            raise ConfigFileError("sigma > 0, stride >= 1 and pad_frac >= 0 are required")
        if self.stride * self.model.heatmap_size[0] != self.model.input_size[0] or \
                self.stride * self.model.heatmap_size[1] != self.model.input_size[1]:
            raise ConfigFileError(f"stride {self.stride} does not match the network's heatmap "
                                  f"downsampling of {self.model.input_size[0] // self.model.heatmap_size[0]}")


# ------------------------------------------------------------------ config text

def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


def config_to_text(cfg: TrainConfig) -> str:
    lines = []
    for f in fields(TrainConfig):
        if f.name == "model":
            continue
        lines.append(f"{f.name} = {_fmt_value(getattr(cfg, f.name))}")
    for f in fields(ModelConfig):
        lines.append(f"model.{f.name} = {_fmt_value(getattr(cfg.model, f.name))}")
    return "\n".join(lines) + "\n"


def _convert(name: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError:
        raise ConfigFileError(f"{name}: cannot parse {raw!r}") from None


def config_from_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Parse ``key = value`` lines; ``#`` comments allowed, unknown keys rejected."""
    base = base or TrainConfig()
    top = {f.name: getattr(base, f.name) for f in fields(TrainConfig) if f.name != "model"}
    mdl = base.model.to_dict()
    seen = set()
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(f"line {n}: expected 'key = value'")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key in seen:
            raise ConfigFileError(f"line {n}: duplicate key {key!r}")
        seen.add(key)
        if key.startswith("model."):
            sub = key[len("model."):]
            if sub not in mdl:
                raise ConfigFileError(f"line {n}: unknown key {key!r}")
            mdl[sub] = _convert(key, raw, mdl[sub])
        elif key in top:
            top[key] = _convert(key, raw, top[key])
        else:
            raise ConfigFileError(f"line {n}: unknown key {key!r}")
    try:
        return TrainConfig(model=ModelConfig(**mdl), **top)
    except ValueError as exc:
        raise ConfigFileError(str(exc)) from None


def load_config(path) -> TrainConfig:
    return config_from_text(Path(path).read_text(encoding="utf-8"))


# ------------------------------------------------------------------ checkpoints

@dataclass
class Checkpoint:
    config: TrainConfig
    params: "OrderedDict[str, np.ndarray]"
    moments: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    step: int = 0


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    write_u32(buf, FORMAT_VERSION)
    text = config_to_text(ckpt.config).encode("utf-8")
    write_u32(buf, len(text))
    buf.write(text)
    buf.write(struct.pack("<Q", ckpt.step))
    for group in (ckpt.params, ckpt.moments):
        write_u32(buf, len(group))
        for name, arr in group.items():
            write_tensor(buf, name, arr)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    fp = io.BytesIO(data)
    try:
        if fp.read(4) != MAGIC:
            raise CorruptCheckpointError(f"{path}: bad magic (not a checkpoint)")
        version = read_u32(fp)
        if version != FORMAT_VERSION:
            raise CorruptCheckpointError(f"{path}: unsupported format version {version}")
        n = read_u32(fp)
        raw = fp.read(n)
        if len(raw) != n:
            raise CorruptCheckpointError(f"{path}: truncated config block")
        try:
            cfg = config_from_text(raw.decode("utf-8"))
        except (UnicodeDecodeError, ConfigFileError) as exc:
            raise CorruptCheckpointError(f"{path}: bad config block: {exc}") from None
        step_raw = fp.read(8)
        if len(step_raw) != 8:
            raise CorruptCheckpointError(f"{path}: truncated step counter")
        step = struct.unpack("<Q", step_raw)[0]
        groups = []
        for _ in range(2):
            count = read_u32(fp)
            group = OrderedDict()
            for _ in range(count):
                name, arr = read_tensor(fp)
                if name in group:
                    raise CorruptCheckpointError(f"{path}: duplicate tensor {name!r}")
                group[name] = arr
            groups.append(group)
    except CorruptCheckpointError:
        raise
    except CorruptDataError as exc:
        raise CorruptCheckpointError(f"{path}: {exc}") from None
    if fp.tell() != len(data):
        raise CorruptCheckpointError(f"{path}: {len(data) - fp.tell()} trailing bytes")
    expected = build_shapes(cfg.model)
    if list(groups[0]) != list(expected) or any(groups[0][k].shape != s for k, s in expected.items()):
        raise CorruptCheckpointError(f"{path}: parameters do not match the stored model config")
    return Checkpoint(cfg, groups[0], groups[1], step)


# ------------------------------------------------------------------ data

@dataclass
class PreparedFrames:
    """Crops (uint8) and crop geometry for a dataset, computed once."""

    frames: list[FrameAnnotation]
    crops: np.ndarray  # [N, 3, H, W] uint8
    transforms: list[CropTransform]

    def batch_images(self, idx) -> np.ndarray:
        return self.crops[idx].astype(np.float32) * np.float32(1.0 / 255.0)


def prepare_frames(dataset: Dataset, cfg: TrainConfig) -> PreparedFrames:
    h, w = cfg.model.input_size
    crops = np.empty((len(dataset), 3, h, w), dtype=np.uint8)
    transforms = []
    for i, frame in enumerate(dataset):
        path = dataset.image_file(frame)
        try:
            img = read_ppm(path)
        except (OSError, ImageFormatError) as exc:
            raise TrainingError(f"frame {frame.frame_id}: cannot read image {path}: {exc}") from None
        if img.shape[:2] != (frame.height, frame.width):
            raise TrainingError(f"frame {frame.frame_id}: image is {img.shape[1]}x{img.shape[0]}, "
                                f"annotation says {frame.width}x{frame.height}")
        t = crop_geometry(frame, extended_bbox(frame, cfg.pad_frac), w, h)
        crop = crop_image(img.transpose(2, 0, 1), t)
        crops[i] = np.clip(np.rint(crop), 0, 255).astype(np.uint8)
        transforms.append(t)
    return PreparedFrames(list(dataset), crops, transforms)


def batch_targets(prep: PreparedFrames, idx, cfg: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    maps, masks = zip(*(codec.encode_frame(prep.frames[i], prep.transforms[i], cfg.stride, cfg.sigma)
                        for i in idx))
    return np.stack(maps), np.stack(masks)


def epoch_permutation(seed: int, epoch: int, n: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(key=(int(epoch) << 64) | int(seed)))
    return rng.permutation(n)


# ------------------------------------------------------------------ optimisers

class Optimizer:
    def __init__(self, cfg: TrainConfig, params: "OrderedDict[str, Tensor]", moments=None, step=0):
        self.cfg = cfg
        self.params = params
        self.t = step
        self.m = OrderedDict()
        self.v = OrderedDict()
        if cfg.optimizer == "ADAM":
            moments = moments or {}
            for k, p in params.items():
                self.m[k] = np.array(moments.get(f"adam.m.{k}", np.zeros(p.shape, np.float32)), dtype=np.float32)
                self.v[k] = np.array(moments.get(f"adam.v.{k}", np.zeros(p.shape, np.float32)), dtype=np.float32)

    def step(self) -> None:
        self.t += 1
        lr = np.float32(self.cfg.learning_rate)
        if self.cfg.optimizer == "SGD":
            for p in self.params.values():
                p.data = p.data - lr * p.grad
            return
        b1, b2 = self.cfg.adam_beta1, self.cfg.adam_beta2
        c1 = np.float32(1.0 - b1 ** self.t)
        c2 = np.float32(1.0 - b2 ** self.t)
        f1, f2 = np.float32(b1), np.float32(b2)
        eps = np.float32(self.cfg.adam_eps)
        for k, p in self.params.items():
            g = p.grad
            m = self.m[k] = f1 * self.m[k] + (np.float32(1) - f1) * g
            v = self.v[k] = f2 * self.v[k] + (np.float32(1) - f2) * (g * g)
            p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)

    def moments(self) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict()
        for k in self.m:
            out[f"adam.m.{k}"] = self.m[k]
        for k in self.v:
            out[f"adam.v.{k}"] = self.v[k]
        return out


# ------------------------------------------------------------------ training

@dataclass
class LossRecord:
    epoch: int
    step: int
    loss: float


def write_loss_log(records: Sequence[LossRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        fp.write("epoch,step,loss\n")
        for r in records:
            fp.write(f"{r.epoch},{r.step},{r.loss!r}\n")


def train_step(state, cfg: TrainConfig, images: np.ndarray, targets: np.ndarray, masks: np.ndarray) -> float:
    params = list(state.values())
    with Tape() as tape:
        outs = forward(state, cfg.model, Tensor(images))
        total = loss(outs, Tensor(targets), Tensor(masks))
    backward(total, tape, params)
    return float(total.data)


def train(cfg: TrainConfig, dataset: Dataset, progress: Callable[[LossRecord], None] | None = None,
          prepared: PreparedFrames | None = None) -> tuple[Checkpoint, list[LossRecord]]:
    """Optimise a fresh network on ``dataset``; fully determined by ``cfg.seed``.

    Returns the final checkpoint and one record per epoch (mean step loss).
    """
    if len(dataset) == 0:
        raise TrainingError("training dataset is empty")
    prep = prepared or prepare_frames(dataset, cfg)
    state = build(cfg.model, cfg.seed)
    opt = Optimizer(cfg, state)
    n = len(prep.frames)
    records = []
    for epoch in range(1, cfg.epochs + 1):
        perm = epoch_permutation(cfg.seed, epoch, n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            targets, masks = batch_targets(prep, idx, cfg)
            value = train_step(state, cfg, prep.batch_images(idx), targets, masks)
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {epoch}, step {opt.t + 1} "
                                    f"(learning_rate={cfg.learning_rate}); aborting")
            opt.step()
            losses.append(value)
        rec = LossRecord(epoch, opt.t, float(np.mean(losses)))
        records.append(rec)
        log.info("epoch %d step %d loss %.6f", rec.epoch, rec.step, rec.loss)
        if progress is not None:
            progress(rec)
    ckpt = Checkpoint(cfg, OrderedDict((k, v.copy()) for k, v in state_arrays(state).items()),
                      opt.moments(), opt.t)
    return ckpt, records


# ------------------------------------------------------------------ evaluation

@dataclass
class Evaluation:
    report: AccuracyReport
    results: list[KeypointResult]
    predictions: np.ndarray  # [N, 29, 2] image pixels
    heatmaps: np.ndarray | None = None  # final-stage maps when kept


Predictor = Callable[[np.ndarray, Sequence[int]], np.ndarray]


def model_predictor(ckpt: Checkpoint) -> Predictor:
    state = state_from_arrays(ckpt.config.model, ckpt.params)

    def predict(images, idx):
        return forward(state, ckpt.config.model, Tensor(images))[-1].data

    return predict


def evaluate_predictor(predict: Predictor, dataset: Dataset, cfg: TrainConfig, batch_size: int = 8,
                       prepared: PreparedFrames | None = None, keep_heatmaps: int = 0) -> Evaluation:
    """Decode the predictor's heatmaps for every frame and score them."""
    if len(dataset) == 0:
        raise ValueError("evaluation dataset is empty")
    prep = prepared or prepare_frames(dataset, cfg)
    hh, hw = cfg.model.heatmap_size
    preds = np.zeros((len(prep.frames), 29, 2))
    kept = []
    for start in range(0, len(prep.frames), batch_size):
        idx = list(range(start, min(start + batch_size, len(prep.frames))))
        maps = np.asarray(predict(prep.batch_images(idx), idx))
        if maps.shape != (len(idx), 29, hh, hw):
            raise TrainingError(f"predictor returned {maps.shape}, expected {(len(idx), 29, hh, hw)}")
        decoded = codec.decode_batch(maps)
        for j, i in enumerate(idx):
            preds[i] = codec.to_image_coords(decoded[j], prep.transforms[i], cfg.stride)
            if len(kept) < keep_heatmaps:
                kept.append(maps[j])
    results = []
    for i, frame in enumerate(prep.frames):
        diag = bbox_diagonal(prep.transforms[i].source_bbox)
        for k, kp in enumerate(frame.keypoints):
            results.append(KeypointResult(frame.frame_id, k + 1, (float(preds[i, k, 0]), float(preds[i, k, 1])),
                                          (kp.x, kp.y), kp.present, diag))
    return Evaluation(accuracy_report(results), results, preds, np.stack(kept) if kept else None)


def evaluate(ckpt: Checkpoint, dataset: Dataset, batch_size: int = 8, keep_heatmaps: int = 0) -> Evaluation:
    """Final-stage heatmaps, quarter-offset decoding, bbox-normalised scoring."""
    return evaluate_predictor(model_predictor(ckpt), dataset, ckpt.config, batch_size,
                              keep_heatmaps=keep_heatmaps)


def with_model(cfg: TrainConfig, **model_overrides) -> TrainConfig:
    return replace(cfg, model=replace(cfg.model, **model_overrides))
