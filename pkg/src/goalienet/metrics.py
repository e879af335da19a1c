"""Bbox-normalised detection criterion and per-keypoint accuracy reports."""

from __future__ import annotations

import csv
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from goalienet.schema import NUM_KEYPOINTS, Group, check_id, keypoint_table

DEFAULT_THRESHOLD = 0.05
CSV_NAME = "accuracy.csv"
SVG_NAME = "accuracy.svg"
SUMMARY_NAME = "summary.txt"
CSV_COLUMNS = ("id", "name", "group", "present_frames", "accuracy", "presence_proportion")


@dataclass(frozen=True)
class KeypointResult:
    frame_id: str
    keypoint: int
    predicted: tuple[float, float]
    ground_truth: tuple[float, float]
    gt_present: bool
    bbox_diag: float

    def __post_init__(self):
        check_id(self.keypoint)
        if self.gt_present and not self.bbox_diag > 0:
            raise ValueError(f"frame {self.frame_id}: bbox_diag must be > 0 for a present keypoint")


@dataclass
class AccuracyReport:
    per_keypoint: np.ndarray  # [29], NaN where no frame has the keypoint
    present_frames: np.ndarray  # [29] int
    detected_frames: np.ndarray  # [29] int
    mean_accuracy: float
    group_means: dict[Group, float] = field(default_factory=dict)
    frame_weighted_mean: float = math.nan

    def accuracy(self, kp_id: int) -> float:
        return float(self.per_keypoint[check_id(kp_id) - 1])


def normalized_distance(pred, gt, diag: float) -> float:
    if not diag > 0:
        raise ValueError(f"normalising length must be > 0, got {diag}")
    return math.hypot(pred[0] - gt[0], pred[1] - gt[1]) / diag


def is_detected(ratio: float, threshold: float = DEFAULT_THRESHOLD) -> bool:
    return ratio < threshold


def _nanmean(values) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return sum(vals) / len(vals) if vals else math.nan


def report_from_counts(present: np.ndarray, detected: np.ndarray) -> AccuracyReport:
    present = np.asarray(present, dtype=np.int64)
    detected = np.asarray(detected, dtype=np.int64)
    acc = np.full(NUM_KEYPOINTS, np.nan)
    has = present > 0
    acc[has] = detected[has] / present[has]
    groups = {}
    for g in Group:
        groups[g] = _nanmean(acc[d.id - 1] for d in keypoint_table() if d.group is g)
    total = int(present.sum())
    return AccuracyReport(
        per_keypoint=acc,
        present_frames=present,
        detected_frames=detected,
        mean_accuracy=_nanmean(acc),
        group_means=groups,
        frame_weighted_mean=detected.sum() / total if total else math.nan,
    )


def accuracy_report(results: Sequence[KeypointResult], threshold: float = DEFAULT_THRESHOLD) -> AccuracyReport:
    """Per-keypoint detection rate over frames where the ground truth is present.

    The headline mean is unweighted over keypoints that occur at least once;
    ``frame_weighted_mean`` pools every present occurrence instead.
    """
    if not results:
        raise ValueError("accuracy_report needs at least one result")
    present = np.zeros(NUM_KEYPOINTS, dtype=np.int64)
    detected = np.zeros(NUM_KEYPOINTS, dtype=np.int64)
    for r in results:
        if not r.gt_present:
            continue
        i = r.keypoint - 1
        present[i] += 1
        if is_detected(normalized_distance(r.predicted, r.ground_truth, r.bbox_diag), threshold):
            detected[i] += 1
    return report_from_counts(present, detected)


def _fmt(v: float) -> str:
    return "NA" if math.isnan(v) else f"{v:.6g}"


def write_csv(report: AccuracyReport, presence: Sequence[float], path) -> None:
    presence = np.asarray(presence, dtype=np.float64)
    if presence.shape != (NUM_KEYPOINTS,):
        raise ValueError(f"presence must have {NUM_KEYPOINTS} entries")
    with open(path, "w", newline="", encoding="utf-8") as fp:
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for d in keypoint_table():
            i = d.id - 1
            w.writerow([d.id, d.name, d.group.value, int(report.present_frames[i]),
                        _fmt(report.per_keypoint[i]), _fmt(presence[i])])


def read_csv(path) -> tuple[AccuracyReport, np.ndarray]:
    """Rebuild a report (counts are recovered from accuracy x present frames)."""
    present = np.zeros(NUM_KEYPOINTS, dtype=np.int64)
    detected = np.zeros(NUM_KEYPOINTS, dtype=np.int64)
    presence = np.full(NUM_KEYPOINTS, np.nan)
    with open(path, newline="", encoding="utf-8") as fp:
        rows = list(csv.DictReader(fp))
    if len(rows) != NUM_KEYPOINTS:
        raise ValueError(f"{path}: expected {NUM_KEYPOINTS} rows, found {len(rows)}")
    for row in rows:
        i = check_id(int(row["id"])) - 1
        present[i] = int(row["present_frames"])
        if row["accuracy"] != "NA":
            detected[i] = round(float(row["accuracy"]) * present[i])
        if row["presence_proportion"] != "NA":
            presence[i] = float(row["presence_proportion"])
    return report_from_counts(present, detected), presence


def _bar_colour(acc: float, lo: float, hi: float) -> str:
    # light blue for the weakest keypoints through to yellow for the strongest
    t = 0.5 if hi <= lo else (acc - lo) / (hi - lo)
    a, b = (166, 206, 227), (255, 221, 51)
    r, g, bl = (round(a[k] + t * (b[k] - a[k])) for k in range(3))
    return f"#{r:02x}{g:02x}{bl:02x}"


def write_svg(report: AccuracyReport, path, title: str = "Detection accuracy per keypoint") -> None:
    """One bar per keypoint in id order on a 0..1 axis."""
    bar_w, gap, plot_h, left, top, bottom = 20, 6, 300, 50, 40, 150
    width = left + NUM_KEYPOINTS * (bar_w + gap) + 20
    height = top + plot_h + bottom
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(width), height=str(height),
                     viewBox=f"0 0 {width} {height}")
    ET.SubElement(svg, "rect", x="0", y="0", width=str(width), height=str(height), fill="white")
    t = ET.SubElement(svg, "text", x=str(width / 2), y="24", **{"text-anchor": "middle", "font-size": "16"})
    t.text = f"{title} (mean {_fmt(report.mean_accuracy)})"
    base = top + plot_h
    for tick in range(0, 11, 2):
        y = base - plot_h * tick / 10
        ET.SubElement(svg, "line", x1=str(left - 4), y1=f"{y:g}", x2=str(width - 20), y2=f"{y:g}",
                      stroke="#dddddd")
        lab = ET.SubElement(svg, "text", x=str(left - 8), y=f"{y + 4:g}",
                            **{"text-anchor": "end", "font-size": "11"})
        lab.text = f"{tick / 10:.1f}"
    finite = report.per_keypoint[~np.isnan(report.per_keypoint)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    for d in keypoint_table():
        acc = float(report.per_keypoint[d.id - 1])
        x = left + (d.id - 1) * (bar_w + gap)
        h = 0.0 if math.isnan(acc) else acc * plot_h
        ET.SubElement(svg, "rect", id=f"bar-{d.id}", x=f"{x:g}", y=f"{base - h:g}", width=str(bar_w),
                      height=f"{h:g}", fill="#cccccc" if math.isnan(acc) else _bar_colour(acc, lo, hi),
                      **{"data-accuracy": _fmt(acc)})
        lab = ET.SubElement(svg, "text", x=f"{x + bar_w / 2:g}", y=str(base + 10), fill="black",
                            transform=f"rotate(60 {x + bar_w / 2:g} {base + 10})", **{"font-size": "11"})
        lab.text = f"{d.id} {d.name}"
    ET.SubElement(svg, "line", x1=str(left), y1=str(base), x2=str(width - 20), y2=str(base), stroke="black")
    ET.ElementTree(svg).write(path, encoding="utf-8", xml_declaration=True)


def write_summary(report: AccuracyReport, path) -> None:
    lines = [f"mean_accuracy {_fmt(report.mean_accuracy)}",
             f"frame_weighted_mean {_fmt(report.frame_weighted_mean)}"]
    lines += [f"group_mean {g.value} {_fmt(v)}" for g, v in report.group_means.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_report(report: AccuracyReport, presence: Sequence[float], path) -> dict[str, Path]:
    """Write ``accuracy.csv``, ``accuracy.svg`` and ``summary.txt`` into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    files = {"csv": out / CSV_NAME, "svg": out / SVG_NAME, "summary": out / SUMMARY_NAME}
    write_csv(report, presence, files["csv"])
    write_svg(report, files["svg"])
    write_summary(report, files["summary"])
    return files
