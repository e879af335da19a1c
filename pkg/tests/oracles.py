"""Independent reference implementations used as test oracles."""

import math

import numpy as np


def brute_force_accuracy(results, threshold=0.05):
    """Double loop over keypoint ids and results; returns (per_kp, mean, group_means)."""
    groups = {"GOALIE": [], "STICK": [], "NET": []}
    per_kp = {}
    for kp in range(1, 30):
        present = 0
        hits = 0
        for r in results:
            if r.keypoint != kp or not r.gt_present:
                continue
            present += 1
            dx = r.predicted[0] - r.ground_truth[0]
            dy = r.predicted[1] - r.ground_truth[1]
            if math.sqrt(dx * dx + dy * dy) / r.bbox_diag < threshold:
                hits += 1
        per_kp[kp] = hits / present if present else None
        name = "STICK" if 22 <= kp <= 24 else "NET" if kp >= 26 else "GOALIE"
        if present:
            groups[name].append(per_kp[kp])
    valid = [v for v in per_kp.values() if v is not None]
    mean = sum(valid) / len(valid)
    group_means = {g: (sum(v) / len(v) if v else None) for g, v in groups.items()}
    return per_kp, mean, group_means


def random_results(rng, n, n_frames=None):
    """``n`` KeypointResults with a mix of absent ground truth, hits and misses,
    including distances exactly on the threshold."""
    from goalienet.metrics import KeypointResult

    out = []
    for i in range(n):
        diag = float(rng.choice([100.0, 50.0, 200.0]))
        gt = (float(rng.integers(0, 300)), float(rng.integers(0, 300)))
        mode = rng.integers(0, 4)
        if mode == 0:
            # 3-4-5 offsets scaled by a dyadic factor give a ratio of exactly 0.05
            pred = (gt[0] + 3 * diag / 100, gt[1] + 4 * diag / 100)
        elif mode == 1:
            pred = (gt[0] + float(rng.normal(0, 2)), gt[1] + float(rng.normal(0, 2)))
        else:
            pred = (float(rng.uniform(0, 300)), float(rng.uniform(0, 300)))
        frame = f"f{i % (n_frames or n)}"
        out.append(KeypointResult(frame, int(rng.integers(1, 30)), pred, gt, bool(rng.random() < 0.8), diag))
    return out


def same_report(a, b) -> bool:
    """Bitwise equality of two accuracy reports, NaN matching NaN."""
    return (a.per_keypoint.tobytes() == b.per_keypoint.tobytes()
            and np.array_equal(a.present_frames, b.present_frames)
            and np.array_equal(a.detected_frames, b.detected_frames)
            and repr(a.mean_accuracy) == repr(b.mean_accuracy)
            and repr(a.frame_weighted_mean) == repr(b.frame_weighted_mean)
            and {k: repr(v) for k, v in a.group_means.items()} == {k: repr(v) for k, v in b.group_means.items()})
