"""One-to-one minutiae matching, precision/recall and error statistics."""
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple

import numpy as np

DEFAULT_THRESHOLDS = tuple(round(0.05 * i, 2) for i in range(21))


@dataclass(frozen=True)
class MatchCriteria:
    dist_thr: float = 15.0
    angle_thr: float = 30.0

    def __post_init__(self):
        if not (self.dist_thr > 0 and self.angle_thr > 0):
            raise ValueError("match thresholds must be > 0")


@dataclass
class MatchResult:
    pairs: List[Tuple[int, int]] = field(default_factory=list)
    precision: float = 1.0
    recall: float = 1.0
    mean_loc_err: float = 0.0
    mean_angle_err: float = 0.0
    n_pred: int = 0
    n_gt: int = 0


def angle_diff(a, b):
    """Circular difference in degrees, in [0, 180]."""
    d = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) % 360.0
    return np.minimum(d, 360.0 - d)


def _coords(minutiae):
    if not minutiae:
        return np.zeros((0, 2)), np.zeros(0)
    xy = np.array([[m.x, m.y] for m in minutiae], dtype=np.float64)
    return xy, np.array([m.direction for m in minutiae], dtype=np.float64)


def candidate_pairs(pred, gt, c=MatchCriteria()):
    """All ``(distance, pred_index, gt_index)`` within both thresholds, greedy order."""
    pxy, pdir = _coords(pred)
    gxy, gdir = _coords(gt)
    if len(pxy) == 0 or len(gxy) == 0:
        return []
    dist = np.hypot(pxy[:, None, 0] - gxy[None, :, 0], pxy[:, None, 1] - gxy[None, :, 1])
    ok = (dist < c.dist_thr) & (angle_diff(pdir[:, None], gdir[None, :]) < c.angle_thr)
    pi, gi = np.nonzero(ok)
    return sorted(zip(dist[pi, gi].tolist(), pi.tolist(), gi.tolist()))


def error_stats(result, pred, gt):
    """Mean Euclidean distance and mean circular direction difference over matched pairs."""
    if not result.pairs:
        return 0.0, 0.0
    loc = [np.hypot(pred[i].x - gt[j].x, pred[i].y - gt[j].y) for i, j in result.pairs]
    ang = [float(angle_diff(pred[i].direction, gt[j].direction)) for i, j in result.pairs]
    return float(np.mean(loc)), float(np.mean(ang))


def match_minutiae(pred, gt, c=MatchCriteria()):
    """Greedy one-to-one matching by ascending distance (ties: pred index, then gt index)."""
    used_p, used_g = set(), set()
    pairs = []
    for _, i, j in candidate_pairs(pred, gt, c):
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        pairs.append((i, j))
    n = len(pairs)
    result = MatchResult(pairs=pairs,
                         precision=n / len(pred) if pred else 1.0,
                         recall=n / len(gt) if gt else 1.0,
                         n_pred=len(pred), n_gt=len(gt))
    result.mean_loc_err, result.mean_angle_err = error_stats(result, pred, gt)
    return result


def pr_curve(pred, gt, c=MatchCriteria(), thresholds=DEFAULT_THRESHOLDS):
    """``[(threshold, precision, recall), ...]`` keeping predictions with score >= threshold."""
    thresholds = list(thresholds)
    if thresholds != sorted(thresholds):
        raise ValueError("thresholds must be sorted ascending")
    out = []
    for t in thresholds:
        kept = [m for m in pred if m.score >= t]
        r = match_minutiae(kept, gt, c)
        out.append((float(t), r.precision, r.recall))
    return out


def summary_line(r):
    """``precision recall mean_loc_err mean_angle_err matched pred gt``."""
    return (f"{r.precision:.4f} {r.recall:.4f} {r.mean_loc_err:.2f} {r.mean_angle_err:.2f} "
            f"{len(r.pairs)} {r.n_pred} {r.n_gt}")


def write_curve_csv(path, curve):
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "precision", "recall"])
        for t, p, r in curve:
            w.writerow([f"{t:.2f}", f"{p:.4f}", f"{r:.4f}"])
