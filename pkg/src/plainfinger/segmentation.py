"""Foreground segmentation from coherence, local mean and local variance.

A pixel-wise linear classifier scores ``w . [Coh, Mean, Var] + b``; positive
scores are foreground at the default threshold 0. The shipped weights come
from ``fit_classifier`` run on ``default_training_set()``.

Weak segmentation labels are built from a minutiae list: the convex hull of
the minutia positions, dilated by a disk and cleaned by one majority pass.
"""
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMinutiae, OutOfBounds, ShapeMismatch
from .normalize import normalize
from .orientation import coherence, sobel_gradients, structure_tensor
from .raster import as_image, block_average, box_sum

POOL = 8
DEFAULT_THRESHOLD = 0.0
DEFAULT_DILATION = 16


@dataclass(frozen=True)
class SegFeatures:
    coh: np.ndarray
    mean: np.ndarray
    var: np.ndarray

    def stack(self):
        return np.stack([self.coh, self.mean, self.var], axis=-1)


@dataclass(frozen=True)
class SegClassifier:
    weights: tuple  # (w_coh, w_mean, w_var)
    bias: float

    def __post_init__(self):
        if len(self.weights) != 3:
            raise ValueError("a segmentation classifier needs exactly 3 weights")
        if not np.all(np.isfinite(list(self.weights) + [self.bias])):
            raise ValueError("classifier parameters must be finite")


@dataclass
class SegmentationMap:
    scores: np.ndarray
    stride: int = 1


# Logistic regression fitted by `fit_classifier(*default_training_set())`;
# tests/test_segmentation.py re-runs the fit and checks these digits.
DEFAULT_CLASSIFIER = SegClassifier(weights=(3.2464, -0.1804, 4.8724), bias=-5.3740)


def seg_features(image, t, w=16):
    """Coherence, local mean and local variance, all at full resolution.

    Mean and variance use the same ``w x w`` window as the structure tensor;
    the variance subtracts the local mean raster pixel-wise before squaring.
    """
    image = as_image(image)
    if image.shape != t.shape:
        raise ShapeMismatch(f"image {image.shape} vs tensor {t.shape}")
    area = float(w * w)
    mean = box_sum(image, w) / area
    var = box_sum((image - mean) ** 2, w) / area
    return SegFeatures(coh=coherence(t), mean=mean, var=var)


def image_features(image, w=16):
    """``seg_features`` of an already normalized image, computing its tensor."""
    gx, gy = sobel_gradients(image)
    return seg_features(image, structure_tensor(gx, gy, w), w)


def seg_classify(f, c=DEFAULT_CLASSIFIER):
    w1, w2, w3 = c.weights
    return SegmentationMap(scores=w1 * f.coh + w2 * f.mean + w3 * f.var + c.bias, stride=1)


def pool_map(m, stride=POOL):
    """Average a stride-1 map over ``stride x stride`` cells (partial edge cells included)."""
    if m.stride != 1:
        raise ValueError("only stride-1 maps can be pooled")
    return SegmentationMap(scores=block_average(m.scores, stride), stride=stride)


def seg_binarize(m, threshold=DEFAULT_THRESHOLD):
    return (np.asarray(m.scores) > threshold).astype(np.uint8)


# --- classifier fitting -----------------------------------------------------

def default_training_set(n=200, seed=7, w=16):
    """Features and labels from ``synth_patch_dataset`` composites.

    Each ridge patch is set beside a background patch, the pair normalized as
    one image (as the pipeline does), and pixels at least ``w`` away from the
    seam and the outer border are sampled on a 4-pixel grid.
    """
    from .synth import synth_patch_dataset

    patches, labels = synth_patch_dataset(n, seed=seed)
    fg = patches[labels == 1]
    bg = patches[labels == 0]
    size = patches.shape[1]
    feats, ys = [], []
    for a, b in zip(fg, bg):
        pair = np.concatenate([a, b], axis=1)
        f = image_features(normalize(pair), w).stack()
        rows = np.arange(w, size - w, 4)
        for lo, label in ((w, 1), (size + w, 0)):
            cols = np.arange(lo, lo + size - 2 * w, 4)
            feats.append(f[np.ix_(rows, cols)].reshape(-1, 3))
            ys.append(np.full(len(rows) * len(cols), label))
    return np.concatenate(feats), np.concatenate(ys)


def fit_classifier(x, y, l2=1e-3, iters=50, tol=1e-10):
    """L2-regularized logistic regression by Newton (IRLS) steps; the bias is not penalized."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    a = np.hstack([x, np.ones((len(x), 1))])
    beta = np.zeros(a.shape[1])
    reg = np.full(a.shape[1], l2)
    reg[-1] = 0.0
    for _ in range(iters):
        p = 1.0 / (1.0 + np.exp(-(a @ beta)))
        grad = a.T @ (p - y) / len(y) + reg * beta
        hess = (a * (p * (1 - p))[:, None]).T @ a / len(y) + np.diag(reg)
        step = np.linalg.solve(hess, grad)
        beta -= step
        if np.max(np.abs(step)) < tol:
            break
    return SegClassifier(weights=tuple(float(v) for v in beta[:3]), bias=float(beta[3]))


# --- weak labels from minutiae ----------------------------------------------

def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points):
    """Counter-clockwise hull vertices (monotone chain); handles 1, 2 and collinear points."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return pts
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def hull_distance(hull, width, height):
    """Euclidean distance from every pixel center to the (closed) hull polygon."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    verts = np.asarray(hull, dtype=np.float64)
    if len(verts) == 1:
        return np.hypot(xx - verts[0, 0], yy - verts[0, 1])
    n = len(verts)
    edges = [(verts[i], verts[(i + 1) % n]) for i in range(n if n > 2 else 1)]
    dist = np.full((height, width), np.inf)
    inside = np.ones((height, width), dtype=bool) if n > 2 else np.zeros((height, width), bool)
    for a, b in edges:
        ab = b - a
        px, py = xx - a[0], yy - a[1]
        t = np.clip((px * ab[0] + py * ab[1]) / (ab @ ab), 0.0, 1.0)
        dist = np.minimum(dist, np.hypot(px - t * ab[0], py - t * ab[1]))
        if n > 2:
            inside &= ab[0] * py - ab[1] * px >= -1e-9
    return np.where(inside, 0.0, dist)


def rasterize_hull(minutiae, width, height, radius=0.0):
    """Pixels within ``radius`` of the minutiae convex hull (edges inclusive), before smoothing."""
    if len(minutiae) == 0:
        raise EmptyMinutiae("cannot build a hull from an empty minutiae list")
    for m in minutiae:
        if not (0 <= m.x < width and 0 <= m.y < height):
            raise OutOfBounds(f"minutia ({m.x}, {m.y}) outside {width}x{height}")
    hull = convex_hull([(m.x, m.y) for m in minutiae])
    return hull_distance(hull, width, height) <= radius + 1e-9


def majority_smooth(mask):
    """One conservative majority pass: flip a pixel when at least 6 of its 8 neighbors disagree."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    padded = np.pad(mask.astype(np.int64), 1, mode="edge")
    count = box_sum(padded.astype(np.float64), 3)[1:h + 1, 1:w + 1] - mask
    on = np.rint(count).astype(np.int64)
    out = mask.copy()
    out[mask & (8 - on >= 6)] = False
    out[~mask & (on >= 6)] = True
    return out


def weak_seg_label(minutiae, width, height, dilation_radius=DEFAULT_DILATION):
    return majority_smooth(rasterize_hull(minutiae, width, height, dilation_radius)).astype(np.uint8)


def strong_orientation_label(minutiae, field_shape, stride):
    """Sparse orientation supervision: ``[((cx, cy), direction mod 180), ...]``.

    ``field_shape`` is the ``(rows, cols)`` of the orientation field grid.
    """
    rows, cols = field_shape
    out = []
    for m in minutiae:
        cx, cy = int(np.floor(m.x / stride)), int(np.floor(m.y / stride))
        if not (0 <= cx < cols and 0 <= cy < rows):
            raise OutOfBounds(f"minutia ({m.x}, {m.y}) outside the {cols}x{rows} field")
        out.append(((cx, cy), float(m.direction % 180.0)))
    return out
