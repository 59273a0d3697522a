"""Training losses with analytic gradients.

Three primitives: a class-balanced cross-entropy, an orientation coherence
loss over the doubled-angle vector field, and an L1 Laplacian smoothness loss
for segmentation scores. ``total_loss`` forms the weighted sum.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .errors import ConfigError, EmptyRoi, ShapeMismatch, UnsupportedSpan
from .orientation import AngleDistribution, orientation_vector
from .raster import conv2d
from .segmentation import SegmentationMap

PROB_EPS = 1e-7
COHERENCE_EPS = 1e-6
K_LAP = np.array([[0.0, 1.0, 0.0],
                  [1.0, -4.0, 1.0],
                  [0.0, 1.0, 0.0]])
J3 = np.ones((3, 3))

# Default loss instances, all weighted 1.0. These are placeholders for a
# training setup, not tuned values.
DEFAULT_LOSS_NAMES = (
    "ori_ce", "ori_strong_ce", "ori_coherence",
    "seg_ce", "seg_smooth",
    "mnt_score_ce", "mnt_xoff_ce", "mnt_yoff_ce", "mnt_dir_ce",
)


@dataclass
class LossValue:
    value: float
    gradient: object  # ndarray, or {wrt: ndarray} for mixed totals
    wrt: Optional[str] = "pred"


@dataclass
class LossWeights:
    weights: Dict[str, float] = field(default_factory=lambda: {n: 1.0 for n in DEFAULT_LOSS_NAMES})

    def __post_init__(self):
        for name, w in self.weights.items():
            if not (np.isfinite(w) and w >= 0):
                raise ConfigError(f"loss weight {name}={w} must be finite and >= 0")

    def __getitem__(self, name):
        return self.weights[name]


def _probs(x):
    return np.asarray(x.probs if isinstance(x, AngleDistribution) else x, dtype=np.float64)


def _roi(roi, shape):
    roi = np.asarray(roi, dtype=bool)
    if roi.shape != tuple(shape):
        raise ShapeMismatch(f"roi {roi.shape} vs map {tuple(shape)}")
    n = int(roi.sum())
    if n == 0:
        raise EmptyRoi("region of interest is empty")
    return roi, n


def default_lambdas(label, roi):
    """``(lambda_pos, lambda_neg)`` = ``(1, positives / negatives)`` over the ROI."""
    label = np.asarray(label, dtype=np.float64)
    roi = np.asarray(roi, dtype=bool)
    sel = label[roi]
    neg = float(np.sum(1.0 - sel))
    return 1.0, (float(np.sum(sel)) / neg if neg > 0 else 1.0)


def balanced_cross_entropy(pred, label, roi, lambda_pos=1.0, lambda_neg=None, eps=PROB_EPS):
    """Class-balanced cross-entropy averaged over the ROI cells.

    ``pred`` and ``label`` are (H, W) score maps or (H, W, N) distributions.
    The gradient is with respect to ``pred``; entries clipped to
    ``[eps, 1 - eps]`` get zero gradient.
    """
    p = _probs(pred)
    pl = _probs(label)
    if p.shape != pl.shape:
        raise ShapeMismatch(f"pred {p.shape} vs label {pl.shape}")
    roi, count = _roi(roi, p.shape[:2])
    if lambda_neg is None:
        lambda_pos, lambda_neg = default_lambdas(pl, roi)
    pc = np.clip(p, eps, 1.0 - eps)
    mask = roi if p.ndim == 2 else roi[..., None]
    terms = lambda_pos * pl * np.log(pc) + lambda_neg * (1.0 - pl) * np.log(1.0 - pc)
    value = -float(np.sum(np.where(mask, terms, 0.0))) / count
    inside = (p >= eps) & (p <= 1.0 - eps)
    grad = -(lambda_pos * pl / pc - lambda_neg * (1.0 - pl) / (1.0 - pc)) / count
    grad = np.where(mask & inside, grad, 0.0)
    return LossValue(value=value, gradient=grad)


def _window(a):
    return conv2d(a, J3, pad="zero")


def coherence_map(dist, eps=COHERENCE_EPS):
    """Per-cell windowed coherence ``|J3 * d| / (J3 * |d| + eps)`` (zero padded)."""
    d_cos, d_sin = orientation_vector(dist.probs, dist.step)
    ax, ay = _window(d_cos), _window(d_sin)
    b = _window(np.hypot(d_cos, d_sin))
    return np.hypot(ax, ay) / (b + eps)


def coherence_loss(dist, roi, eps=COHERENCE_EPS):
    """``|ROI| / sum_ROI Coh - 1`` with its gradient w.r.t. ``dist.probs``."""
    if dist.span != 180:
        raise UnsupportedSpan("coherence loss needs a span-180 distribution")
    probs = np.asarray(dist.probs, dtype=np.float64)
    roi, count = _roi(roi, probs.shape[:2])
    n = probs.shape[-1]
    d_cos, d_sin = orientation_vector(probs, dist.step)
    mag = np.hypot(d_cos, d_sin)
    ax, ay = _window(d_cos), _window(d_sin)
    a = np.hypot(ax, ay)
    den = _window(mag) + eps
    coh = a / den
    total = float(np.sum(coh[roi]))
    if total < eps:
        # the ROI windows (nearly) cancel out; clamp so the value stays finite
        return LossValue(value=count / eps - 1.0, gradient=np.zeros_like(probs))
    value = count / total - 1.0

    wc = np.where(roi, -count / total ** 2, 0.0)
    safe_a = np.where(a > 0, a, 1.0)
    ux = np.where(a > 0, ax / safe_a, 0.0)
    uy = np.where(a > 0, ay / safe_a, 0.0)
    # d Coh_c / d dbar_n for every n in the 3x3 window of c, pushed back with J3
    gx = _window(wc * ux / den)
    gy = _window(wc * uy / den)
    back = _window(wc * coh / den)
    safe_m = np.where(mag > 0, mag, 1.0)
    gx -= np.where(mag > 0, back * d_cos / safe_m, 0.0)
    gy -= np.where(mag > 0, back * d_sin / safe_m, 0.0)
    doubled = np.radians(2.0 * dist.step * np.arange(n))
    grad = (gx[..., None] * np.cos(doubled) + gy[..., None] * np.sin(doubled)) / n
    return LossValue(value=value, gradient=grad)


def smoothness_loss(seg):
    """Mean absolute Laplacian response of a score map (replicate padding).

    The subgradient of ``|.|`` at exactly zero is taken as 0.
    """
    s = np.asarray(seg.scores if isinstance(seg, SegmentationMap) else seg, dtype=np.float64)
    lap = conv2d(s, K_LAP, pad="replicate")
    h, w = s.shape
    value = float(np.mean(np.abs(lap)))
    # adjoint of (replicate pad, then 3x3 correlation): spread, then fold the border back
    sgn = np.sign(lap) / (h * w)
    spread = np.zeros((h + 2, w + 2))
    for a in range(3):
        for b in range(3):
            if K_LAP[a, b] != 0.0:
                spread[a:a + h, b:b + w] += K_LAP[a, b] * sgn
    rows = np.clip(np.arange(-1, h + 1), 0, h - 1)
    cols = np.clip(np.arange(-1, w + 1), 0, w - 1)
    grad = np.zeros((h, w))
    np.add.at(grad, (rows[:, None], cols[None, :]), spread)
    return LossValue(value=value, gradient=grad, wrt="seg")


def total_loss(components, weights):
    """Weighted sum of named LossValues.

    Gradients add per target map (``wrt``). When every component shares one
    target the result carries a plain array gradient, otherwise a dict.
    """
    if isinstance(weights, LossWeights):
        weights = weights.weights
    missing = [name for name in components if name not in weights]
    if missing:
        raise ConfigError(f"no weight for loss component(s): {', '.join(missing)}")
    value = 0.0
    grads = {}
    for name, lv in components.items():
        w = float(weights[name])
        value += w * lv.value
        g = w * np.asarray(lv.gradient)
        if lv.wrt in grads:
            if grads[lv.wrt].shape != g.shape:
                raise ShapeMismatch(f"gradients for '{lv.wrt}' disagree in shape")
            grads[lv.wrt] = grads[lv.wrt] + g
        else:
            grads[lv.wrt] = g
    if len(grads) == 1:
        (wrt, g), = grads.items()
        return LossValue(value=value, gradient=g, wrt=wrt)
    return LossValue(value=value, gradient=grads, wrt=None)


# --- finite-difference checking ---------------------------------------------

def relative_error(analytic, numeric, floor=1e-8):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def numeric_gradient(fn, x, h=1e-6, where=None):
    """Central differences of scalar ``fn`` at every entry of ``x`` (or where ``where`` is true)."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.argwhere(np.ones(x.shape, bool) if where is None else where)
    for idx in map(tuple, it):
        orig = x[idx]
        x[idx] = orig + h
        fp = fn(x)
        x[idx] = orig - h
        fm = fn(x)
        x[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad


@dataclass
class GradCheck:
    name: str
    max_error: float
    worst_index: tuple


def _check(name, fn, x, analytic, where=None):
    numeric = numeric_gradient(fn, x, where=where)
    err = relative_error(analytic, numeric)
    if where is not None:
        err = np.where(where, err, 0.0)
    worst = np.unravel_index(int(np.argmax(err)), err.shape)
    return GradCheck(name, float(err[worst]), tuple(int(i) for i in worst))


def gradcheck_suite(seed=0, perturb=0.0):
    """Finite-difference checks of the three loss primitives on seeded random maps.

    ``perturb`` is added to every analytic gradient; it exists so the failure
    path can be exercised.
    """
    rng = np.random.default_rng(seed)
    results = []

    pred = rng.uniform(0.05, 0.95, size=(4, 4, 8))
    label = rng.uniform(0.0, 1.0, size=(4, 4, 8))
    roi = rng.uniform(size=(4, 4)) > 0.3
    roi[0, 0] = True
    ce = balanced_cross_entropy(pred, label, roi, 1.0, 0.7)
    results.append(_check("balanced_cross_entropy",
                          lambda p: balanced_cross_entropy(p, label, roi, 1.0, 0.7).value,
                          pred, ce.gradient + perturb))

    raw = rng.uniform(0.0, 1.0, size=(6, 6, 90))
    probs = raw / raw.sum(axis=-1, keepdims=True)
    roi = rng.uniform(size=(6, 6)) > 0.2
    roi[2, 2] = True
    co = coherence_loss(AngleDistribution(probs), roi)
    results.append(_check("coherence_loss",
                          lambda p: coherence_loss(AngleDistribution(p), roi).value,
                          probs, co.gradient + perturb))

    scores = rng.normal(size=(8, 8))
    lap = conv2d(scores, K_LAP)
    sm = smoothness_loss(scores)
    # skip entries whose stencil touches a near-zero Laplacian response
    near_zero = np.abs(lap) < 1e-4
    touched = conv2d(near_zero.astype(np.float64), np.abs(K_LAP), pad="replicate") > 0
    results.append(_check("smoothness_loss", lambda s: smoothness_loss(s).value,
                          scores, sm.gradient + perturb, where=~touched))
    return results
