"""Minutiae extraction by template matching on the enhanced phase.

Scoring is a normalized cross-correlation of ``cos(E)`` against a bank of
ridge-ending templates followed by a max over templates (one convolution
layer plus a maxout). Bifurcations are valley endings, so each template is
also matched against ``-cos(E)``; the score is therefore ``max_t |ncc_t|``,
already in [0, 1].
"""
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidKernel, OutOfBounds, ShapeMismatch
from .minutiae import Minutia, read_minutiae, write_minutiae  # noqa: F401  (re-export)
from .orientation import AngleDistribution, decode_theta_max, encode_angle, wrap_angle
from .synth import ending_patch

CELL = 8


class CellCollision(UserWarning):
    """Two minutiae fell into the same 8x8 cell; the later one was kept."""


@dataclass(frozen=True)
class TemplateBank:
    templates: np.ndarray   # (K, k, k), zero-mean, unit-norm, zero outside `support`
    directions: np.ndarray  # degrees, (K,)
    support: np.ndarray     # (k, k) bool disk

    @property
    def size(self):
        return self.templates.shape[-1]

    def __len__(self):
        return len(self.directions)


@dataclass
class MinutiaeMaps:
    score: np.ndarray  # (H/8, W/8)
    xoff: np.ndarray   # (H/8, W/8, 8)
    yoff: np.ndarray   # (H/8, W/8, 8)
    direction: AngleDistribution


def template_bank(directions=16, ksize=25, period=9.0, window_sigma=6.0):
    """Ridge-ending templates at ``directions`` evenly spaced headings.

    Each template is the synthetic ending patch, tapered by a Gaussian of
    ``window_sigma`` pixels, restricted to the inscribed disk, then made
    zero-mean and unit-norm over that disk.
    """
    if directions < 4:
        raise ValueError("need at least 4 template directions")
    if ksize % 2 == 0 or ksize < 3:
        raise InvalidKernel(f"template size must be odd, got {ksize}")
    c = ksize // 2
    yy, xx = np.mgrid[-c:c + 1, -c:c + 1].astype(np.float64)
    r2 = xx ** 2 + yy ** 2
    support = r2 <= c * c
    taper = np.exp(-r2 / (2.0 * window_sigma ** 2))
    angles = 360.0 * np.arange(directions) / directions
    templates = np.empty((directions, ksize, ksize))
    for i, a in enumerate(angles):
        patch, _ = ending_patch(a, period=period, size=ksize)
        t = np.where(support, patch * taper, 0.0)
        t[support] -= t[support].mean()
        templates[i] = t / np.linalg.norm(t)
    return TemplateBank(templates=templates, directions=angles, support=support)


def _correlate_bank(image, kernels, strip=64):
    """Correlate ``image`` (replicate padded) with each of ``kernels`` (n, k, k) -> (H, W, n)."""
    n, k, _ = kernels.shape
    c = k // 2
    h, w = image.shape
    padded = np.pad(image, c, mode="edge")
    hankel = sliding_window_view(padded, k, axis=1)  # (h + 2c, w, k)
    taps = np.ascontiguousarray(np.transpose(kernels, (1, 2, 0)))  # (k_row, k_col, n)
    out = np.empty((h, w, n))
    for y0 in range(0, h, strip):
        s = min(strip, h - y0)
        rows = np.ascontiguousarray(hankel[y0:y0 + s + k - 1])
        acc = np.zeros((s * w, n))
        for v in range(k):
            acc += rows[v:v + s].reshape(s * w, k) @ taps[v]
        out[y0:y0 + s] = acc.reshape(s, w, n)
    return out


def minutiae_score(enhanced, bank, seg=None):
    """Per-pixel minutia score and best direction for an EnhancedMap.

    Scores ``cos(E)``; see ``template_scores``.
    """
    return template_scores(enhanced.image(), bank, seg)


def template_scores(img, bank, seg=None):
    """Score map and best-direction map of an arbitrary image against ``bank``.

    ``score`` is the largest absolute normalized correlation between the
    template-support neighborhood of ``img`` and any template; flat
    neighborhoods score 0. ``direction`` is the winning template's heading,
    refined by a parabola through the neighboring headings' responses of the
    same sign. Pixels outside ``seg`` get score 0.
    """
    img = np.asarray(img, dtype=np.float64)
    if seg is not None:
        seg = np.asarray(seg, dtype=bool)
        if seg.shape != img.shape:
            raise ShapeMismatch(f"seg {seg.shape} vs image {img.shape}")
    k = bank.size
    if k > min(img.shape):
        raise ShapeMismatch(f"template size {k} exceeds image {img.shape}")
    support = bank.support.astype(np.float64)
    stack = np.concatenate([bank.templates, support[None]], axis=0)
    resp = _correlate_bank(img, stack)
    sums = resp[..., -1]
    sq = _correlate_bank(img * img, support[None])[..., 0]
    count = support.sum()
    var = np.maximum(sq - sums * sums / count, 0.0)
    den = np.sqrt(var)
    flat = den < 1e-9 * np.sqrt(count)
    ncc = resp[..., :-1] / np.where(flat, 1.0, den)[..., None]
    ncc[flat] = 0.0
    mag = np.abs(ncc)
    best = np.argmax(mag, axis=-1)
    score = np.take_along_axis(mag, best[..., None], axis=-1)[..., 0]
    score = np.clip(score, 0.0, 1.0)

    K = len(bank)
    sign = np.sign(np.take_along_axis(ncc, best[..., None], axis=-1)[..., 0])
    a0 = score
    am = sign * np.take_along_axis(ncc, ((best - 1) % K)[..., None], axis=-1)[..., 0]
    ap = sign * np.take_along_axis(ncc, ((best + 1) % K)[..., None], axis=-1)[..., 0]
    curv = am - 2.0 * a0 + ap
    delta = np.where(curv < 0, 0.5 * (am - ap) / np.where(curv < 0, curv, -1.0), 0.0)
    delta = np.clip(delta, -0.5, 0.5)
    direction = wrap_angle(bank.directions[best] + delta * 360.0 / K, 360.0)

    if seg is not None:
        score = np.where(seg, score, 0.0)
    return score, direction


def local_maxima(score):
    """8-neighborhood strict maxima; equal neighbors defer to the smaller (x, y)."""
    h, w = score.shape
    padded = np.pad(score, 1, mode="constant", constant_values=-np.inf)
    keep = np.ones((h, w), dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            nb = padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
            precedes = dx > 0 or (dx == 0 and dy > 0)
            keep &= (score > nb) | ((score == nb) & precedes)
    return keep


def _nms_order(m):
    return (-m.score, m.x, m.y)


def nms(minutiae, radius):
    """Greedy non-maximum suppression.

    Visit minutiae by descending score (ties: ascending x, then y) and keep one
    unless an already kept minutia lies within ``radius`` (inclusive).
    """
    ordered = sorted(minutiae, key=_nms_order)
    if not ordered:
        return []
    xy = np.array([[m.x, m.y] for m in ordered])
    suppressed = np.zeros(len(ordered), dtype=bool)
    kept = []
    r2 = radius * radius
    for i in range(len(ordered)):
        if suppressed[i]:
            continue
        kept.append(ordered[i])
        d2 = np.sum((xy[i + 1:] - xy[i]) ** 2, axis=1)
        suppressed[i + 1:] |= d2 <= r2
    return kept


def candidates(enhanced, bank, seg=None, threshold=0.5):
    """Local maxima above ``threshold``, before NMS.

    Maxima are found on the unmasked score map and only then restricted to
    ``seg``, so a mask can remove candidates but never create new ones.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    score, direction = minutiae_score(enhanced, bank)
    keep = local_maxima(score) & (score > threshold)
    if seg is not None:
        seg = np.asarray(seg, dtype=bool)
        if seg.shape != score.shape:
            raise ShapeMismatch(f"seg {seg.shape} vs image {score.shape}")
        keep &= seg
    ys, xs = np.nonzero(keep)
    return [Minutia(float(x), float(y), float(direction[y, x]), float(score[y, x]))
            for y, x in zip(ys, xs)]


def extract(enhanced, bank, seg=None, threshold=0.5, nms_radius=16.0):
    """Threshold the score map, keep local maxima inside ``seg``, then NMS."""
    return nms(candidates(enhanced, bank, seg, threshold), nms_radius)


# --- four-map encoding -------------------------------------------------------

def cells_shape(height, width):
    return -(-height // CELL), -(-width // CELL)


def encode_minutiae_maps(minutiae, width, height, bins=180, sigma=10.0):
    """Score, X/Y offset and direction maps on the 8x8 cell grid."""
    ch, cw = cells_shape(height, width)
    score = np.zeros((ch, cw))
    xoff = np.full((ch, cw, CELL), 1.0 / CELL)
    yoff = np.full((ch, cw, CELL), 1.0 / CELL)
    direction = np.full((ch, cw, bins), 1.0 / bins)
    for m in minutiae:
        xi = int(np.floor(m.x + 0.5))
        yi = int(np.floor(m.y + 0.5))
        if not (0 <= xi < width and 0 <= yi < height):
            raise OutOfBounds(f"minutia ({m.x}, {m.y}) outside {width}x{height}")
        cy, cx = yi // CELL, xi // CELL
        if score[cy, cx] > 0:
            warnings.warn(f"cell ({cx}, {cy}) holds more than one minutia", CellCollision,
                          stacklevel=2)
        score[cy, cx] = 1.0
        xoff[cy, cx] = 0.0
        xoff[cy, cx, xi % CELL] = 1.0
        yoff[cy, cx] = 0.0
        yoff[cy, cx, yi % CELL] = 1.0
        direction[cy, cx] = encode_angle(m.direction, bins=bins, span=360, sigma=sigma)
    return MinutiaeMaps(score=score, xoff=xoff, yoff=yoff,
                        direction=AngleDistribution(direction, span=360))


def decode_minutiae_maps(maps, threshold=0.5, nms_radius=16.0):
    """Cells scoring above ``threshold`` -> minutiae; ``nms_radius=None`` skips NMS."""
    cys, cxs = np.nonzero(maps.score > threshold)
    if cys.size == 0:
        return []
    dirs = decode_theta_max(maps.direction)
    xo = np.argmax(maps.xoff, axis=-1)
    yo = np.argmax(maps.yoff, axis=-1)
    found = [Minutia(float(CELL * cx + xo[cy, cx]), float(CELL * cy + yo[cy, cx]),
                     float(dirs[cy, cx]), float(maps.score[cy, cx]))
             for cy, cx in zip(cys, cxs)]
    if nms_radius is None:
        return sorted(found, key=_nms_order)
    return nms(found, nms_radius)
