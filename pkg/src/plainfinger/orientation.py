"""Gradient-based ridge orientation and the discrete angle-distribution codec."""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import AngleOutOfRange, ParseError, ShapeMismatch, UnsupportedSpan
from .raster import as_image, box_sum, conv2d

# Convolution-form Sobel masks: conv2d(x_ramp, SOBEL_X) == +8 in the interior.
SOBEL_X = np.array([[1.0, 0.0, -1.0],
                    [2.0, 0.0, -2.0],
                    [1.0, 0.0, -1.0]])
SOBEL_Y = SOBEL_X.T.copy()

COHERENCE_EPS = 1e-12
LOW_CONFIDENCE = 0.05


def wrap_angle(angles, span=180.0):
    """Reduce angles (degrees) into ``[0, span)``, guarding the float edge at ``span``."""
    out = np.mod(angles, span)
    return np.where(out >= span, 0.0, out)


@dataclass(frozen=True)
class StructureTensor:
    gxx: np.ndarray
    gyy: np.ndarray
    gxy: np.ndarray

    @property
    def shape(self):
        return self.gxx.shape


@dataclass
class OrientationField:
    """Ridge angles in degrees, ``[0, 180)``, sampled every ``stride`` pixels."""
    angles: np.ndarray
    stride: int = 1
    coherence: Optional[np.ndarray] = None

    @property
    def shape(self):
        return self.angles.shape


@dataclass
class AngleDistribution:
    """Per-cell probabilities over ``N`` angle bins spaced ``floor(span / N)`` degrees apart."""
    probs: np.ndarray  # (H, W, N)
    span: int = 180

    @property
    def bins(self):
        return self.probs.shape[-1]

    @property
    def step(self):
        return self.span // self.bins

    def bin_angles(self):
        return self.step * np.arange(self.bins, dtype=np.float64)


def sobel_gradients(image):
    """Return ``(grad_x, grad_y)`` from the 3x3 Sobel pair, replicate padded."""
    image = as_image(image)
    return conv2d(image, SOBEL_X), conv2d(image, SOBEL_Y)


def structure_tensor(gx, gy, w=16):
    gx = np.asarray(gx, dtype=np.float64)
    gy = np.asarray(gy, dtype=np.float64)
    if gx.shape != gy.shape:
        raise ShapeMismatch(f"gradient shapes differ: {gx.shape} vs {gy.shape}")
    return StructureTensor(gxx=box_sum(gx * gx, w),
                           gyy=box_sum(gy * gy, w),
                           gxy=box_sum(gx * gy, w))


def _cell_centers(n, stride):
    return np.minimum(np.arange(0, n, stride) + stride // 2, n - 1)


def sample_cells(raster, stride):
    """Pick the cell-center pixel of every ``stride x stride`` cell (ceil-sized grid)."""
    if stride == 1:
        return raster
    h, w = raster.shape[:2]
    return raster[np.ix_(_cell_centers(h, stride), _cell_centers(w, stride))]


def orientation_field(t, stride=1):
    """Ridge orientation ``90 + atan2(2 Gxy, Gxx - Gyy) / 2`` in degrees, wrapped to [0, 180)."""
    theta = 90.0 + 0.5 * np.degrees(np.arctan2(2.0 * t.gxy, t.gxx - t.gyy))
    theta = wrap_angle(theta, 180.0)
    return OrientationField(angles=sample_cells(theta, stride), stride=stride)


def coherence(t, eps=COHERENCE_EPS):
    num = np.sqrt((t.gxx - t.gyy) ** 2 + 4.0 * t.gxy ** 2)
    return np.clip(num / (t.gxx + t.gyy + eps), 0.0, 1.0)


# --- angle distribution codec -----------------------------------------------

def encode_angle(theta, bins=90, span=180, sigma=5.0):
    """Inverted-Gaussian label: Gaussian of the circular distance to each bin angle, normalized."""
    if not 0 <= theta < span:
        raise AngleOutOfRange(f"angle {theta} outside [0, {span})")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    centers = (span // bins) * np.arange(bins, dtype=np.float64)
    d = np.abs(theta - centers)
    d = np.minimum(d, span - d)
    p = np.exp(-0.5 * (d / sigma) ** 2)
    return p / p.sum()


def encode_angles(angles, bins=90, span=180, sigma=5.0):
    """Vectorized ``encode_angle`` over a raster of angles -> AngleDistribution."""
    angles = np.asarray(angles, dtype=np.float64)
    if np.any(angles < 0) or np.any(angles >= span):
        raise AngleOutOfRange(f"angles must lie in [0, {span})")
    centers = (span // bins) * np.arange(bins, dtype=np.float64)
    d = np.abs(angles[..., None] - centers)
    d = np.minimum(d, span - d)
    p = np.exp(-0.5 * (d / sigma) ** 2)
    return AngleDistribution(p / p.sum(axis=-1, keepdims=True), span=span)


def decode_theta_max(dist):
    """Angle of the most probable bin; ties go to the lowest index."""
    return dist.step * np.argmax(dist.probs, axis=-1).astype(np.float64)


def orientation_vector(probs, step):
    """Mean doubled-angle vector ``(d_cos, d_sin)`` of each cell, including the 1/N factor."""
    n = probs.shape[-1]
    doubled = np.radians(2.0 * step * np.arange(n))
    d_cos = probs @ np.cos(doubled) / n
    d_sin = probs @ np.sin(doubled) / n
    return d_cos, d_sin


def decode_theta_ave(dist):
    """Vector-averaged orientation over the doubled-angle circle (span 180 only)."""
    if dist.span != 180:
        raise UnsupportedSpan("averaged decoding needs span 180; use decode_theta_max")
    d_cos, d_sin = orientation_vector(dist.probs, dist.step)
    theta = 0.5 * np.degrees(np.arctan2(d_sin, d_cos))
    theta = np.where(theta < 0, theta + 180.0, theta)
    return wrap_angle(theta, 180.0)


def theta_ave_confidence(dist):
    """Length of the un-scaled mean vector (``N * |d|``), in [0, 1].

    Cells below ``LOW_CONFIDENCE`` carry near-antipodal mass and their averaged
    angle is unreliable.
    """
    d_cos, d_sin = orientation_vector(dist.probs, dist.step)
    return dist.bins * np.hypot(d_cos, d_sin)


# --- text format ------------------------------------------------------------

def write_orientation(path, field):
    """Header ``W H stride`` then one row of one-decimal angles per line."""
    angles = np.asarray(field.angles, dtype=np.float64)
    h, w = angles.shape
    lines = [f"{w} {h} {field.stride}"]
    for row in angles:
        cells = []
        for a in row:
            s = f"{a:.1f}"
            cells.append("0.0" if s == "180.0" else s)
        lines.append(" ".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def read_orientation(path):
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines()]
    if not lines:
        raise ParseError("empty orientation file", path)
    try:
        w, h, stride = (int(v) for v in lines[0].split())
    except ValueError:
        raise ParseError("header must be 'W H stride'", path, 1) from None
    rows = []
    for i in range(h):
        lineno = i + 2
        if lineno - 1 >= len(lines):
            raise ParseError(f"expected {h} rows", path, lineno)
        try:
            row = [float(v) for v in lines[lineno - 1].split()]
        except ValueError:
            raise ParseError("non-numeric angle", path, lineno) from None
        if len(row) != w:
            raise ParseError(f"expected {w} angles, got {len(row)}", path, lineno)
        rows.append(row)
    return OrientationField(angles=np.asarray(rows, dtype=np.float64).reshape(h, w), stride=stride)
