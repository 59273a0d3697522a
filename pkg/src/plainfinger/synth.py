"""Synthetic fingerprints from an AM-FM phase model with spiral minutiae.

The ridge pattern is ``amplitude * cos(psi)`` where ``psi`` is a plane wave
across the ridge orientation plus one ``+/- atan2`` winding per planted
minutia. A winding inserts one extra ridge period on one side of its center;
the ground-truth direction points toward that side, along the line that
terminates at the center (a ridge for an ending, a valley for a bifurcation).
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import OutOfBounds
from .minutiae import Minutia
from .orientation import OrientationField, wrap_angle
from .raster import upsample_nearest


@dataclass
class SynthSpec:
    width: int = 256
    height: int = 256
    orientation: Union[float, np.ndarray, OrientationField] = 0.0
    period: float = 9.0
    global_phase: float = 0.0
    # (x, y, polarity) with polarity +1 or -1
    minutiae: Sequence[Tuple[float, float, int]] = field(default_factory=list)
    noise_sigma: float = 0.0
    amplitude: float = 1.0
    # optional binary mask; pixels outside it hold only noise
    foreground: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.period < 4:
            raise ValueError(f"period must be >= 4, got {self.period}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")


def _orientation_raster(spec):
    h, w = spec.height, spec.width
    ori = spec.orientation
    if isinstance(ori, OrientationField):
        full = upsample_nearest(ori.angles, ori.stride)[:h, :w]
        if full.shape != (h, w):
            raise ValueError("orientation field does not cover the image")
        return full
    if np.isscalar(ori):
        return np.full((h, w), float(ori))
    ori = np.asarray(ori, dtype=np.float64)
    if ori.shape != (h, w):
        raise ValueError(f"orientation raster shape {ori.shape} != {(h, w)}")
    return ori


def _check_minutiae(spec):
    for x, y, pol in spec.minutiae:
        if not (0 <= x < spec.width and 0 <= y < spec.height):
            raise OutOfBounds(f"minutia ({x}, {y}) outside {spec.width}x{spec.height}")
        if pol not in (1, -1):
            raise ValueError(f"polarity must be +1 or -1, got {pol}")


def phase_field(spec):
    """The noiseless phase ``psi`` of ``spec`` on the pixel grid."""
    _check_minutiae(spec)
    h, w = spec.height, spec.width
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    normal = np.radians(_orientation_raster(spec) + 90.0)
    k = 2.0 * np.pi / spec.period
    psi = k * (xx * np.cos(normal) + yy * np.sin(normal)) + spec.global_phase
    for x0, y0, pol in spec.minutiae:
        psi += pol * np.arctan2(yy - y0, xx - x0)
    return psi


def ground_truth_direction(spec, index):
    """Direction (degrees, [0, 360)) of planted minutia ``index``.

    Uses the gradient of every phase term except the minutia's own winding,
    evaluated at its center; this equals the average gradient one period either
    side of the center along the ridge, where the own-winding terms cancel.
    """
    x0, y0, pol = spec.minutiae[index]
    ori = _orientation_raster(spec)
    xi = min(max(int(round(x0)), 0), spec.width - 1)
    yi = min(max(int(round(y0)), 0), spec.height - 1)
    normal = np.radians(ori[yi, xi] + 90.0)
    k = 2.0 * np.pi / spec.period
    gx, gy = k * np.cos(normal), k * np.sin(normal)
    for j, (xj, yj, pj) in enumerate(spec.minutiae):
        if j == index:
            continue
        dx, dy = x0 - xj, y0 - yj
        r2 = dx * dx + dy * dy
        if r2 > 0:
            gx += pj * -dy / r2
            gy += pj * dx / r2
    ridge = np.degrees(np.arctan2(gy, gx)) - 90.0
    direction = ridge if pol > 0 else ridge + 180.0
    return float(wrap_angle(direction, 360.0))


def synth_print(spec, seed=0):
    """Render ``spec``; returns ``(image, ground_truth_minutiae)``.

    Noise is zero-mean Gaussian with ``spec.noise_sigma`` drawn from
    ``numpy.random.default_rng(seed)``; the ground truth never depends on it.
    """
    psi = phase_field(spec)
    image = spec.amplitude * np.cos(psi)
    # the phase is undefined at a singularity; a pixel sitting exactly on one is 0
    for x0, y0, _ in spec.minutiae:
        if float(x0).is_integer() and float(y0).is_integer():
            image[int(y0), int(x0)] = 0.0
    if spec.foreground is not None:
        fg = np.asarray(spec.foreground, dtype=bool)
        if fg.shape != image.shape:
            raise ValueError("foreground mask shape mismatch")
        image = np.where(fg, image, 0.0)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        image = image + rng.normal(0.0, spec.noise_sigma, size=image.shape)
    truth = [Minutia(float(x), float(y), ground_truth_direction(spec, i), 1.0)
             for i, (x, y, _) in enumerate(spec.minutiae)]
    return image, truth


def ellipse_mask(width, height, fill=0.8):
    """Centered elliptical foreground covering ``fill`` of each axis."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    rx, ry = fill * width / 2.0, fill * height / 2.0
    return ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0


def random_minutiae(rng, width, height, count, margin=40, min_dist=40, max_tries=10000):
    """Draw ``count`` integer (x, y, polarity) triples, pairwise >= min_dist apart."""
    placed: List[Tuple[float, float, int]] = []
    tries = 0
    while len(placed) < count:
        tries += 1
        if tries > max_tries:
            raise RuntimeError("could not place minutiae; relax margin or min_dist")
        x = int(rng.integers(margin, width - margin))
        y = int(rng.integers(margin, height - margin))
        if all((x - px) ** 2 + (y - py) ** 2 >= min_dist ** 2 for px, py, _ in placed):
            placed.append((x, y, 1 if len(placed) % 2 == 0 else -1))
    return placed


def synth_patch_dataset(n, seed=0, size=64):
    """Labeled patches: ridges (label 1) and flat/noise background (label 0).

    ``ceil(n / 2)`` ridge patches are crops from the interior of larger
    synthetic prints; the rest are noise around a random constant level.
    Returns ``(patches, labels)`` with shapes ``(n, size, size)`` and ``(n,)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    n_fg = (n + 1) // 2
    patches = np.empty((n, size, size))
    labels = np.zeros(n, dtype=np.int64)
    pad = 16
    for i in range(n):
        if i < n_fg:
            spec = SynthSpec(width=size + 2 * pad, height=size + 2 * pad,
                             orientation=float(rng.uniform(0, 180)),
                             period=float(rng.uniform(7.5, 11.0)),
                             global_phase=float(rng.uniform(0, 2 * np.pi)),
                             noise_sigma=float(rng.uniform(0.0, 0.4)),
                             amplitude=1.0)
            img, _ = synth_print(spec, seed=int(rng.integers(2 ** 31)))
            patches[i] = img[pad:pad + size, pad:pad + size]
            labels[i] = 1
        else:
            level = float(rng.uniform(-1.0, 1.0))
            sigma = float(rng.choice([0.0, rng.uniform(0.02, 0.3)]))
            patches[i] = level + rng.normal(0.0, sigma, size=(size, size)) if sigma > 0 \
                else np.full((size, size), level)
    return patches, labels


def ending_patch(direction, period=9.0, size=25):
    """A ``size x size`` clean print holding one ridge ending at its center.

    The ending ridge leaves the center along ``direction`` (degrees, [0, 360)):
    the winding sign puts the extra ridge on that side and the global phase
    makes the ray along ``direction`` a ridge crest.
    """
    c = size // 2
    theta = direction % 180.0
    polarity = 1 if direction % 360.0 < 180.0 else -1
    normal = np.radians(theta + 90.0)
    base_at_center = 2.0 * np.pi / period * c * (np.cos(normal) + np.sin(normal))
    spec = SynthSpec(width=size, height=size, orientation=theta, period=period,
                     global_phase=-base_at_center - polarity * np.radians(direction),
                     minutiae=[(c, c, polarity)])
    image, _ = synth_print(spec)
    return image, spec
