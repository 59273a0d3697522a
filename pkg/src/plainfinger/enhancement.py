"""Selective Gabor enhancement.

A bank of complex Gabor filters, one per quantized ridge orientation, is
applied everywhere ("grouped phases"); a per-pixel mask then picks the channel
matching the local orientation. ``enhance_selective`` computes the same result
while only evaluating the selected channel at each pixel.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidKernel, KernelTooLarge, ShapeMismatch
from .raster import as_image, conv2d, upsample_nearest

AMPLITUDE_FLOOR = 1e-9


@dataclass(frozen=True)
class GaborBank:
    kernels: np.ndarray  # complex, (N, ksize, ksize)
    thetas: np.ndarray   # degrees, (N,)
    freq: float
    sigma: float

    @property
    def bins(self):
        return len(self.thetas)

    @property
    def ksize(self):
        return self.kernels.shape[-1]


@dataclass
class OrientationMask:
    """Channel-selection mask. Hard masks keep only the selected ``index`` raster."""
    bins: int
    index: Optional[np.ndarray] = None    # (H, W) int, hard mask
    weights: Optional[np.ndarray] = None  # (H, W, N), soft mask

    @property
    def shape(self):
        return (self.index if self.index is not None else self.weights).shape[:2]

    def dense(self):
        if self.weights is not None:
            return self.weights
        return (self.index[..., None] == np.arange(self.bins)).astype(np.float64)


@dataclass
class EnhancedMap:
    phase: np.ndarray
    amplitude: Optional[np.ndarray] = None

    def image(self):
        """The displayable enhanced print, ``cos(phase)``."""
        return np.cos(self.phase)


def gabor_kernel(theta, freq, sigma, ksize):
    """Complex Gabor whose wave vector is perpendicular to ridge angle ``theta`` (degrees)."""
    if ksize % 2 == 0 or ksize < 1:
        raise InvalidKernel(f"kernel size must be odd, got {ksize}")
    c = ksize // 2
    yy, xx = np.mgrid[-c:c + 1, -c:c + 1].astype(np.float64)
    normal = np.radians(theta + 90.0)
    envelope = np.exp(-(xx ** 2 + yy ** 2) / (2.0 * sigma ** 2))
    return envelope * np.exp(1j * 2.0 * np.pi * freq * (xx * np.cos(normal) + yy * np.sin(normal)))


def gabor_bank(freq=1.0 / 9.0, bins=90, sigma=4.5, ksize=25):
    if bins < 2:
        raise ValueError("a Gabor bank needs at least 2 orientations")
    if sigma <= 0 or freq <= 0:
        raise ValueError("sigma and freq must be > 0")
    if ksize % 2 == 0:
        raise InvalidKernel(f"kernel size must be odd, got {ksize}")
    thetas = (180 // bins) * np.arange(bins, dtype=np.float64)
    kernels = np.stack([gabor_kernel(t, freq, sigma, ksize) for t in thetas])
    return GaborBank(kernels=kernels, thetas=thetas, freq=freq, sigma=sigma)


def safe_arg(response):
    """``Arg`` in (-pi, pi], with ``Arg(z) = 0`` for ``|z| < AMPLITUDE_FLOOR``."""
    phase = np.angle(response)
    phase = np.where(phase <= -np.pi, np.pi, phase)
    return np.where(np.abs(response) < AMPLITUDE_FLOOR, 0.0, phase)


def grouped_phases(image, bank):
    """Convolve with every filter in the bank; returns ``(phases, amplitudes)``, each (H, W, N)."""
    image = as_image(image)
    if bank.ksize > min(image.shape):
        raise KernelTooLarge(f"Gabor kernel {bank.ksize} larger than image {image.shape}")
    h, w = image.shape
    phases = np.empty((h, w, bank.bins))
    amps = np.empty((h, w, bank.bins))
    for i, kernel in enumerate(bank.kernels):
        c = conv2d(image, kernel)
        phases[..., i] = safe_arg(c)
        amps[..., i] = np.abs(c)
    return phases, amps


def _nearest_bins(angles, thetas):
    n = len(thetas)
    step = thetas[1] - thetas[0]
    if step * n == 180.0:
        # uniform bins covering the half circle: ceil(q - 0.5) sends ties to the
        # lower index; the tie across the 180/0 seam also belongs to bin 0
        q = angles / step
        idx = np.mod(np.ceil(q - 0.5).astype(np.int64), n)
        return np.where(q == n - 0.5, 0, idx)
    d = np.abs(angles[..., None] - thetas)
    d = np.minimum(d, 180.0 - d)
    # argmin returns the first (lowest) index on ties
    return np.argmin(d, axis=-1)


def orientation_mask(field, bank, shape=None):
    """Hard mask selecting the bank channel circularly nearest to the local angle.

    Strided fields are upsampled (nearest) to full resolution and cropped to
    ``shape`` when given.
    """
    angles = np.asarray(field.angles, dtype=np.float64)
    if field.stride > 1:
        angles = upsample_nearest(angles, field.stride)
    if shape is not None:
        angles = angles[:shape[0], :shape[1]]
    return OrientationMask(bins=bank.bins, index=_nearest_bins(angles, bank.thetas))


def soft_orientation_mask(dist, bank=None):
    bins = dist.bins if bank is None else bank.bins
    if dist.bins != bins:
        raise ShapeMismatch(f"distribution has {dist.bins} bins, bank has {bins}")
    if dist.span != 180:
        raise ShapeMismatch("soft orientation mask needs a span-180 distribution")
    return OrientationMask(bins=bins, weights=np.asarray(dist.probs, dtype=np.float64))


def enhance(phases, mask, amplitudes=None):
    """``E = sum_i F[..., i] * M[..., i]``."""
    phases = np.asarray(phases)
    if phases.shape[:2] != tuple(mask.shape) or phases.shape[-1] != mask.bins:
        raise ShapeMismatch(f"phases {phases.shape} vs mask {mask.shape}x{mask.bins}")
    if mask.index is not None:
        sel = mask.index[..., None]
        e = np.take_along_axis(phases, sel, axis=-1)[..., 0]
        amp = None
        if amplitudes is not None:
            amp = np.take_along_axis(np.asarray(amplitudes), sel, axis=-1)[..., 0]
        return EnhancedMap(phase=e, amplitude=amp)
    e = np.sum(phases * mask.weights, axis=-1)
    return EnhancedMap(phase=e)


def _separable_factors(bank, i):
    """Point-reflected 1D factors (rows, cols) of Gabor kernel ``i``: k[v, u] = fy[v] * fx[u]."""
    k = bank.ksize
    c = k // 2
    t = np.arange(-c, c + 1, dtype=np.float64)
    normal = np.radians(bank.thetas[i] + 90.0)
    w = 2.0 * np.pi * bank.freq
    env = np.exp(-t ** 2 / (2.0 * bank.sigma ** 2))
    fy = env * np.exp(1j * w * np.sin(normal) * t)
    fx = env * np.exp(1j * w * np.cos(normal) * t)
    return fy[::-1], fx[::-1]


def enhance_selective(image, bank, mask, tile=32, region=None):
    """Hard-mask enhancement that evaluates only the selected filter at each pixel.

    Equal to ``enhance(*grouped_phases(image, bank), mask)`` up to rounding.
    Work is done per ``tile x tile`` block and per channel present in the
    block, using the row/column factorization of the Gabor kernel. With a
    boolean ``region`` only those pixels are filtered; the rest get phase 0
    and amplitude 0.
    """
    image = as_image(image)
    if mask.index is None:
        raise ValueError("selective enhancement needs a hard mask")
    if tuple(mask.shape) != image.shape:
        raise ShapeMismatch(f"mask {mask.shape} vs image {image.shape}")
    if region is not None:
        region = np.asarray(region, dtype=bool)
        if region.shape != image.shape:
            raise ShapeMismatch(f"region {region.shape} vs image {image.shape}")
    k = bank.ksize
    if k > min(image.shape):
        raise KernelTooLarge(f"Gabor kernel {k} larger than image {image.shape}")
    c = k // 2
    padded = np.pad(image, c, mode="edge")
    fy_all, fx_all = zip(*(_separable_factors(bank, i) for i in range(bank.bins)))
    fy_all, fx_all = np.array(fy_all), np.array(fx_all)
    h, w = image.shape
    response = np.zeros((h, w), dtype=np.complex128)
    for y0 in range(0, h, tile):
        y1 = min(y0 + tile, h)
        for x0 in range(0, w, tile):
            x1 = min(x0 + tile, w)
            sel = mask.index[y0:y1, x0:x1]
            if region is not None:
                keep = region[y0:y1, x0:x1]
                if not keep.any():
                    continue
                chans = np.unique(sel[keep])
            else:
                keep = None
                chans = np.unique(sel)
            region_px = padded[y0:y1 + k - 1, x0:x1 + k - 1]
            th, tw = y1 - y0, x1 - x0
            # row pass for every channel at once: (th + k - 1, tw, nc)
            rows = sliding_window_view(region_px, k, axis=1) @ fx_all[chans].T
            cols = sliding_window_view(rows, k, axis=0)  # (th, tw, nc, k)
            slot = np.searchsorted(chans, sel)
            if keep is not None:
                slot = np.where(keep, slot, 0)
            yy, xx = np.indices((th, tw))
            out = np.einsum("yxk,yxk->yx", cols[yy, xx, slot], fy_all[chans][slot])
            if keep is not None:
                out = np.where(keep, out, 0.0)
            response[y0:y1, x0:x1] = out
    return EnhancedMap(phase=safe_arg(response), amplitude=np.abs(response))


def to_display(enhanced):
    """Map ``cos(E)`` from [-1, 1] to [0, 255] for PGM output."""
    return (np.cos(enhanced.phase) + 1.0) / 2.0 * 255.0
