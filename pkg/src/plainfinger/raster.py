"""Raster primitives: 2D convolution, box sums, nearest upsampling and PGM I/O.

Images are plain ``float64`` numpy arrays of shape ``(height, width)``.
Kernels are small 2D arrays; their origin is the tap at ``(kh // 2, kw // 2)``.
"""
from pathlib import Path

import numpy as np

from .errors import InvalidFactor, KernelTooLarge, ParseError, ShapeMismatch

PADDING_MODES = ("replicate", "zero")


def as_image(image, name="image"):
    """Return ``image`` as a finite 2D float64 array, or raise ShapeMismatch."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeMismatch(f"{name} must be a non-empty 2D raster, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _pad(image, top, bottom, left, right, pad):
    if pad == "replicate":
        return np.pad(image, ((top, bottom), (left, right)), mode="edge")
    if pad == "zero":
        return np.pad(image, ((top, bottom), (left, right)), mode="constant")
    raise ValueError(f"unknown padding mode {pad!r}; expected one of {PADDING_MODES}")


def conv2d(image, kernel, pad="replicate"):
    """True 2D convolution (kernel flipped), same-size output.

    ``out[y, x] = sum_{v,u} kernel[v, u] * image[y - (v - cy), x - (u - cx)]``
    with ``(cy, cx) = (kh // 2, kw // 2)``; out-of-range pixels come from ``pad``.
    Works for real or complex kernels. Even-sized kernels are accepted so that
    ``box_sum`` with an even window has a convolution counterpart.
    """
    image = np.asarray(image)
    kernel = np.asarray(kernel)
    if image.ndim != 2 or kernel.ndim != 2:
        raise ShapeMismatch("conv2d expects 2D image and kernel")
    h, w = image.shape
    kh, kw = kernel.shape
    if kh > h or kw > w:
        raise KernelTooLarge(f"kernel {kh}x{kw} larger than image {h}x{w}")
    cy, cx = kh // 2, kw // 2
    top, left = kh - 1 - cy, kw - 1 - cx
    padded = _pad(image, top, cy, left, cx, pad)
    dtype = np.result_type(image.dtype, kernel.dtype, np.float64)
    out = np.zeros((h, w), dtype=dtype)
    for v in range(kh):
        r0 = top - (v - cy)
        for u in range(kw):
            tap = kernel[v, u]
            if tap == 0:
                continue
            c0 = left - (u - cx)
            out += tap * padded[r0:r0 + h, c0:c0 + w]
    return out


def _window_sum_axis(arr, w, axis):
    # window [i - (w - 1 - w//2), i + w//2] along axis, replicate padded
    c = w // 2
    lo = w - 1 - c
    n = arr.shape[axis]
    pad = [(0, 0), (0, 0)]
    pad[axis] = (lo, c)
    padded = np.pad(arr, pad, mode="edge")
    out = np.zeros_like(arr, dtype=np.float64)
    for k in range(w):
        sl = [slice(None), slice(None)]
        sl[axis] = slice(k, k + n)
        out += padded[tuple(sl)]
    return out


def box_sum(image, w):
    """Windowed sum over a ``w x w`` all-ones kernel with replicate padding.

    Same result as ``conv2d(image, np.ones((w, w)))``, computed separably.
    """
    image = as_image(image)
    if w < 1:
        raise ValueError("window size must be >= 1")
    if w > min(image.shape):
        raise KernelTooLarge(f"window {w} larger than image {image.shape}")
    return _window_sum_axis(_window_sum_axis(image, w, 0), w, 1)


def upsample_nearest(image, factor):
    """Replicate every pixel into a ``factor x factor`` block."""
    if factor < 1:
        raise InvalidFactor(f"upsampling factor must be >= 1, got {factor}")
    arr = np.asarray(image)
    return np.repeat(np.repeat(arr, factor, axis=0), factor, axis=1)


def block_average(image, factor):
    """Mean over non-overlapping ``factor x factor`` blocks (ceil-sized, partial edge blocks)."""
    if factor < 1:
        raise InvalidFactor(f"block factor must be >= 1, got {factor}")
    arr = np.asarray(image, dtype=np.float64)
    h, w = arr.shape
    ch, cw = -(-h // factor), -(-w // factor)
    sums = np.zeros((ch, cw))
    counts = np.zeros((ch, cw))
    rows = np.arange(h) // factor
    cols = np.arange(w) // factor
    np.add.at(sums, (rows[:, None], cols[None, :]), arr)
    np.add.at(counts, (rows[:, None], cols[None, :]), 1.0)
    return sums / counts


# --- PGM ---------------------------------------------------------------------

def _pgm_tokens(data, path):
    """Yield (token, end offset) pairs from a PGM header, skipping comments."""
    i = 0
    n = len(data)
    while i < n:
        ch = data[i:i + 1]
        if ch == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif ch.isspace():
            i += 1
        else:
            start = i
            while i < n and not data[i:i + 1].isspace() and data[i:i + 1] != b"#":
                i += 1
            yield data[start:i], i


def read_pgm(path):
    """Read an 8-bit P2 or P5 PGM file into a float64 array in [0, 255]."""
    path = Path(path)
    data = path.read_bytes()
    tokens = _pgm_tokens(data, path)
    try:
        magic, _ = next(tokens)
        if magic not in (b"P2", b"P5"):
            raise ParseError(f"unsupported magic {magic!r}", path, 1)
        width = int(next(tokens)[0])
        height = int(next(tokens)[0])
        maxval_tok, end = next(tokens)
        maxval = int(maxval_tok)
    except StopIteration:
        raise ParseError("truncated header", path) from None
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"bad header value ({exc})", path) from None
    if width < 1 or height < 1:
        raise ParseError("image dimensions must be positive", path)
    if not 0 < maxval <= 255:
        raise ParseError(f"only 8-bit PGM supported (maxval {maxval})", path)

    count = width * height
    if magic == b"P5":
        raster = data[end + 1:end + 1 + count]
        if len(raster) != count:
            raise ParseError(f"expected {count} bytes of pixel data, got {len(raster)}", path)
        pixels = np.frombuffer(raster, dtype=np.uint8).astype(np.float64)
    else:
        values = [int(tok) for tok, _ in tokens]
        if len(values) != count:
            raise ParseError(f"expected {count} pixel values, got {len(values)}", path)
        pixels = np.asarray(values, dtype=np.float64)
    if pixels.max(initial=0) > maxval:
        raise ParseError("pixel value exceeds maxval", path)
    pixels = pixels.reshape(height, width)
    if maxval != 255:
        pixels = pixels * (255.0 / maxval)
    return pixels


def to_uint8(image):
    """Clamp to [0, 255] and round half up."""
    arr = np.asarray(image, dtype=np.float64)
    return np.floor(np.clip(arr, 0.0, 255.0) + 0.5).astype(np.uint8)


def write_pgm(path, image, binary=True):
    """Write ``image`` (values in [0, 255]) as an 8-bit PGM, P5 by default."""
    pixels = to_uint8(image)
    if pixels.ndim != 2:
        raise ShapeMismatch("PGM output must be 2D")
    h, w = pixels.shape
    if binary:
        payload = f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()
    else:
        lines = [f"P2\n{w} {h}\n255"]
        lines += [" ".join(str(v) for v in row) for row in pixels]
        payload = ("\n".join(lines) + "\n").encode("ascii")
    Path(path).write_bytes(payload)
