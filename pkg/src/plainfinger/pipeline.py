"""End-to-end extraction: normalize, orientation, segmentation, enhancement, extraction.

Configuration is a flat set of dotted ``key=value`` pairs (see ``DEFAULTS``);
``PipelineConfig`` groups them by stage.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from .enhancement import EnhancedMap, enhance_selective, gabor_bank, orientation_mask
from .errors import ConfigError, FingerError, ParseError, PipelineError, ShapeMismatch
from .extraction import MinutiaeMaps, encode_minutiae_maps, extract, template_bank
from .losses import DEFAULT_LOSS_NAMES, LossWeights
from .minutiae import Minutia
from .normalize import NormParams, normalize
from .orientation import (OrientationField, coherence, orientation_field, sample_cells,
                          sobel_gradients, structure_tensor)
from .raster import as_image, box_sum, upsample_nearest
from .segmentation import (DEFAULT_CLASSIFIER, DEFAULT_THRESHOLD, SegClassifier, SegmentationMap,
                           pool_map, seg_binarize, seg_classify, seg_features)

MIN_SIZE = 64

# Every config key with its default; the value's type is the key's type.
DEFAULTS = {
    "norm.m0": 0.0,
    "norm.v0": 1.0,
    "orientation.window": 16,
    "orientation.bins": 90,
    "orientation.stride": 8,
    "gabor.period": 9.0,
    "gabor.sigma": 4.5,
    "gabor.ksize": 25,
    "seg.enabled": True,
    "seg.w_coh": DEFAULT_CLASSIFIER.weights[0],
    "seg.w_mean": DEFAULT_CLASSIFIER.weights[1],
    "seg.w_var": DEFAULT_CLASSIFIER.weights[2],
    "seg.bias": DEFAULT_CLASSIFIER.bias,
    "seg.threshold": DEFAULT_THRESHOLD,
    "seg.stride": 8,
    "extract.K": 16,
    "extract.ksize": 25,
    "extract.threshold": 0.5,
    "extract.nms_radius": 16.0,
    "extract.margin": 16,
    "maps.dir_bins": 180,
    "maps.dir_sigma": 10.0,
}
DEFAULTS.update({f"loss.{name}": 1.0 for name in DEFAULT_LOSS_NAMES})


@dataclass(frozen=True)
class GaborConfig:
    period: float = 9.0
    sigma: float = 4.5
    ksize: int = 25
    bins: int = 90


@dataclass(frozen=True)
class SegConfig:
    classifier: SegClassifier = DEFAULT_CLASSIFIER
    threshold: float = DEFAULT_THRESHOLD
    stride: int = 8
    enabled: bool = True


@dataclass(frozen=True)
class ExtractConfig:
    K: int = 16
    ksize: int = 25
    threshold: float = 0.5
    nms_radius: float = 16.0
    margin: int = 16


@dataclass(frozen=True)
class PipelineConfig:
    norm: NormParams
    window_w: int
    orientation_bins: int
    orientation_stride: int
    gabor: GaborConfig
    seg: SegConfig
    extract: ExtractConfig
    dir_bins: int
    dir_sigma: float
    loss_weights: LossWeights

    def __post_init__(self):
        if self.gabor.bins != self.orientation_bins:
            raise ConfigError("Gabor bank size must equal orientation.bins")
        if self.window_w < 1 or self.orientation_stride < 1 or self.seg.stride < 1:
            raise ConfigError("window and strides must be >= 1")
        if not 0.0 < self.extract.threshold < 1.0:
            raise ConfigError("extract.threshold must lie in (0, 1)")
        if self.extract.margin < 0:
            raise ConfigError("extract.margin must be >= 0")

    def as_dict(self):
        d = {
            "norm.m0": self.norm.m0, "norm.v0": self.norm.v0,
            "orientation.window": self.window_w, "orientation.bins": self.orientation_bins,
            "orientation.stride": self.orientation_stride,
            "gabor.period": self.gabor.period, "gabor.sigma": self.gabor.sigma,
            "gabor.ksize": self.gabor.ksize,
            "seg.enabled": self.seg.enabled,
            "seg.w_coh": self.seg.classifier.weights[0],
            "seg.w_mean": self.seg.classifier.weights[1],
            "seg.w_var": self.seg.classifier.weights[2],
            "seg.bias": self.seg.classifier.bias,
            "seg.threshold": self.seg.threshold, "seg.stride": self.seg.stride,
            "extract.K": self.extract.K, "extract.ksize": self.extract.ksize,
            "extract.threshold": self.extract.threshold,
            "extract.nms_radius": self.extract.nms_radius, "extract.margin": self.extract.margin,
            "maps.dir_bins": self.dir_bins, "maps.dir_sigma": self.dir_sigma,
        }
        d.update({f"loss.{k}": v for k, v in self.loss_weights.weights.items()})
        return d


def config_from_dict(values=None):
    """Build a config from dotted keys; missing keys take ``DEFAULTS``."""
    values = dict(values or {})
    unknown = sorted(k for k in values if k not in DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    v = {**DEFAULTS, **values}
    try:
        return PipelineConfig(
            norm=NormParams(float(v["norm.m0"]), float(v["norm.v0"])),
            window_w=int(v["orientation.window"]),
            orientation_bins=int(v["orientation.bins"]),
            orientation_stride=int(v["orientation.stride"]),
            gabor=GaborConfig(float(v["gabor.period"]), float(v["gabor.sigma"]),
                              int(v["gabor.ksize"]), int(v["orientation.bins"])),
            seg=SegConfig(SegClassifier((float(v["seg.w_coh"]), float(v["seg.w_mean"]),
                                         float(v["seg.w_var"])), float(v["seg.bias"])),
                          float(v["seg.threshold"]), int(v["seg.stride"]), bool(v["seg.enabled"])),
            extract=ExtractConfig(int(v["extract.K"]), int(v["extract.ksize"]),
                                  float(v["extract.threshold"]), float(v["extract.nms_radius"]),
                                  int(v["extract.margin"])),
            dir_bins=int(v["maps.dir_bins"]),
            dir_sigma=float(v["maps.dir_sigma"]),
            loss_weights=LossWeights({k[5:]: float(x) for k, x in v.items() if k.startswith("loss.")}),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def default_config():
    return config_from_dict()


def parse_value(key, text):
    """Convert ``text`` to the type of ``DEFAULTS[key]``."""
    if key not in DEFAULTS:
        raise ConfigError(f"unknown config key: {key}")
    kind = type(DEFAULTS[key])
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    return kind(text)


def parse_config(text, path=None):
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ParseError("expected key=value", path, lineno)
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"{path or 'config'}:{lineno}: unknown key {key!r}")
        try:
            values[key] = parse_value(key, raw)
        except ValueError:
            raise ParseError(f"bad value for {key}: {raw.strip()!r}", path, lineno) from None
    return values


def load_config(path, overrides=None):
    """Read a key=value config file; ``overrides`` (already typed) win over the file."""
    path = Path(path)
    values = parse_config(path.read_text(), path)
    values.update(overrides or {})
    return config_from_dict(values)


def format_config(cfg):
    return "".join(f"{k}={v}\n" for k, v in cfg.as_dict().items())


# --- run ------------------------------------------------------------------------

@dataclass
class PipelineArtifacts:
    normalized: np.ndarray
    field: OrientationField   # sampled at orientation.stride, with coherence
    seg: SegmentationMap      # pooled to seg.stride
    seg_mask: np.ndarray      # binary, seg grid
    enhanced: EnhancedMap
    minutiae: List[Minutia]
    maps: MinutiaeMaps
    extraction_mask: Optional[np.ndarray] = None  # full resolution, after margins


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, kind, exc, tb):
        if exc is None or isinstance(exc, PipelineError):
            return False
        if isinstance(exc, (FingerError, ValueError, ArithmeticError)):
            raise PipelineError(self.name, exc) from exc
        return False


def extraction_region(seg_full, margin):
    """Foreground eroded by ``margin`` pixels (square), with the image border excluded."""
    mask = np.asarray(seg_full, dtype=bool)
    if margin <= 0:
        return mask
    h, w = mask.shape
    out = np.zeros_like(mask)
    if h <= 2 * margin or w <= 2 * margin:
        return out
    # a pixel survives iff its (2m+1)^2 neighborhood is all foreground
    k = 2 * margin + 1
    full = box_sum(mask.astype(np.float64), k) > k * k - 0.5
    out[margin:h - margin, margin:w - margin] = full[margin:h - margin, margin:w - margin]
    return out


def run(image, cfg=None):
    cfg = cfg or default_config()
    with _Stage("input"):
        image = as_image(image)
        if min(image.shape) < MIN_SIZE:
            raise ShapeMismatch(f"image {image.shape} smaller than {MIN_SIZE}x{MIN_SIZE}")
    h, w = image.shape
    with _Stage("normalize"):
        norm = normalize(image, cfg.norm)
    with _Stage("orientation"):
        gx, gy = sobel_gradients(norm)
        tensor = structure_tensor(gx, gy, cfg.window_w)
        full_field = orientation_field(tensor)
        coh = coherence(tensor)
        s = cfg.orientation_stride
        field = OrientationField(angles=sample_cells(full_field.angles, s), stride=s,
                                 coherence=sample_cells(coh, s))
    with _Stage("segmentation"):
        feats = seg_features(norm, tensor, cfg.window_w)
        seg = pool_map(seg_classify(feats, cfg.seg.classifier), cfg.seg.stride)
        if cfg.seg.enabled:
            seg_mask = seg_binarize(seg, cfg.seg.threshold)
        else:
            seg_mask = np.ones(seg.scores.shape, dtype=np.uint8)
        seg_full = upsample_nearest(seg_mask, cfg.seg.stride)[:h, :w].astype(bool)
    with _Stage("enhancement"):
        bank = gabor_bank(freq=1.0 / cfg.gabor.period, bins=cfg.gabor.bins,
                          sigma=cfg.gabor.sigma, ksize=cfg.gabor.ksize)
        enhanced = enhance_selective(norm, bank, orientation_mask(full_field, bank))
    with _Stage("extraction"):
        tb = template_bank(cfg.extract.K, cfg.extract.ksize, cfg.gabor.period)
        region = extraction_region(seg_full, cfg.extract.margin)
        found = extract(enhanced, tb, region, cfg.extract.threshold, cfg.extract.nms_radius)
    with _Stage("encoding"):
        maps = encode_minutiae_maps(found, w, h, bins=cfg.dir_bins, sigma=cfg.dir_sigma)
    return PipelineArtifacts(normalized=norm, field=field, seg=seg, seg_mask=seg_mask,
                             enhanced=enhanced, minutiae=found, maps=maps,
                             extraction_mask=region)
