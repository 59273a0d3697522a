"""Global mean/variance intensity normalization."""
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateImage
from .raster import as_image


@dataclass(frozen=True)
class NormParams:
    m0: float = 0.0
    v0: float = 1.0

    def __post_init__(self):
        if not self.v0 > 0:
            raise ValueError(f"desired variance must be > 0, got {self.v0}")


def normalize(image, params=NormParams()):
    """Map every pixel to ``m0 +/- sqrt((I - m)^2 * v0 / v)``.

    The sign is ``+`` for pixels strictly above the image mean ``m`` and ``-``
    otherwise, so a pixel equal to ``m`` lands exactly on ``m0``.
    """
    image = as_image(image)
    m = image.mean()
    v = image.var()
    if not v > 0:
        raise DegenerateImage("image has zero variance; cannot normalize")
    dev = np.sqrt((image - m) ** 2 * params.v0 / v)
    return np.where(image > m, params.m0 + dev, params.m0 - dev)
