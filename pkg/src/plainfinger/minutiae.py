"""The Minutia record and its plain-text file format.

File format: optional ``#`` comment lines, then one minutia per line as
``x y direction_deg score`` with two decimal places.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import List

from .errors import ParseError


@dataclass(frozen=True)
class Minutia:
    x: float
    y: float
    direction: float  # degrees, [0, 360)
    score: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.direction < 360.0:
            raise ValueError(f"direction {self.direction} outside [0, 360)")


def format_minutia(m):
    direction = f"{m.direction:.2f}"
    if direction == "360.00":
        direction = "0.00"
    return f"{m.x:.2f} {m.y:.2f} {direction} {m.score:.2f}"


def write_minutiae(path, minutiae, comment=None):
    lines = []
    if comment:
        lines += [f"# {c}" for c in comment.splitlines()]
    lines += [format_minutia(m) for m in minutiae]
    Path(path).write_text("".join(line + "\n" for line in lines))


def parse_minutiae(text, path=None) -> List[Minutia]:
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 4:
            raise ParseError(f"expected 'x y direction score', got {len(parts)} fields", path, lineno)
        try:
            x, y, d, s = (float(p) for p in parts)
        except ValueError:
            raise ParseError("non-numeric field", path, lineno) from None
        if not 0.0 <= d < 360.0:
            raise ParseError(f"direction {d} outside [0, 360)", path, lineno)
        out.append(Minutia(x, y, d, s))
    return out


def read_minutiae(path):
    path = Path(path)
    return parse_minutiae(path.read_text(), path)
