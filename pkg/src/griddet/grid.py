"""Generation of the initial multi-scale grid of overlapping boxes."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .boxes import Box

# Guards against float noise in stride counts like (128-64)/6.4.
_EPS = 1e-9


class EmptyGridError(ValueError):
    """A scale produced no boxes (cell larger than the image)."""


@dataclass(frozen=True)
class GridSpec:
    """Multi-scale grid layout.

    At scale k the cell is (W/k, H/k); an overlap of alpha means the
    horizontal/vertical strides are cell * (1 - alpha).
    """

    scales: tuple[int, ...]
    overlaps: tuple[float, ...]

    def __post_init__(self):
        if not self.scales:
            raise ValueError("scales must be non-empty")
        if any(int(k) != k or k <= 0 for k in self.scales):
            raise ValueError(f"scales must be positive integers, got {self.scales}")
        if len(self.overlaps) != len(self.scales):
            raise ValueError("overlaps must have the same length as scales")
        if any(not (0.0 <= a < 1.0) for a in self.overlaps):
            raise ValueError(f"overlaps must lie in [0, 1), got {self.overlaps}")


def _axis_count(dim: float, cell: float, stride: float) -> int:
    if cell > dim + _EPS:
        return 0
    return int(math.floor((dim - cell) / stride + _EPS)) + 1


def generate_grid(spec: GridSpec, image_width: float, image_height: float) -> list[Box]:
    """Place the grid boxes for every scale, coarse to fine, row-major.

    Boxes are placed with top-left corners at integer multiples of the stride
    and only where the box lies fully inside the image; boxes that would
    extend past the border are not generated.
    """
    if image_width <= 0 or image_height <= 0:
        raise ValueError("image dimensions must be positive")
    boxes: list[Box] = []
    for k, alpha in zip(spec.scales, spec.overlaps):
        cell_w = image_width / k
        cell_h = image_height / k
        stride_x = cell_w * (1.0 - alpha)
        stride_y = cell_h * (1.0 - alpha)
        nx = _axis_count(image_width, cell_w, stride_x)
        ny = _axis_count(image_height, cell_h, stride_y)
        if nx == 0 or ny == 0:
            raise EmptyGridError(f"scale {k} yields no boxes in a "
                                 f"{image_width}x{image_height} image")
        for j in range(ny):
            y1 = j * stride_y
            for i in range(nx):
                x1 = i * stride_x
                boxes.append(Box(cx=x1 + cell_w / 2.0, cy=y1 + cell_h / 2.0,
                                 w=cell_w, h=cell_h))
    return boxes
