"""Rasterize label grids to RGBA PNGs with registry-stable colors."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .cells import LabelGrid, color_of


@dataclass(frozen=True)
class RenderOptions:
    """Output size (defaults to one pixel per sample) and overlays."""

    width: int | None = None
    height: int | None = None
    overlay_tx: bool = False
    tx: tuple[float, float] | None = None
    background: tuple[int, int, int, int] = (0, 0, 0, 0)

    def __post_init__(self) -> None:
        for dim in (self.width, self.height):
            if dim is not None and dim < 1:
                raise ValueError("render dimensions must be positive")


def render_mlm(grid: LabelGrid, options: RenderOptions = RenderOptions()) -> bytes:
    """PNG bytes for a label grid, row 0 at maximum y.

    Every pixel takes exactly the color of its sample's cell; upscaling is
    nearest-neighbour so cell boundaries stay crisp. Output bytes depend on
    nothing but the grid content and the options.
    """
    uniq, inverse = grid.unique_inverse()
    palette = np.array(
        [color_of(grid.wrap(row.tobytes())) for row in uniq], dtype=np.uint8
    ).reshape(-1, 4)
    img = palette[inverse][::-1]

    if options.background[3] != 0:
        transparent = img[..., 3] == 0
        img = img.copy()
        img[transparent] = np.array(options.background, dtype=np.uint8)

    width = options.width or grid.nx
    height = options.height or grid.ny
    if (width, height) != (grid.nx, grid.ny):
        col = np.floor((np.arange(width) + 0.5) * grid.nx / width).astype(np.int64)
        row = np.floor((np.arange(height) + 0.5) * grid.ny / height).astype(np.int64)
        img = img[row][:, col]
    elif options.background[3] == 0:
        img = img.copy()

    if options.overlay_tx and options.tx is not None:
        _draw_marker(img, grid, options.tx, width, height)

    image = Image.fromarray(img, mode="RGBA")
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()


def _draw_marker(
    img: np.ndarray,
    grid: LabelGrid,
    tx: tuple[float, float],
    width: int,
    height: int,
) -> None:
    """Black-ringed white disc at the TX position, if inside the grid."""
    xmin = grid.origin[0] - 0.5 * grid.pitch_x
    ymin = grid.origin[1] - 0.5 * grid.pitch_y
    fx = (tx[0] - xmin) / (grid.nx * grid.pitch_x)
    fy = (tx[1] - ymin) / (grid.ny * grid.pitch_y)
    if not (0.0 <= fx <= 1.0 and 0.0 <= fy <= 1.0):
        return
    cx = fx * width
    cy = (1.0 - fy) * height
    radius = max(2.0, min(width, height) / 60.0)
    # the white core keeps at least half the radius so it survives tiny markers
    core = max(radius - 1.5, 0.5 * radius)
    yy, xx = np.mgrid[0:height, 0:width]
    dist = np.hypot(xx + 0.5 - cx, yy + 0.5 - cy)
    img[dist <= radius] = (0, 0, 0, 255)
    img[dist <= core] = (255, 255, 255, 255)
