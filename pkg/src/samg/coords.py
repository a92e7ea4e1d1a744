"""Coordinate transforms between image pixels, the 64x64 embedding grid, and
decoder input space.

The mask decoder consumes points in its native input square (side 1024 for
SAM-style decoders), while prompt selection happens on the 64x64 similarity
grid. One grid cell therefore spans a 16x16 patch of decoder input space; a
cell maps to the center of its patch so quantization error is worst-case half
a cell. All maps below use integer arithmetic so the round trip
cell -> input point -> source pixel is exact and deterministic.
"""

from __future__ import annotations

import numpy as np

from .core import GRID_SIDE, BBox, GridCell

DECODER_SIDE = 1024
CELL_SPAN = DECODER_SIDE // GRID_SIDE  # 16


def pixel_to_cell(row, col, height, width) -> GridCell:
    """Map an image pixel to the grid cell containing it (floor scaling)."""
    if not (0 <= row < height and 0 <= col < width):
        raise ValueError(f"pixel ({row}, {col}) outside {height}x{width} image")
    return GridCell(int(row) * GRID_SIDE // height, int(col) * GRID_SIDE // width)


def cell_center_pixel(cell, height, width):
    """Image pixel at the center of a grid cell; inverse-ish of pixel_to_cell."""
    r, c = cell
    return ((2 * r + 1) * height // (2 * GRID_SIDE), (2 * c + 1) * width // (2 * GRID_SIDE))


def grid_to_input_coords(cell):
    """Center of a grid cell in decoder input coordinates: (row*16+8, col*16+8)."""
    r, c = cell
    if not (0 <= r < GRID_SIDE and 0 <= c < GRID_SIDE):
        raise ValueError(f"cell ({r}, {c}) outside the {GRID_SIDE}x{GRID_SIDE} grid")
    return (r * CELL_SPAN + CELL_SPAN // 2, c * CELL_SPAN + CELL_SPAN // 2)


def input_to_pixel(point, height, width):
    """Map a decoder-input point back to the source-image pixel (floor scaling)."""
    u, v = point
    r = min(max(int(u) * height // DECODER_SIDE, 0), height - 1)
    c = min(max(int(v) * width // DECODER_SIDE, 0), width - 1)
    return (r, c)


def grid_box_to_input(box: BBox) -> BBox:
    """Outer bounds, in decoder input space, of a box of grid cells."""
    return BBox(
        box.min_row * CELL_SPAN,
        box.min_col * CELL_SPAN,
        (box.max_row + 1) * CELL_SPAN - 1,
        (box.max_col + 1) * CELL_SPAN - 1,
    )


def input_box_to_pixels(box: BBox, height, width) -> BBox:
    """Pixels intersecting an inclusive decoder-input box.

    The box is read as the continuous region [min, max+1) so a pixel whose
    input-space extent straddles the box edge stays inside; otherwise boundary
    pixels of the covered cells would be clipped off.
    """
    r0 = max(box.min_row * height // DECODER_SIDE, 0)
    c0 = max(box.min_col * width // DECODER_SIDE, 0)
    r1 = min(-((-(box.max_row + 1) * height) // DECODER_SIDE) - 1, height - 1)
    c1 = min(-((-(box.max_col + 1) * width) // DECODER_SIDE) - 1, width - 1)
    return BBox(r0, c0, r1, c1)


def mask_to_grid(mask) -> np.ndarray:
    """Downsample a pixel mask to the 64x64 grid: any covered pixel sets the cell.

    The OR rule preserves thin structures that area-majority voting would erase.
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    grid = np.zeros((GRID_SIDE, GRID_SIDE), dtype=bool)
    rows, cols = np.nonzero(mask)
    if rows.size:
        grid[rows * GRID_SIDE // h, cols * GRID_SIDE // w] = True
    return grid
