"""Deterministic synthetic backend for tests and model-free runs.

The encoders embed each grid cell as a fixed random affine code of the color
sampled at the cell's center pixel (optionally with a low-amplitude 2-D
positional code in the last two dimensions; amplitude 0 by default so the
embedding is pointwise in color). Identical colors therefore produce identical
embeddings and cosine similarity 1, making correspondence exact on color-keyed
scenes.

The decoder grows 4-connected components of exactly-equal color from each
positive point, restricts to the box prompt when present, and vetoes the grid
cell footprint around each negative point. It emits three identical candidates
with equal scores, at source-frame resolution.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..coords import DECODER_SIDE, cell_center_pixel, input_box_to_pixels, input_to_pixel
from ..core import GRID_SIDE, validate_image
from .base import BackendError, EncoderBackend, FeatureGrid, MaskCandidates, PromptSet

LOGIT_AMPLITUDE = 8.0
CONTEXT_NATIVE_SIDE = 32  # context encoder's native grid, resized up to 64


_AXIS_WEIGHT_CACHE = {}


def _axis_weights(out_n, in_n):
    """Row-interpolation matrix for 1-D bilinear resampling (half-pixel
    centers, edge clamp)."""
    cached = _AXIS_WEIGHT_CACHE.get((out_n, in_n))
    if cached is not None:
        return cached
    t = (np.arange(out_n) + 0.5) * in_n / out_n - 0.5
    t0 = np.floor(t).astype(int)
    frac = t - t0
    w = np.zeros((out_n, in_n))
    lo = np.clip(t0, 0, in_n - 1)
    hi = np.clip(t0 + 1, 0, in_n - 1)
    np.add.at(w, (np.arange(out_n), lo), 1.0 - frac)
    np.add.at(w, (np.arange(out_n), hi), frac)
    _AXIS_WEIGHT_CACHE[(out_n, in_n)] = w
    return w


def bilinear_resize(values, out_rows, out_cols):
    """Bilinear upsampling with half-pixel centers and edge clamping.

    Separable: one interpolation matrix per axis, applied as matmuls; the
    result dtype follows the input dtype.
    """
    values = np.asarray(values)
    in_rows, in_cols, dim = values.shape
    wr = _axis_weights(out_rows, in_rows).astype(values.dtype)
    wc = _axis_weights(out_cols, in_cols).astype(values.dtype)
    tmp = np.tensordot(wr, values, axes=(1, 0))  # (out_rows, in_cols, dim)
    out = np.tensordot(wc, tmp, axes=(1, 1))  # (out_cols, out_rows, dim)
    return out.transpose(1, 0, 2)


def color_component(image, pixel):
    """4-connected component of pixels whose color exactly equals image[pixel]."""
    color = image[pixel[0], pixel[1]]
    same = np.all(image == color[None, None, :], axis=2)
    labels, _ = ndimage.label(same, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
    return labels == labels[pixel[0], pixel[1]]


class SyntheticBackend(EncoderBackend):
    """Color-keyed encoders plus a region-growing decoder; bit-deterministic."""

    name = "synthetic"

    def __init__(self, seg_dim=256, ctx_dim=768, seed=0, position_amplitude=0.0):
        if seg_dim < 3 or ctx_dim < 3:
            raise ValueError("synthetic encoder dims must be >= 3")
        self.seg_dim = seg_dim
        self.ctx_dim = ctx_dim
        self.position_amplitude = float(position_amplitude)
        rng = np.random.default_rng(seed)
        # affine lift [r, g, b, 1] keeps distinct colors on distinct directions
        self._seg_code = rng.normal(size=(4, seg_dim - 2))
        self._ctx_code = rng.normal(size=(4, ctx_dim - 2))

    # --- encoders ---------------------------------------------------------

    def _cell_colors(self, image, grid_side):
        h, w = image.shape[:2]
        rows = ((2 * np.arange(grid_side) + 1) * h) // (2 * grid_side)
        cols = ((2 * np.arange(grid_side) + 1) * w) // (2 * grid_side)
        return image[rows][:, cols].astype(np.float64) / 255.0

    def _embed(self, colors, code, grid_side):
        # centered colors keep distinct hues on well-separated directions;
        # with raw [0,1] colors the constant term dominates every code
        lifted = np.concatenate(
            [2.0 * colors - 1.0, np.ones(colors.shape[:2] + (1,))], axis=2
        )
        values = lifted @ code
        pos = np.zeros(colors.shape[:2] + (2,))
        if self.position_amplitude != 0.0:
            span = np.arange(grid_side) / (grid_side - 1) - 0.5
            pos[..., 0] = self.position_amplitude * span[:, None]
            pos[..., 1] = self.position_amplitude * span[None, :]
        return np.concatenate([values, pos], axis=2).astype(np.float32)

    def encode_segmenter(self, image) -> FeatureGrid:
        image = validate_image(image)
        colors = self._cell_colors(image, GRID_SIDE)
        values = self._embed(colors, self._seg_code, GRID_SIDE)
        return FeatureGrid(values, image.shape[:2], source_image=image.copy())

    def encode_context(self, image) -> FeatureGrid:
        image = validate_image(image)
        colors = self._cell_colors(image, CONTEXT_NATIVE_SIDE)
        native = self._embed(colors, self._ctx_code, CONTEXT_NATIVE_SIDE)
        values = bilinear_resize(native, GRID_SIDE, GRID_SIDE)
        return FeatureGrid(values, image.shape[:2])

    # --- decoder ----------------------------------------------------------

    def decode(self, image_embedding: FeatureGrid, prompts: PromptSet) -> MaskCandidates:
        if not prompts.positives:
            raise ValueError("decode requires at least one positive point prompt")
        image = image_embedding.source_image
        if image is None:
            raise BackendError(
                "synthetic decoder needs an embedding produced by this backend's "
                "segmenter encoder (source frame missing)"
            )
        h, w = image.shape[:2]
        if prompts.prior_logits is not None and prompts.prior_logits.shape != (h, w):
            raise BackendError(
                f"prior logits shape {prompts.prior_logits.shape} does not match frame {h}x{w}"
            )

        region = np.zeros((h, w), dtype=bool)
        for pixel in {input_to_pixel(p, h, w) for p in prompts.positives}:
            region |= color_component(image, pixel)
        if prompts.box is not None:
            box = input_box_to_pixels(prompts.box, h, w).clipped(h, w)
            inside = np.zeros((h, w), dtype=bool)
            inside[box.min_row : box.max_row + 1, box.min_col : box.max_col + 1] = True
            region &= inside

        logits = np.where(region, LOGIT_AMPLITUDE, -LOGIT_AMPLITUDE).astype(np.float32)
        for pixel in {input_to_pixel(p, h, w) for p in prompts.negatives}:
            r0, c0, r1, c1 = _cell_footprint(pixel, h, w)
            logits[r0 : r1 + 1, c0 : c1 + 1] = -LOGIT_AMPLITUDE

        return MaskCandidates(np.stack([logits] * 3), (1.0, 1.0, 1.0))


def _cell_footprint(pixel, height, width):
    """Pixel extent of the grid cell containing the given pixel."""
    cr = pixel[0] * GRID_SIDE // height
    cc = pixel[1] * GRID_SIDE // width
    r0 = -((-cr * height) // GRID_SIDE)
    r1 = -((-(cr + 1) * height) // GRID_SIDE) - 1
    c0 = -((-cc * width) // GRID_SIDE)
    c1 = -((-(cc + 1) * width) // GRID_SIDE) - 1
    return r0, c0, min(r1, height - 1), min(c1, width - 1)
