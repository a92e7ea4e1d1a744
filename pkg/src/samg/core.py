"""Shared numeric/geometric types and elementary mask utilities.

Conventions used across the package:

* an image is a ``(H, W, 3)`` uint8 array, RGB, row-major;
* a binary mask is a ``(H, W)`` bool array aligned with the image it annotates;
* points are ``(row, col)`` pairs unless a function says otherwise.
"""

from __future__ import annotations

import base64
from typing import NamedTuple

import numpy as np
from PIL import Image as PILImage

GRID_SIDE = 64  # side of the embedding / similarity grid


class GridCell(NamedTuple):
    """Index into the 64x64 embedding grid."""

    row: int
    col: int


class AdaptedWeights(NamedTuple):
    """The two tuned mixing scalars; the third coefficient is implied.

    Unconstrained reals: the weighted candidate sum places 1 - w1 - w2 on the
    third candidate, so the coefficients always sum to one.
    """

    w1: float
    w2: float

    @property
    def w3(self) -> float:
        return 1.0 - self.w1 - self.w2


DEFAULT_WEIGHTS = AdaptedWeights(1.0 / 3.0, 1.0 / 3.0)


class BBox(NamedTuple):
    """Axis-aligned box, inclusive pixel (or cell) bounds."""

    min_row: int
    min_col: int
    max_row: int
    max_col: int

    def clipped(self, height, width):
        return BBox(
            max(self.min_row, 0),
            max(self.min_col, 0),
            min(self.max_row, height - 1),
            min(self.max_col, width - 1),
        )


def validate_image(image) -> np.ndarray:
    """Check image shape/dtype and return it as a contiguous uint8 array."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) RGB image, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"image must be at least 1x1, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise ValueError(f"expected uint8 image, got dtype {arr.dtype}")
    return np.ascontiguousarray(arr)


def validate_mask(mask, image_shape=None) -> np.ndarray:
    """Check mask shape/dtype, optionally against an image's (H, W)."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"expected (H, W) mask, got shape {arr.shape}")
    if arr.dtype != np.bool_:
        if arr.dtype == np.uint8:
            arr = arr > 0
        else:
            raise ValueError(f"expected bool mask, got dtype {arr.dtype}")
    if image_shape is not None and arr.shape != tuple(image_shape[:2]):
        raise ValueError(
            f"mask shape {arr.shape} does not match image shape {tuple(image_shape[:2])}"
        )
    return arr


def mask_to_bbox(mask) -> BBox:
    """Tightest box containing all set bits; full-image box for an empty mask.

    The empty-mask fallback keeps refinement loops total: a failed pass widens
    the search instead of aborting it.
    """
    mask = validate_mask(mask)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return BBox(0, 0, mask.shape[0] - 1, mask.shape[1] - 1)
    cols = np.flatnonzero(mask.any(axis=0))
    return BBox(int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1]))


def iou(a, b) -> float:
    """Intersection over union of two equal-size masks; 1.0 when both empty."""
    a = validate_mask(a)
    b = validate_mask(b)
    if a.shape != b.shape:
        raise ValueError(f"mask dimensions differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def apply_mask(image, mask) -> np.ndarray:
    """Keep pixels where the mask is set, zero (black) everywhere else."""
    image = validate_image(image)
    mask = validate_mask(mask, image.shape)
    out = np.zeros_like(image)
    out[mask] = image[mask]
    return out


# --- serialization helpers -------------------------------------------------

def pack_mask(mask) -> dict:
    """Mask -> JSON-friendly dict with a base64 row-major 1-bit-per-pixel field."""
    mask = validate_mask(mask)
    h, w = mask.shape
    bits = np.packbits(mask.reshape(-1).astype(np.uint8))
    return {"width": w, "height": h, "bits": base64.b64encode(bits.tobytes()).decode("ascii")}


def unpack_mask(payload) -> np.ndarray:
    try:
        w = int(payload["width"])
        h = int(payload["height"])
        raw = base64.b64decode(payload["bits"], validate=True)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed mask payload: {exc}") from exc
    if w < 1 or h < 1:
        raise ValueError(f"bad mask dimensions {w}x{h}")
    expected = (w * h + 7) // 8
    if len(raw) != expected:
        raise ValueError(f"mask bitfield has {len(raw)} bytes, expected {expected}")
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=w * h)
    return bits.astype(bool).reshape(h, w)


def save_mask_png(mask, path):
    """Write a mask as a single-channel PNG with values {0, 255}."""
    mask = validate_mask(mask)
    PILImage.fromarray(mask.astype(np.uint8) * 255, mode="L").save(path, format="PNG")


def load_mask_png(path) -> np.ndarray:
    img = PILImage.open(path).convert("L")
    return np.asarray(img) > 127


def save_image_png(image, path):
    PILImage.fromarray(validate_image(image), mode="RGB").save(path, format="PNG")


def load_image(path) -> np.ndarray:
    img = PILImage.open(path).convert("RGB")
    return validate_image(np.asarray(img))
