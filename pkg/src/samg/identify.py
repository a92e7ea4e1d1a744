"""Build the per-task point-feature bundle from one annotated reference image.

A bundle stores, per task-relevant object, one pooled feature (the mean of
spatial-average and spatial-max pooling over the object's grid cells) and
three features fetched at human-labeled pixels, for both encoders, plus the
reference mask and the two mixing weights. Bundles are built once per task
and reused for every novel frame.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backends.base import EncoderBackend, FeatureGrid
from .coords import mask_to_grid, pixel_to_cell
from .core import (
    DEFAULT_WEIGHTS,
    AdaptedWeights,
    GridCell,
    pack_mask,
    unpack_mask,
    validate_image,
    validate_mask,
)

BUNDLE_FORMAT = "samg-bundle"
BUNDLE_VERSION = 1


class BundleError(ValueError):
    """Invalid annotation inputs or malformed bundle files."""


def _round9(x) -> float:
    """Canonical float: 9 significant decimal digits (idempotent)."""
    return float(f"{float(x):.9g}")


def _round9_vec(vec) -> np.ndarray:
    return np.array([_round9(v) for v in np.asarray(vec, dtype=np.float64).ravel()])


@dataclass(frozen=True)
class PointFeature:
    """One embedding-space descriptor of an object, for both encoders."""

    kind: str  # "type1" (pooled) or "type2" (fetched at a labeled pixel)
    seg_vec: np.ndarray
    ctx_vec: np.ndarray
    object_id: int
    source_cell: GridCell | None = None

    def __post_init__(self):
        if self.kind not in ("type1", "type2"):
            raise ValueError(f"bad point-feature kind {self.kind!r}")
        if (self.source_cell is not None) != (self.kind == "type2"):
            raise ValueError("type2 features carry a source cell, type1 features do not")
        for vec in (self.seg_vec, self.ctx_vec):
            if not np.all(np.isfinite(vec)):
                raise ValueError("point feature contains non-finite values")
        if not np.any(self.seg_vec) or not np.any(self.ctx_vec):
            raise BundleError(
                f"degenerate zero point feature for object {self.object_id}; "
                "the reference annotation selects featureless cells"
            )


@dataclass(frozen=True)
class BundleObject:
    object_id: int
    mask: np.ndarray
    type1: PointFeature
    type2: tuple

    def __post_init__(self):
        if len(self.type2) != 3:
            raise BundleError(
                f"object {self.object_id} has {len(self.type2)} labeled-point features; "
                "exactly 3 are required"
            )


@dataclass
class PointFeatureBundle:
    """Per-task store of point features; immutable except for the weights."""

    task_name: str
    reference_size: tuple  # (width, height)
    objects: list
    weights: AdaptedWeights = DEFAULT_WEIGHTS

    def feature_matrix(self, encoder: str) -> np.ndarray:
        """Stacked (4k, dim) feature matrix over all objects for one encoder."""
        attr = {"seg": "seg_vec", "ctx": "ctx_vec"}[encoder]
        rows = []
        for obj in self.objects:
            rows.append(getattr(obj.type1, attr))
            rows.extend(getattr(pf, attr) for pf in obj.type2)
        return np.stack(rows)

    def set_weights(self, weights: AdaptedWeights):
        self.weights = AdaptedWeights(_round9(weights.w1), _round9(weights.w2))


def fetch_type1(grid: FeatureGrid, mask) -> np.ndarray:
    """Pool the masked grid cells: per-dimension (mean + max) / 2.

    Pools only over cells the mask covers; zero-padding excluded cells would
    bias the mean toward zero.
    """
    mask = validate_mask(mask)
    cell_mask = mask_to_grid(mask)
    if not cell_mask.any():
        raise BundleError(
            "mask selects no grid cells after downsampling; provide a larger "
            "mask or a higher-resolution reference image"
        )
    cells = grid.values[cell_mask]  # (n, dim)
    return (cells.mean(axis=0) + cells.max(axis=0)) / 2.0


def fetch_type2(grid: FeatureGrid, point) -> tuple:
    """Embedding at the grid cell containing a reference-image pixel."""
    h, w = grid.source_size
    row, col = point
    if not (0 <= row < h and 0 <= col < w):
        raise BundleError(f"point ({row}, {col}) lies outside the {w}x{h} reference image")
    cell = pixel_to_cell(row, col, h, w)
    return np.array(grid.values[cell.row, cell.col]), cell


def build_bundle(image, masks, extra_points, backend: EncoderBackend, task_name="task",
                 weights: AdaptedWeights = DEFAULT_WEIGHTS) -> PointFeatureBundle:
    """Construct the bundle from the reference image, per-object masks and the
    3 labeled pixels per object.

    Labeled points must lie inside their object's mask: an off-object point
    would poison correspondence silently.
    """
    image = validate_image(image)
    if len(masks) < 1:
        raise BundleError("at least one object mask is required")
    if len(extra_points) != len(masks):
        raise BundleError(
            f"{len(masks)} object masks but labeled points for {len(extra_points)} objects"
        )

    seg_grid = backend.encode_segmenter(image)
    ctx_grid = backend.encode_context(image)

    objects = []
    for object_id, (mask, points) in enumerate(zip(masks, extra_points)):
        mask = validate_mask(mask, image.shape)
        if not mask.any():
            raise BundleError(f"object {object_id} has an empty mask")
        if len(points) != 3:
            raise BundleError(
                f"object {object_id} has {len(points)} labeled points; exactly 3 are required"
            )
        type1 = PointFeature(
            kind="type1",
            seg_vec=_round9_vec(fetch_type1(seg_grid, mask)),
            ctx_vec=_round9_vec(fetch_type1(ctx_grid, mask)),
            object_id=object_id,
        )
        type2 = []
        for index, point in enumerate(points):
            row, col = int(point[0]), int(point[1])
            if not (0 <= row < image.shape[0] and 0 <= col < image.shape[1]):
                raise BundleError(
                    f"object {object_id} point {index} ({row}, {col}) is outside the image"
                )
            if not mask[row, col]:
                raise BundleError(
                    f"object {object_id} point {index} ({row}, {col}) lies outside "
                    "the object mask"
                )
            seg_vec, cell = fetch_type2(seg_grid, (row, col))
            ctx_vec, _ = fetch_type2(ctx_grid, (row, col))
            type2.append(
                PointFeature(
                    kind="type2",
                    seg_vec=_round9_vec(seg_vec),
                    ctx_vec=_round9_vec(ctx_vec),
                    object_id=object_id,
                    source_cell=cell,
                )
            )
        objects.append(BundleObject(object_id, mask, type1, tuple(type2)))

    return PointFeatureBundle(
        task_name=task_name,
        reference_size=(image.shape[1], image.shape[0]),
        objects=objects,
        weights=AdaptedWeights(_round9(weights.w1), _round9(weights.w2)),
    )


# --- serialization ----------------------------------------------------------

def bundle_to_dict(bundle: PointFeatureBundle) -> dict:
    return {
        "format": BUNDLE_FORMAT,
        "format_version": BUNDLE_VERSION,
        "task_name": bundle.task_name,
        "reference_size": list(bundle.reference_size),
        "objects": [
            {
                "object_id": obj.object_id,
                "mask": pack_mask(obj.mask),
                "type1": {
                    "seg": list(obj.type1.seg_vec),
                    "ctx": list(obj.type1.ctx_vec),
                },
                "type2": [
                    {
                        "cell": [pf.source_cell.row, pf.source_cell.col],
                        "seg": list(pf.seg_vec),
                        "ctx": list(pf.ctx_vec),
                    }
                    for pf in obj.type2
                ],
            }
            for obj in bundle.objects
        ],
        "weights": {"w1": bundle.weights.w1, "w2": bundle.weights.w2},
    }


def bundle_to_bytes(bundle: PointFeatureBundle) -> bytes:
    """Canonical serialization: sorted keys, no whitespace, 9-digit floats."""
    return json.dumps(bundle_to_dict(bundle), sort_keys=True, separators=(",", ":")).encode()


def save_bundle(bundle: PointFeatureBundle, path):
    Path(path).write_bytes(bundle_to_bytes(bundle))


def bundle_from_dict(data) -> PointFeatureBundle:
    if not isinstance(data, dict) or data.get("format") != BUNDLE_FORMAT:
        raise BundleError("not a point-feature bundle file (bad or missing format marker)")
    if data.get("format_version") != BUNDLE_VERSION:
        raise BundleError(
            f"unsupported bundle version {data.get('format_version')!r}; "
            f"this build reads version {BUNDLE_VERSION}"
        )
    try:
        objects = []
        for entry in data["objects"]:
            object_id = int(entry["object_id"])
            mask = unpack_mask(entry["mask"])
            type1 = PointFeature(
                kind="type1",
                seg_vec=np.asarray(entry["type1"]["seg"], dtype=np.float64),
                ctx_vec=np.asarray(entry["type1"]["ctx"], dtype=np.float64),
                object_id=object_id,
            )
            type2 = tuple(
                PointFeature(
                    kind="type2",
                    seg_vec=np.asarray(pf["seg"], dtype=np.float64),
                    ctx_vec=np.asarray(pf["ctx"], dtype=np.float64),
                    object_id=object_id,
                    source_cell=GridCell(int(pf["cell"][0]), int(pf["cell"][1])),
                )
                for pf in entry["type2"]
            )
            objects.append(BundleObject(object_id, mask, type1, type2))
        bundle = PointFeatureBundle(
            task_name=str(data["task_name"]),
            reference_size=(int(data["reference_size"][0]), int(data["reference_size"][1])),
            objects=objects,
            weights=AdaptedWeights(float(data["weights"]["w1"]), float(data["weights"]["w2"])),
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        section = exc.args[0] if isinstance(exc, KeyError) else exc
        raise BundleError(f"malformed bundle: bad or missing section {section!r}") from exc
    if not bundle.objects:
        raise BundleError("malformed bundle: no objects")
    return bundle


def load_bundle(path) -> PointFeatureBundle:
    raw = Path(path).read_bytes()
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise BundleError(f"unparseable bundle file {path}: {exc}") from exc
    return bundle_from_dict(data)
