"""Segment novel frames via correspondence with the stored point features.

Per frame: encode once with both encoders, then per object build four fused
similarity maps (one per point feature), pick point prompts from their
extrema, and run three decoder passes. Pass 1 carries 5 point prompts (4
positives from the map maxima, 1 negative from the pooled-feature map
minimum). Between passes the candidate logits are mixed with the bundle's two
weights into a rough mask whose grid-space bounding box yields both a box
prompt and one extra in-box negative, so passes 2 and 3 carry 6 and 7 points
plus one box and one prior-logits grid each. The final mask is the
highest-scoring candidate of pass 3, thresholded at zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backends.base import BackendError, EncoderBackend, FeatureGrid, MaskCandidates, PromptSet
from .coords import grid_box_to_input, grid_to_input_coords, mask_to_grid
from .core import AdaptedWeights, BBox, GridCell, apply_mask, mask_to_bbox, validate_image


@dataclass(frozen=True)
class SimilarityMap:
    """64x64 fused cosine map between one point feature and a frame's grids."""

    values: np.ndarray  # float32, in [-1, 1]
    source: str  # "type1" | "type2"
    object_id: int

    def argmax_cell(self) -> GridCell:
        r, c = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return GridCell(int(r), int(c))

    def argmin_cell(self) -> GridCell:
        r, c = np.unravel_index(int(np.argmin(self.values)), self.values.shape)
        return GridCell(int(r), int(c))


@dataclass
class PassDiagnostics:
    prompts: PromptSet
    scores: tuple
    box_grid: BBox | None = None

    def to_dict(self):
        return {
            "positives": [list(p) for p in self.prompts.positives],
            "negatives": [list(p) for p in self.prompts.negatives],
            "point_count": self.prompts.point_count,
            "has_box": self.prompts.box is not None,
            "has_prior_logits": self.prompts.prior_logits is not None,
            "scores": list(self.scores),
        }


@dataclass
class ObjectDiagnostics:
    object_id: int
    passes: list
    final_candidate: int

    def to_dict(self):
        return {
            "object_id": self.object_id,
            "passes": [p.to_dict() for p in self.passes],
            "final_candidate": self.final_candidate,
        }


@dataclass
class SegmentationResult:
    object_masks: list
    union_mask: np.ndarray
    masked_frame: np.ndarray
    diagnostics: list

    def to_debug_dict(self):
        return {"objects": [d.to_dict() for d in self.diagnostics]}


def _unit_rows(values):
    """L2-normalize vectors along the last axis; zero vectors stay zero."""
    v = np.asarray(values, dtype=np.float64)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.divide(v, norms, out=np.zeros_like(v), where=norms > 0)


def _fused_maps(features, seg_grid, ctx_grid):
    """Fused cosine maps for a batch of point features (one gemm per encoder)."""
    seg_vecs = _unit_rows(np.stack([pf.seg_vec for pf in features]))
    ctx_vecs = _unit_rows(np.stack([pf.ctx_vec for pf in features]))
    cos_seg = seg_grid.unit_values @ seg_vecs.T  # (64, 64, n)
    cos_ctx = ctx_grid.unit_values @ ctx_vecs.T
    fused = (0.5 * (cos_seg + cos_ctx)).astype(np.float32)
    return [
        SimilarityMap(np.ascontiguousarray(fused[..., i]), pf.kind, pf.object_id)
        for i, pf in enumerate(features)
    ]


def similarity_map(pf, seg_grid: FeatureGrid, ctx_grid: FeatureGrid) -> SimilarityMap:
    """Mean of the two encoders' per-cell cosine similarities to a point feature.

    Vectors are normalized (in float64) before the inner product, so the map
    is invariant to positive rescaling of the point feature; the result is
    quantized to float32.
    """
    return _fused_maps([pf], seg_grid, ctx_grid)[0]


def object_similarity_maps(obj, seg_grid, ctx_grid) -> list:
    """The object's 4 maps: pooled feature first, then the 3 labeled-point maps."""
    return _fused_maps([obj.type1, *obj.type2], seg_grid, ctx_grid)


def select_prompts(obj, sim_maps) -> PromptSet:
    """Pass-1 prompts: the 4 map maxima as positives plus the pooled-feature
    map minimum as the single negative.

    Only the pooled-feature map contributes a negative: the labeled-point maps
    describe one part of the object, so their minima can land on another part
    of it. Ties break to the first cell in row-major order.
    """
    if len(sim_maps) != 4:
        raise ValueError(f"expected 4 similarity maps per object, got {len(sim_maps)}")
    positives = tuple(grid_to_input_coords(m.argmax_cell()) for m in sim_maps)
    negatives = (grid_to_input_coords(sim_maps[0].argmin_cell()),)
    return PromptSet(positives=positives, negatives=negatives)


def refine_negative(type1_map: SimilarityMap, box: BBox) -> GridCell:
    """Least-similar cell of the pooled-feature map within a grid-space box."""
    window = type1_map.values[box.min_row : box.max_row + 1, box.min_col : box.max_col + 1]
    if window.size == 0:
        raise ValueError(f"empty box {box}")
    r, c = np.unravel_index(int(np.argmin(window)), window.shape)
    return GridCell(box.min_row + int(r), box.min_col + int(c))


def weighted_logits(mc: MaskCandidates, w: AdaptedWeights) -> np.ndarray:
    """w1*M1 + w2*M2 + (1 - w1 - w2)*M3, elementwise."""
    return _weighted(mc.logits, w)


def _weighted(logits, w: AdaptedWeights):
    return w.w1 * logits[0] + w.w2 * logits[1] + (1.0 - w.w1 - w.w2) * logits[2]


def _rough_box_grid(mc: MaskCandidates, w: AdaptedWeights) -> BBox:
    """Grid-space bbox of the thresholded weighted sum; full grid when empty."""
    rough = weighted_logits(mc, w) > 0
    return mask_to_bbox(mask_to_grid(rough))


def _feedback_logits(mc: MaskCandidates, w: AdaptedWeights) -> np.ndarray:
    src = mc.low_res_logits if mc.low_res_logits is not None else mc.logits
    return _weighted(src, w)


def _decode(backend, seg_grid, prompts, pass_index):
    try:
        return backend.decode(seg_grid, prompts)
    except BackendError as exc:
        raise BackendError(f"decoder pass {pass_index} failed: {exc}") from exc


def segment_object(seg_grid: FeatureGrid, ctx_grid: FeatureGrid, obj, weights: AdaptedWeights,
                   backend: EncoderBackend, maps=None):
    """Run the three refinement passes for one object.

    Returns the final binary mask (highest-scoring pass-3 candidate, logits
    thresholded at zero) and per-pass diagnostics. ``maps`` may carry the
    object's 4 precomputed similarity maps.
    """
    if maps is None:
        maps = object_similarity_maps(obj, seg_grid, ctx_grid)
    type1_map = maps[0]

    prompts = select_prompts(obj, maps)
    mc = _decode(backend, seg_grid, prompts, 1)
    passes = [PassDiagnostics(prompts, mc.scores)]

    negatives = list(prompts.negatives)
    for pass_index in (2, 3):
        box_grid = _rough_box_grid(mc, weights)
        negatives.append(grid_to_input_coords(refine_negative(type1_map, box_grid)))
        prompts = PromptSet(
            positives=prompts.positives,
            negatives=tuple(negatives),
            box=grid_box_to_input(box_grid),
            prior_logits=_feedback_logits(mc, weights),
        )
        mc = _decode(backend, seg_grid, prompts, pass_index)
        passes.append(PassDiagnostics(prompts, mc.scores, box_grid=box_grid))

    final_idx = int(np.argmax(mc.scores))
    mask = mc.logits[final_idx] > 0
    h, w = seg_grid.source_size
    if mask.shape != (h, w):
        mask = _resize_mask_nearest(mask, h, w)
    return mask, ObjectDiagnostics(obj.object_id, passes, final_idx)


def segment_frame(frame, bundle, backend: EncoderBackend) -> SegmentationResult:
    """Segment every bundle object in one frame and compose the results."""
    frame = validate_image(frame)
    if not bundle.objects:
        raise ValueError("bundle has no objects")
    seg_grid = backend.encode_segmenter(frame)
    ctx_grid = backend.encode_context(frame)

    # one batched similarity computation for all objects' features
    features = []
    for obj in bundle.objects:
        features.extend([obj.type1, *obj.type2])
    all_maps = _fused_maps(features, seg_grid, ctx_grid)

    object_masks = []
    diagnostics = []
    for index, obj in enumerate(bundle.objects):
        maps = all_maps[4 * index : 4 * index + 4]
        mask, diag = segment_object(seg_grid, ctx_grid, obj, bundle.weights, backend, maps=maps)
        object_masks.append(mask)
        diagnostics.append(diag)

    union = np.zeros(frame.shape[:2], dtype=bool)
    for mask in object_masks:
        union |= mask
    return SegmentationResult(object_masks, union, apply_mask(frame, union), diagnostics)


def segment_stack(frames, bundle, backend: EncoderBackend) -> list:
    """Frame stacks are segmented frame by frame, independently, in order."""
    return [segment_frame(frame, bundle, backend) for frame in frames]


def _resize_mask_nearest(mask, out_h, out_w):
    in_h, in_w = mask.shape
    rows = (np.arange(out_h) * in_h) // out_h
    cols = (np.arange(out_w) * in_w) // out_w
    return mask[rows][:, cols]
