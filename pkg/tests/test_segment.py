import dataclasses

import numpy as np
import pytest

from samg.backends import SyntheticBackend
from samg.backends.base import EncoderBackend, FeatureGrid, MaskCandidates, PromptSet
from samg.core import DEFAULT_WEIGHTS, AdaptedWeights, BBox, GridCell, iou
from samg.identify import build_bundle
from samg.segment import (
    SimilarityMap,
    object_similarity_maps,
    refine_negative,
    segment_frame,
    segment_object,
    segment_stack,
    select_prompts,
    similarity_map,
    weighted_logits,
)

from conftest import interior_points, random_grid, tiny_scene


class _FakeFeature:
    """Point-feature stand-in for direct similarity-map tests."""

    def __init__(self, seg_vec, ctx_vec, kind="type1", object_id=0):
        self.seg_vec = np.asarray(seg_vec, dtype=np.float64)
        self.ctx_vec = np.asarray(ctx_vec, dtype=np.float64)
        self.kind = kind
        self.object_id = object_id


def _cosine_oracle(vec, grid_values):
    out = np.zeros((64, 64))
    v = np.asarray(vec, dtype=np.float64)
    v = v / np.linalg.norm(v)
    for r in range(64):
        for c in range(64):
            cell = grid_values[r, c]
            n = np.linalg.norm(cell)
            out[r, c] = 0.0 if n == 0 else float(cell @ v) / n
    return out


# --- similarity maps -----------------------------------------------------------

def test_map_attains_one_at_matching_cell():
    rng = np.random.default_rng(0)
    seg = random_grid(rng, dim=8)
    ctx = random_grid(rng, dim=16)
    pf = _FakeFeature(seg.values[12, 40], ctx.values[12, 40])
    smap = similarity_map(pf, seg, ctx)
    assert smap.values[12, 40] == pytest.approx(1.0, abs=0.0)
    assert smap.argmax_cell() == GridCell(12, 40)


def test_constant_grid_gives_constant_map_and_origin_tiebreak():
    values = np.tile(np.array([1.0, 2.0, 3.0]), (64, 64, 1))
    seg = FeatureGrid(values, (84, 84))
    ctx = FeatureGrid(values.copy(), (84, 84))
    pf = _FakeFeature(values[0, 0], values[0, 0])
    smap = similarity_map(pf, seg, ctx)
    assert np.allclose(smap.values, smap.values[0, 0])
    assert smap.argmax_cell() == GridCell(0, 0)
    assert smap.argmin_cell() == GridCell(0, 0)


def test_map_matches_bruteforce_cosine_oracle():
    rng = np.random.default_rng(42)
    seg = random_grid(rng, dim=8)
    ctx = random_grid(rng, dim=16)
    pf = _FakeFeature(rng.normal(size=8), rng.normal(size=16))
    smap = similarity_map(pf, seg, ctx)
    oracle = 0.5 * (_cosine_oracle(pf.seg_vec, seg.values) + _cosine_oracle(pf.ctx_vec, ctx.values))
    assert np.abs(smap.values.astype(np.float64) - oracle).max() <= 1e-6
    assert smap.argmax_cell() == GridCell(*np.unravel_index(np.argmax(oracle), oracle.shape))
    assert smap.argmin_cell() == GridCell(*np.unravel_index(np.argmin(oracle), oracle.shape))


def test_map_bounds():
    rng = np.random.default_rng(9)
    seg = random_grid(rng, dim=8)
    ctx = random_grid(rng, dim=16)
    pf = _FakeFeature(rng.normal(size=8), rng.normal(size=16))
    values = similarity_map(pf, seg, ctx).values
    assert values.min() >= -1.0 - 1e-6 and values.max() <= 1.0 + 1e-6
    assert np.isfinite(values).all()


def test_cosine_scale_invariance_bitwise():
    rng = np.random.default_rng(21)
    seg = random_grid(rng, dim=8)
    ctx = random_grid(rng, dim=16)
    base = _FakeFeature(rng.normal(size=8), rng.normal(size=16))
    reference = similarity_map(base, seg, ctx).values
    for scale in (7.3, 2.0, 0.5, 1024.0):
        scaled = _FakeFeature(base.seg_vec * scale, base.ctx_vec * scale)
        assert np.array_equal(similarity_map(scaled, seg, ctx).values, reference)


# --- prompt selection ------------------------------------------------------------

def _maps_with_extrema(max_cells, min_cell):
    maps = []
    for i, cell in enumerate(max_cells):
        values = np.zeros((64, 64), dtype=np.float32)
        values[cell] = 1.0
        values[min_cell] = -1.0
        maps.append(SimilarityMap(values, "type1" if i == 0 else "type2", 0))
    return maps


def test_select_prompts_counts_and_coordinates():
    maps = _maps_with_extrema([(12, 40), (1, 2), (3, 4), (5, 6)], (60, 60))
    prompts = select_prompts(object(), maps)
    assert len(prompts.positives) == 4
    assert len(prompts.negatives) == 1
    assert prompts.point_count == 5
    assert (12 * 16 + 8, 40 * 16 + 8) in prompts.positives
    assert prompts.negatives[0] == (60 * 16 + 8, 60 * 16 + 8)


def test_select_prompts_tie_breaks_row_major():
    values = np.zeros((64, 64), dtype=np.float32)
    values[5, 10] = 1.0
    values[5, 11] = 1.0  # tied max; first in row-major order wins
    maps = [SimilarityMap(values, "type1", 0)] + _maps_with_extrema([(0, 0)] * 3, (63, 63))[:3]
    prompts = select_prompts(object(), maps)
    assert prompts.positives[0] == (5 * 16 + 8, 10 * 16 + 8)


def test_select_prompts_requires_four_maps():
    with pytest.raises(ValueError):
        select_prompts(object(), _maps_with_extrema([(0, 0)], (1, 1)))


def test_refine_negative_full_box_is_global_argmin():
    rng = np.random.default_rng(3)
    values = rng.normal(size=(64, 64)).astype(np.float32)
    smap = SimilarityMap(values, "type1", 0)
    assert refine_negative(smap, BBox(0, 0, 63, 63)) == smap.argmin_cell()


def test_refine_negative_single_cell():
    rng = np.random.default_rng(4)
    smap = SimilarityMap(rng.normal(size=(64, 64)).astype(np.float32), "type1", 0)
    assert refine_negative(smap, BBox(7, 9, 7, 9)) == GridCell(7, 9)


def test_refine_negative_matches_loop_oracle():
    rng = np.random.default_rng(3)
    values = rng.normal(size=(64, 64)).astype(np.float32)
    smap = SimilarityMap(values, "type1", 0)
    for _ in range(25):
        r0, c0 = rng.integers(0, 64, 2)
        r1 = int(rng.integers(r0, 64))
        c1 = int(rng.integers(c0, 64))
        box = BBox(int(r0), int(c0), r1, c1)
        best, best_cell = np.inf, None
        for r in range(box.min_row, box.max_row + 1):
            for c in range(box.min_col, box.max_col + 1):
                if values[r, c] < best:
                    best, best_cell = values[r, c], GridCell(r, c)
        assert refine_negative(smap, box) == best_cell


# --- weighted summation -----------------------------------------------------------

def _fixture_candidates(rng, shape=(16, 16)):
    logits = rng.normal(size=(3,) + shape).astype(np.float32)
    return MaskCandidates(logits, (0.5, 0.7, 0.6))


def test_weighted_identities_bit_exact():
    rng = np.random.default_rng(5)
    mc = _fixture_candidates(rng)
    assert np.array_equal(weighted_logits(mc, AdaptedWeights(1.0, 0.0)), mc.logits[0])
    assert np.array_equal(weighted_logits(mc, AdaptedWeights(0.0, 1.0)), mc.logits[1])
    assert np.array_equal(weighted_logits(mc, AdaptedWeights(0.0, 0.0)), mc.logits[2])


def test_weighted_fixture_arithmetic():
    rng = np.random.default_rng(6)
    mc = _fixture_candidates(rng)
    out = weighted_logits(mc, AdaptedWeights(0.3, 0.3))
    expected = 0.3 * mc.logits[0] + 0.3 * mc.logits[1] + 0.4 * mc.logits[2]
    assert np.abs(out - expected).max() <= 1e-7


def test_weighted_coefficients_sum_to_one_and_linear():
    rng = np.random.default_rng(7)
    mc = _fixture_candidates(rng)
    ones = MaskCandidates(np.ones((3, 4, 4), dtype=np.float32), (1, 1, 1))
    for _ in range(1000):
        w = AdaptedWeights(*rng.uniform(-2, 3, 2))
        assert w.w1 + w.w2 + w.w3 == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(weighted_logits(ones, w), 1.0, atol=1e-6)
    # linearity in the candidates
    w = AdaptedWeights(0.25, -0.5)
    doubled = MaskCandidates(mc.logits * 2.0, mc.scores)
    assert np.allclose(weighted_logits(doubled, w), 2.0 * weighted_logits(mc, w), atol=1e-5)


# --- pass protocol ------------------------------------------------------------------

def _bundle_and_grids(backend, img, mask):
    bundle = build_bundle(img, [mask], [interior_points(mask)], backend)
    seg = backend.encode_segmenter(img)
    ctx = backend.encode_context(img)
    return bundle, seg, ctx


def test_pass_protocol_counts_and_threading(small_backend):
    img, mask = tiny_scene()
    bundle, seg, ctx = _bundle_and_grids(small_backend, img, mask)
    final_mask, diag = segment_object(seg, ctx, bundle.objects[0], bundle.weights, small_backend)

    counts = [p.prompts.point_count for p in diag.passes]
    assert counts == [5, 6, 7]
    positives = [len(p.prompts.positives) for p in diag.passes]
    negatives = [len(p.prompts.negatives) for p in diag.passes]
    assert positives == [4, 4, 4]
    assert negatives == [1, 2, 3]
    assert [p.prompts.box is not None for p in diag.passes] == [False, True, True]
    assert [p.prompts.prior_logits is not None for p in diag.passes] == [False, True, True]
    assert all(len(p.scores) == 3 for p in diag.passes)
    assert diag.final_candidate in (0, 1, 2)


def test_unique_color_object_segments_exactly(small_backend):
    img, mask = tiny_scene()
    bundle, seg, ctx = _bundle_and_grids(small_backend, img, mask)
    final_mask, _ = segment_object(seg, ctx, bundle.objects[0], bundle.weights, small_backend)
    assert iou(final_mask, mask) == 1.0


class _EmptyFirstPassBackend(EncoderBackend):
    """Wraps the synthetic backend but returns all-negative logits on pass 1."""

    name = "stub"

    def __init__(self, inner):
        self.inner = inner
        self.seg_dim = inner.seg_dim
        self.ctx_dim = inner.ctx_dim
        self.calls = 0

    def encode_segmenter(self, image):
        return self.inner.encode_segmenter(image)

    def encode_context(self, image):
        return self.inner.encode_context(image)

    def decode(self, image_embedding, prompts):
        self.calls += 1
        mc = self.inner.decode(image_embedding, prompts)
        if self.calls == 1:
            return MaskCandidates(np.full_like(mc.logits, -5.0), mc.scores)
        return mc


def test_empty_rough_mask_falls_back_to_full_grid_box(small_backend):
    img, mask = tiny_scene()
    bundle, seg, ctx = _bundle_and_grids(small_backend, img, mask)
    stub = _EmptyFirstPassBackend(small_backend)
    final_mask, diag = segment_object(seg, ctx, bundle.objects[0], bundle.weights, stub)
    assert diag.passes[1].box_grid == BBox(0, 0, 63, 63)  # widened, not aborted
    assert iou(final_mask, mask) == 1.0  # passes 2-3 still recover the object


# --- frame-level composition ----------------------------------------------------------

def _two_object_scene():
    img = np.full((84, 84, 3), (120, 120, 110), dtype=np.uint8)
    rr, cc = np.mgrid[0:84, 0:84]
    m1 = (rr - 20) ** 2 + (cc - 24) ** 2 <= 81
    m2 = (rr - 60) ** 2 + (cc - 58) ** 2 <= 100
    img[m1] = (40, 40, 230)
    img[m2] = (140, 40, 220)
    return img, [m1, m2]


def test_two_object_union(small_backend):
    img, masks = _two_object_scene()
    bundle = build_bundle(img, masks, [interior_points(m) for m in masks], small_backend)
    result = segment_frame(img, bundle, small_backend)
    union = masks[0] | masks[1]
    assert iou(result.union_mask, union) == 1.0
    expected_union = np.zeros((84, 84), dtype=bool)
    for m in result.object_masks:
        expected_union |= m
    assert np.array_equal(result.union_mask, expected_union)
    # masked frame equals apply_mask(frame, union)
    assert np.array_equal(result.masked_frame[result.union_mask], img[union])
    assert not result.masked_frame[~result.union_mask].any()


def test_reference_self_consistency(small_backend):
    img, mask = tiny_scene()
    bundle = build_bundle(img, [mask], [interior_points(mask)], small_backend)
    result = segment_frame(img, bundle, small_backend)
    assert iou(result.object_masks[0], mask) >= 0.99


def test_stack_processed_independently_in_order(small_backend):
    img1, mask = tiny_scene()
    img2, _ = tiny_scene(background=(100, 130, 90))
    img3, _ = tiny_scene(background=(60, 60, 60))
    bundle = build_bundle(img1, [mask], [interior_points(mask)], small_backend)
    results = segment_stack([img1, img2, img3], bundle, small_backend)
    assert len(results) == 3
    singles = [segment_frame(f, bundle, small_backend) for f in (img1, img2, img3)]
    for stacked, single in zip(results, singles):
        assert np.array_equal(stacked.union_mask, single.union_mask)


def test_segmentation_deterministic(small_backend):
    img, mask = tiny_scene()
    bundle = build_bundle(img, [mask], [interior_points(mask)], small_backend)
    a = segment_frame(img, bundle, small_backend)
    b = segment_frame(img, bundle, small_backend)
    assert np.array_equal(a.union_mask, b.union_mask)
    assert np.array_equal(a.masked_frame, b.masked_frame)


def test_scaled_bundle_features_leave_masks_unchanged(small_backend):
    img, mask = tiny_scene()
    bundle = build_bundle(img, [mask], [interior_points(mask)], small_backend)
    reference = segment_frame(img, bundle, small_backend)

    obj = bundle.objects[0]
    scaled_type1 = dataclasses.replace(
        obj.type1, seg_vec=obj.type1.seg_vec * 7.3, ctx_vec=obj.type1.ctx_vec * 7.3
    )
    scaled_type2 = tuple(
        dataclasses.replace(pf, seg_vec=pf.seg_vec * 7.3, ctx_vec=pf.ctx_vec * 7.3)
        for pf in obj.type2
    )
    bundle.objects[0] = dataclasses.replace(obj, type1=scaled_type1, type2=scaled_type2)
    scaled = segment_frame(img, bundle, small_backend)

    for a, b in zip(reference.diagnostics[0].passes, scaled.diagnostics[0].passes):
        assert a.prompts.positives == b.prompts.positives
        assert a.prompts.negatives == b.prompts.negatives
    assert np.array_equal(reference.union_mask, scaled.union_mask)
