"""Backend interface: the two image encoders plus the promptable mask decoder.

A backend turns RGB frames into 64x64 feature grids (one per encoder) and
decodes point/box/mask prompts into three candidate mask logits. Backends are
immutable after construction and safe to call concurrently; implementations
wrapping a non-reentrant inference session must serialize calls internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..core import GRID_SIDE, BBox


class BackendError(RuntimeError):
    """Model loading or inference failure, with backend context attached."""


@dataclass(frozen=True)
class FeatureGrid:
    """A 64x64 spatial grid of embedding vectors from one encoder.

    ``values`` has shape (64, 64, dim). ``source_size`` records the (height,
    width) of the encoded frame so the decoder can emit logits at frame
    resolution. ``source_image`` is provenance the synthetic backend attaches
    for its region-growing decoder; real backends leave it None.
    """

    values: np.ndarray
    source_size: tuple
    source_image: Optional[np.ndarray] = None

    def __post_init__(self):
        v = self.values
        if v.ndim != 3 or v.shape[0] != GRID_SIDE or v.shape[1] != GRID_SIDE:
            raise ValueError(f"feature grid must be {GRID_SIDE}x{GRID_SIDE}xd, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature grid contains non-finite values")

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    @property
    def unit_values(self) -> np.ndarray:
        """Cell vectors L2-normalized in float64 (computed once, cached)."""
        cached = self.__dict__.get("_unit_values")
        if cached is None:
            v = self.values.astype(np.float64)  # always a fresh copy
            norms = np.sqrt(np.einsum("rcd,rcd->rc", v, v))
            v *= np.reciprocal(np.where(norms > 0, norms, 1.0))[..., None]
            object.__setattr__(self, "_unit_values", v)
            cached = v
        return cached


@dataclass(frozen=True)
class PromptSet:
    """Point/box/mask prompts in decoder input coordinates.

    Points are (row, col) pairs in the decoder's native input square.
    Duplicate points are permitted; a refinement pass may legitimately re-add
    an existing negative.
    """

    positives: tuple = ()
    negatives: tuple = ()
    box: Optional[BBox] = None
    prior_logits: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "positives", tuple(tuple(p) for p in self.positives))
        object.__setattr__(self, "negatives", tuple(tuple(p) for p in self.negatives))

    @property
    def point_count(self) -> int:
        return len(self.positives) + len(self.negatives)


@dataclass(frozen=True)
class MaskCandidates:
    """The decoder's three candidate mask logits with per-candidate scores.

    ``low_res_logits`` optionally carries the decoder-native low-resolution
    logits used for mask feedback on backends whose feedback input resolution
    differs from the output resolution.
    """

    logits: np.ndarray  # (3, H, W) float32
    scores: tuple
    low_res_logits: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.logits.ndim != 3 or self.logits.shape[0] != 3:
            raise ValueError(f"expected 3 candidate logits grids, got shape {self.logits.shape}")
        if len(self.scores) != 3:
            raise ValueError(f"expected 3 candidate scores, got {len(self.scores)}")
        if not np.all(np.isfinite(self.logits)):
            raise ValueError("candidate logits contain non-finite values")
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))


class EncoderBackend:
    """Abstract interface over the segmenter encoder, context encoder and decoder."""

    name = "abstract"
    seg_dim: int
    ctx_dim: int

    def encode_segmenter(self, image) -> FeatureGrid:
        """64x64xseg_dim feature grid used both for similarity and decoding."""
        raise NotImplementedError

    def encode_context(self, image) -> FeatureGrid:
        """64x64xctx_dim context-encoder grid (resized from its native 32x32)."""
        raise NotImplementedError

    def decode(self, image_embedding: FeatureGrid, prompts: PromptSet) -> MaskCandidates:
        """Run the promptable mask decoder; always returns exactly 3 candidates."""
        raise NotImplementedError
