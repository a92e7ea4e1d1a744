"""One-shot tuning of the two candidate-mixing scalars.

The decoder's three candidates are decoded once on the reference image (they
do not depend on the weights) and frozen; the loss is then a pure function of
(w1, w2), minimized by plain gradient descent with the closed-form gradient.
Everything else — point features, encoders, decoder — stays untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .backends.base import EncoderBackend, MaskCandidates
from .core import DEFAULT_WEIGHTS, AdaptedWeights, validate_image, validate_mask
from .segment import object_similarity_maps, select_prompts, weighted_logits


@dataclass(frozen=True)
class AdaptationConfig:
    steps: int = 1000
    learning_rate: float = 1e-3
    init: AdaptedWeights = DEFAULT_WEIGHTS

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")


def adaptation_loss(mc: MaskCandidates, w: AdaptedWeights, gt) -> float:
    """Mean binary cross-entropy between sigmoid(weighted logits) and the mask.

    Computed in the numerically stable form softplus(m) - gt*m.
    """
    m = weighted_logits(mc, w).astype(np.float64)
    g = _gt_at_logits_resolution(gt, m.shape)
    return float(np.mean(np.logaddexp(0.0, m) - g * m))


def loss_gradient(mc: MaskCandidates, w: AdaptedWeights, gt):
    """Closed-form (dL/dw1, dL/dw2).

    The weighted sum is linear in the weights, so per cell
    dL/dwi = (sigmoid(m) - gt) * (Mi - M3); no autodiff needed and the
    candidates stay fixed.
    """
    logits = mc.logits.astype(np.float64)
    m = weighted_logits(mc, w).astype(np.float64)
    g = _gt_at_logits_resolution(gt, m.shape)
    residual = expit(m) - g
    d1 = float(np.mean(residual * (logits[0] - logits[2])))
    d2 = float(np.mean(residual * (logits[1] - logits[2])))
    return d1, d2


def descend(candidates, gts, config: AdaptationConfig, trace=None) -> AdaptedWeights:
    """Gradient descent on the mean loss over (candidates, mask) pairs."""
    w = AdaptedWeights(*config.init)
    if trace is not None:
        trace.append(_mean_loss(candidates, gts, w))
    for step in range(config.steps):
        grads = [loss_gradient(mc, w, g) for mc, g in zip(candidates, gts)]
        d1 = sum(g[0] for g in grads) / len(grads)
        d2 = sum(g[1] for g in grads) / len(grads)
        w = AdaptedWeights(w.w1 - config.learning_rate * d1, w.w2 - config.learning_rate * d2)
        if not (np.isfinite(w.w1) and np.isfinite(w.w2)):
            raise FloatingPointError(f"non-finite weights at step {step + 1}: {w}")
        if trace is not None:
            loss = _mean_loss(candidates, gts, w)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at step {step + 1}")
            trace.append(loss)
    return w


def adapt_weights(image, gt_mask, bundle, backend: EncoderBackend,
                  config: AdaptationConfig = AdaptationConfig(), trace=None) -> AdaptedWeights:
    """Tune (w1, w2) on the bundle's reference image/mask pair.

    Runs one pass-1 decode per object (frozen thereafter), then ``config.steps``
    gradient-descent updates from ``config.init``. The result is written into
    the bundle (its only mutation) and returned. For multi-object bundles each
    object supervises its own decode with its stored reference mask; the
    provided mask must be their union.
    """
    image = validate_image(image)
    gt_mask = validate_mask(gt_mask, image.shape)

    union = np.zeros(image.shape[:2], dtype=bool)
    for obj in bundle.objects:
        union |= obj.mask
    if not np.array_equal(gt_mask, union):
        raise ValueError(
            "supplied mask is not the bundle's reference mask "
            "(adaptation is one-shot on the reference pair)"
        )

    seg_grid = backend.encode_segmenter(image)
    ctx_grid = backend.encode_context(image)
    candidates = []
    gts = []
    for obj in bundle.objects:
        prompts = select_prompts(obj, object_similarity_maps(obj, seg_grid, ctx_grid))
        candidates.append(backend.decode(seg_grid, prompts))
        gts.append(obj.mask)

    weights = descend(candidates, gts, config, trace=trace)
    bundle.set_weights(weights)
    return weights


def _mean_loss(candidates, gts, w) -> float:
    return sum(adaptation_loss(mc, w, g) for mc, g in zip(candidates, gts)) / len(candidates)


def _gt_at_logits_resolution(gt, shape):
    g = np.asarray(gt)
    if g.shape != shape:
        g = _nearest_resize(g.astype(bool), *shape)
    return g.astype(np.float64)


def _nearest_resize(mask, out_h, out_w):
    in_h, in_w = mask.shape
    rows = (np.arange(out_h) * in_h) // out_h
    cols = (np.arange(out_w) * in_w) // out_w
    return mask[rows][:, cols]
