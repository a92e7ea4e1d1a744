"""The two-scalar one-shot adaptation, on a fixture and on a real bundle.

The decoder's three candidates are frozen; only the two mixing weights move,
with the closed-form gradient of the mean sigmoid cross-entropy. First a
hand-built fixture where the second candidate matches the supervision mask
(descent should put the largest coefficient there), then the same machinery
on a bundle's reference pair.
"""

from pathlib import Path

import numpy as np

from samg import SyntheticBackend
from samg.adapt import AdaptationConfig, adapt_weights, descend
from samg.backends.base import MaskCandidates
from samg.bench import default_extra_points, default_scene, generate_scene
from samg.identify import build_bundle
from samg.segment import weighted_logits

# --- fixture: candidate 2 is right, candidates 1 and 3 are its complement ----
rng = np.random.default_rng(5)
gt = rng.random((32, 32)) < 0.4
y = np.where(gt, 1.0, -1.0)
m2 = y * rng.uniform(1.0, 3.0, gt.shape)
m1 = -y * rng.uniform(1.0, 3.0, gt.shape)
m3 = -y * rng.uniform(1.0, 3.0, gt.shape)
mc = MaskCandidates(np.stack([m1, m2, m3]).astype(np.float32), (0.5, 0.5, 0.5))

trace = []
weights = descend([mc], [gt], AdaptationConfig(steps=400, learning_rate=0.05), trace=trace)
print(f"fixture: w = ({weights.w1:.3f}, {weights.w2:.3f}), implied w3 = {weights.w3:.3f}")
print(f"  loss {trace[0]:.4f} -> {trace[-1]:.6f} over {len(trace) - 1} steps")
mask = weighted_logits(mc, weights) > 0
print(f"  recovered mask agreement: {(mask == gt).mean():.4f}")
assert weights.w2 > weights.w1 and weights.w2 > weights.w3

# --- the same on a bundle's reference pair ------------------------------------
backend = SyntheticBackend()
spec = default_scene()
reference, masks = generate_scene(spec, "train", 0, 0)
bundle = build_bundle(
    reference, masks, [default_extra_points(m) for m in masks], backend, task_name="demo"
)
union = np.zeros(reference.shape[:2], dtype=bool)
for m in masks:
    union |= m

trace = []
weights = adapt_weights(reference, union, bundle, backend, AdaptationConfig(steps=200),
                        trace=trace)
print(f"\nbundle: w = ({weights.w1:.6f}, {weights.w2:.6f})")
print(f"  loss {trace[0]:.6f} -> {trace[-1]:.6f}")
print("  (the synthetic decoder's candidates agree, so the reference loss is already tiny)")
