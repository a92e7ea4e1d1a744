"""Visualize the fused similarity maps that drive prompt selection.

For each point feature of each object, the frame's two encoder grids are
compared cell-by-cell with the stored feature (cosine, averaged over the two
encoders). The maxima become positive point prompts; the pooled-feature map's
minimum becomes the negative prompt. Heatmaps are written as 8-bit PNGs.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from samg import SyntheticBackend
from samg.bench import default_extra_points, default_scene, generate_scene
from samg.identify import build_bundle
from samg.segment import object_similarity_maps

out_dir = Path(__file__).parent / "output" / "similarity_maps"
out_dir.mkdir(parents=True, exist_ok=True)

backend = SyntheticBackend()
spec = default_scene()
reference, masks = generate_scene(spec, "train", 0, 0)
bundle = build_bundle(
    reference, masks, [default_extra_points(m) for m in masks], backend, task_name="demo"
)

frame, _ = generate_scene(spec, "video_hard", frame_index=11, seed=2)
seg_grid = backend.encode_segmenter(frame)
ctx_grid = backend.encode_context(frame)

for obj in bundle.objects:
    maps = object_similarity_maps(obj, seg_grid, ctx_grid)
    for label, smap in zip(("type1", "type2a", "type2b", "type2c"), maps):
        peak = smap.argmax_cell()
        print(f"object {obj.object_id} {label}: max {smap.values.max():.4f} at cell {tuple(peak)}, "
              f"min {smap.values.min():.4f} at {tuple(smap.argmin_cell())}")
        # normalize [-1, 1] -> [0, 255] for a quick visual
        img = np.round((smap.values.astype(np.float64) + 1.0) / 2.0 * 255.0).astype(np.uint8)
        Image.fromarray(img).resize((256, 256), Image.NEAREST).save(
            out_dir / f"obj{obj.object_id}_{label}.png"
        )

Image.fromarray(frame).save(out_dir / "frame.png")
print(f"\nheatmaps in {out_dir}")
