"""Write the e2e fixtures: reference scene, masks as packed JSON, the wire
points payload, and the sha256 of the CLI-built bundle for hash comparison.

Usage: python3 make_fixtures.py OUT_DIR
"""

import base64
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from samg.bench import default_extra_points, default_scene, generate_scene
from samg.cli import main as cli_main

out_dir = Path(sys.argv[1])
out_dir.mkdir(parents=True, exist_ok=True)

spec = default_scene()
image, masks = generate_scene(spec, "train", frame_index=0, seed=0)
Image.fromarray(image).save(out_dir / "reference.png")

labeled = np.zeros(image.shape[:2], dtype=np.uint8)
for index, mask in enumerate(masks):
    labeled[mask] = index + 1
Image.fromarray(labeled, mode="L").save(out_dir / "mask.png")


def packed(mask):
    bits = np.packbits(mask.reshape(-1).astype(np.uint8))
    return {
        "width": int(mask.shape[1]),
        "height": int(mask.shape[0]),
        "bits": base64.b64encode(bits.tobytes()).decode("ascii"),
    }


union = np.zeros(image.shape[:2], dtype=bool)
for mask in masks:
    union |= mask

points = {
    "objects": [
        {"object_id": i, "points": [[c, r] for (r, c) in default_extra_points(m)]}
        for i, m in enumerate(masks)
    ]
}

# the bundle the CLI builds from identical inputs, for the content-hash check
(out_dir / "points.json").write_text(json.dumps(points))
rc = cli_main([
    "identify",
    "--image", str(out_dir / "reference.png"),
    "--mask", str(out_dir / "mask.png"),
    "--points", str(out_dir / "points.json"),
    "--task", "e2e",
    "--out", str(out_dir / "cli_bundle.json"),
])
assert rc == 0, "CLI identify failed"
cli_sha = hashlib.sha256((out_dir / "cli_bundle.json").read_bytes()).hexdigest()

(out_dir / "fixtures.json").write_text(
    json.dumps(
        {
            "width": int(image.shape[1]),
            "height": int(image.shape[0]),
            "objects": [packed(m) for m in masks],
            "gt_union": packed(union),
            "points": points,
            "cli_bundle_sha256": cli_sha,
            "task": "e2e",
        }
    )
)
print(json.dumps({"ok": True, "cli_bundle_sha256": cli_sha}))
