"""Command-line entry points: identify, adapt, segment, eval, serve.

Masks on disk are single-channel PNGs: 0 is background and each distinct
nonzero gray value is one object (a plain 0/255 mask is a single object).
The extra-points file is JSON ``{"objects": [{"object_id": k, "points":
[[x, y], [x, y], [x, y]]}]}`` with points in image pixel coordinates
(x = column, y = row).

Stream mode (``segment --input -``) reads length-prefixed raw RGB frames from
stdin: a 12-byte header of three little-endian uint32 (width, height,
channels=3) followed by width*height*3 bytes, repeated until EOF. Masked
frames are written to stdout in the same framing.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import struct
import sys
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from . import bench
from .adapt import AdaptationConfig, adapt_weights
from .backends import BackendError, make_backend
from .core import apply_mask, load_image, save_image_png, save_mask_png
from .identify import BundleError, build_bundle, load_bundle, save_bundle, bundle_to_bytes
from .segment import segment_frame

log = logging.getLogger("samg")

_FRAME_HEADER = struct.Struct("<III")


def load_labeled_mask(path):
    """Split a labeled mask PNG into per-object boolean masks (by gray value)."""
    arr = np.asarray(PILImage.open(path).convert("L"))
    values = sorted(int(v) for v in np.unique(arr) if v != 0)
    if not values:
        raise BundleError(f"mask file {path} selects no pixels")
    return [arr == v for v in values]


def load_points_file(path, n_objects):
    data = json.loads(Path(path).read_text())
    try:
        entries = {int(e["object_id"]): e["points"] for e in data["objects"]}
    except (KeyError, TypeError) as exc:
        raise BundleError(f"malformed points file {path}: missing {exc}") from exc
    points = []
    for object_id in range(n_objects):
        if object_id not in entries:
            raise BundleError(
                f"points file {path} has no entry for object {object_id}; "
                "each object needs exactly 3 points"
            )
        pts = entries[object_id]
        if len(pts) != 3:
            raise BundleError(
                f"object {object_id} has {len(pts)} points in {path}; exactly 3 are required"
            )
        points.append([(int(y), int(x)) for x, y in pts])  # file is [x, y]
    return points


def _backend_from_args(args):
    name = args.backend
    if name is None:
        name = "onnx" if (args.models or os.environ.get("SAMG_MODEL_DIR")) else "synthetic"
    return make_backend(name, model_dir=args.models)


def cmd_identify(args):
    backend = _backend_from_args(args)
    image = load_image(args.image)
    masks = load_labeled_mask(args.mask)
    points = load_points_file(args.points, len(masks))
    bundle = build_bundle(image, masks, points, backend, task_name=args.task)
    save_bundle(bundle, args.out)
    payload = bundle_to_bytes(bundle)
    seg = bundle.feature_matrix("seg").shape
    ctx = bundle.feature_matrix("ctx").shape
    print(
        json.dumps(
            {
                "bundle": str(args.out),
                "objects": len(bundle.objects),
                "matrix_seg": list(seg),
                "matrix_ctx": list(ctx),
                "sha256": hashlib.sha256(payload).hexdigest(),
            }
        )
    )
    return 0


def cmd_adapt(args):
    backend = _backend_from_args(args)
    bundle = load_bundle(args.bundle)
    image = load_image(args.image)
    mask = np.asarray(PILImage.open(args.mask).convert("L")) > 0
    config = AdaptationConfig(steps=args.steps, learning_rate=args.lr)
    trace = []
    weights = adapt_weights(image, mask, bundle, backend, config, trace=trace)
    save_bundle(bundle, args.bundle)
    print(
        json.dumps(
            {
                "w1": weights.w1,
                "w2": weights.w2,
                "initial_loss": trace[0],
                "final_loss": trace[-1],
            }
        )
    )
    return 0


def _iter_input_frames(source):
    """Yield (name, image) from a file, a directory, or the stdin stream."""
    if source == "-":
        index = 0
        stdin = sys.stdin.buffer
        while True:
            header = stdin.read(_FRAME_HEADER.size)
            if not header:
                return
            if len(header) < _FRAME_HEADER.size:
                raise IOError("truncated stream frame header")
            width, height, channels = _FRAME_HEADER.unpack(header)
            if channels != 3:
                raise IOError(f"stream frames must have 3 channels, got {channels}")
            payload = stdin.read(width * height * 3)
            if len(payload) < width * height * 3:
                raise IOError("truncated stream frame payload")
            frame = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
            yield f"frame{index:06d}", frame
            index += 1
        return
    path = Path(source)
    if path.is_dir():
        for child in sorted(path.iterdir()):
            if child.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp"):
                yield child.stem, load_image(child)
    elif path.is_file():
        yield path.stem, load_image(path)
    else:
        raise FileNotFoundError(f"input {source} is neither a file nor a directory")


def _emit_stream_frame(image):
    out = sys.stdout.buffer
    out.write(_FRAME_HEADER.pack(image.shape[1], image.shape[0], 3))
    out.write(image.tobytes())
    out.flush()


def cmd_segment(args):
    backend = _backend_from_args(args)
    bundle = load_bundle(args.bundle)
    stream = args.input == "-"
    out_dir = None
    if not stream or args.out_dir:
        out_dir = Path(args.out_dir or ".")
        out_dir.mkdir(parents=True, exist_ok=True)

    processed = failed = 0
    for name, frame in _iter_input_frames(args.input):
        try:
            result = segment_frame(frame, bundle, backend)
        except Exception as exc:
            failed += 1
            log.error("frame %s failed: %s", name, exc)
            if args.strict:
                return 1
            continue
        processed += 1
        if stream:
            _emit_stream_frame(result.masked_frame)
        if out_dir is not None:
            save_image_png(result.masked_frame, out_dir / f"{name}_masked.png")
            save_mask_png(result.union_mask, out_dir / f"{name}_mask.png")
            if args.debug:
                (out_dir / f"{name}_debug.json").write_text(
                    json.dumps(result.to_debug_dict(), indent=2)
                )
    log.info("segmented %d frame(s), %d failed", processed, failed)
    return 0 if failed == 0 else 1


def cmd_eval(args):
    backend = _backend_from_args(args)
    settings = bench.SETTING_NAMES if args.suite == "all" else (args.suite,)
    spec = bench.default_scene()
    bundle = bench.training_bundle(spec, backend)
    report = bench.run_suite(
        bundle, backend, settings=settings, n_frames=args.frames, seed=args.seed, spec=spec
    )
    if args.report:
        bench.save_report(report, args.report)
    summary = {
        name: {
            "mean_iou": stats["mean_iou"],
            "min_iou": stats["min_iou"],
            "failed_frames": stats["failed_frames"],
            "wall_time_per_frame_s": stats["wall_time_per_frame_s"],
        }
        for name, stats in report["settings"].items()
    }
    print(json.dumps({"backend": backend.name, "settings": summary}, indent=2))
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig(
        model_dir=args.models,
        backend=args.backend or ("onnx" if (args.models or os.environ.get("SAMG_MODEL_DIR")) else "synthetic"),
        bundle_store=args.store,
        max_concurrency=args.max_concurrency,
    )
    app = create_app(config)  # fail fast: models load before the port opens
    uvicorn.run(app, host=args.host, port=args.port, log_level=args.log_level.lower())
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="samg", description=__doc__)
    parser.add_argument("--models", help="model directory (or set SAMG_MODEL_DIR)")
    parser.add_argument("--backend", choices=("synthetic", "onnx"))
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("identify", help="build a point-feature bundle from one annotated image")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True, help="labeled mask PNG (one gray value per object)")
    p.add_argument("--points", required=True, help="extra-points JSON (3 per object)")
    p.add_argument("--task", default="task")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("adapt", help="one-shot tuning of the two mixing weights")
    p.add_argument("--bundle", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--steps", type=int, default=AdaptationConfig.steps)
    p.add_argument("--lr", type=float, default=AdaptationConfig.learning_rate)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("segment", help="segment frames from a file, directory or stdin stream")
    p.add_argument("--bundle", required=True)
    p.add_argument("--input", required=True, help="image file, directory, or - for stream mode")
    p.add_argument("--out-dir")
    p.add_argument("--debug", action="store_true", help="write per-frame diagnostics JSON")
    p.add_argument("--strict", action="store_true", help="abort on the first failed frame")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="run the synthetic generalization suite")
    p.add_argument("--suite", default="all", choices=("all",) + bench.SETTING_NAMES)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="write the full JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP segmentation service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8401)
    p.add_argument("--store", default="bundles", help="bundle store directory")
    p.add_argument("--max-concurrency", type=int, default=2)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.INFO))
    try:
        return args.func(args)
    except (BundleError, BackendError, FileNotFoundError, IOError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
