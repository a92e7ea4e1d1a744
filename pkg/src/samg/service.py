"""HTTP service: batch segmentation plus the annotation UI's backend.

Bundles are stored on disk keyed by the content hash of their canonical bytes
at creation time, together with the reference image and labeled mask (the
adapt endpoint needs the reference pair). An ephemeral flag on identify keeps
preview bundles in memory instead, so the annotation loop does not litter the
store. Inference runs behind a semaphore: when the concurrency cap is
reached, requests queue rather than fail.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, Form, UploadFile
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image as PILImage

from .adapt import AdaptationConfig, adapt_weights
from .backends import make_backend
from .core import pack_mask, validate_image
from .identify import (
    BundleError,
    build_bundle,
    bundle_from_dict,
    bundle_to_bytes,
    load_bundle,
    save_bundle,
)
from .segment import object_similarity_maps, segment_frame

FRONTEND_DIST = Path(__file__).resolve().parents[2] / "frontend" / "dist"


@dataclass
class ServiceConfig:
    model_dir: str | None = None
    backend: str = "synthetic"
    bundle_store: str = "bundles"
    max_concurrency: int = 2
    ephemeral_capacity: int = 32

    def __post_init__(self):
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")


class BundleStore:
    """Directory of bundle files plus their reference image/mask pairs."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def put(self, bundle, image, labeled_mask) -> str:
        payload = bundle_to_bytes(bundle)
        bundle_id = hashlib.sha256(payload).hexdigest()
        (self.root / f"{bundle_id}.json").write_bytes(payload)
        PILImage.fromarray(image, mode="RGB").save(self.root / f"{bundle_id}_ref.png")
        PILImage.fromarray(labeled_mask, mode="L").save(self.root / f"{bundle_id}_refmask.png")
        return bundle_id

    def get(self, bundle_id):
        path = self.root / f"{bundle_id}.json"
        if not path.is_file():
            return None
        return load_bundle(path)

    def reference_pair(self, bundle_id):
        image = np.asarray(PILImage.open(self.root / f"{bundle_id}_ref.png").convert("RGB"))
        labeled = np.asarray(PILImage.open(self.root / f"{bundle_id}_refmask.png").convert("L"))
        return image, labeled

    def update(self, bundle_id, bundle):
        save_bundle(bundle, self.root / f"{bundle_id}.json")

    def list(self):
        out = []
        for path in sorted(self.root.glob("*.json")):
            try:
                bundle = load_bundle(path)
            except BundleError:
                continue
            out.append(
                {
                    "bundle_id": path.stem,
                    "task_name": bundle.task_name,
                    "objects": len(bundle.objects),
                    "weights": {"w1": bundle.weights.w1, "w2": bundle.weights.w2},
                }
            )
        return out


def _labeled_from_masks(masks):
    labeled = np.zeros(masks[0].shape, dtype=np.uint8)
    for index, mask in enumerate(masks):
        labeled[mask] = index + 1
    return labeled


def _masks_from_labeled(labeled):
    values = sorted(int(v) for v in np.unique(labeled) if v != 0)
    return [labeled == v for v in values]


def _decode_image_upload(data) -> np.ndarray:
    img = PILImage.open(io.BytesIO(data)).convert("RGB")
    return validate_image(np.asarray(img))


def _png_bytes(image) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(image).save(buf, format="PNG")
    return buf.getvalue()


def _error(status, message):
    return JSONResponse(status_code=status, content={"error": message})


def create_app(config: ServiceConfig = ServiceConfig()) -> FastAPI:
    backend = make_backend(config.backend, model_dir=config.model_dir)  # fail fast
    store = BundleStore(config.bundle_store)
    gate = threading.Semaphore(config.max_concurrency)
    ephemeral = {}
    ephemeral_lock = threading.Lock()

    app = FastAPI(title="samg", version="0.1.0")

    def resolve(bundle_id):
        with ephemeral_lock:
            if bundle_id in ephemeral:
                return ephemeral[bundle_id][0]
        return store.get(bundle_id)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "backend": backend.name}

    @app.get("/api/bundles")
    def list_bundles():
        return {"bundles": store.list()}

    @app.post("/api/identify")
    def identify(
        image: UploadFile = File(...),
        mask: UploadFile = File(...),
        points: str = Form(...),
        task: str = Form("task"),
        ephemeral_flag: bool = Form(False, alias="ephemeral"),
    ):
        try:
            frame = _decode_image_upload(image.file.read())
            labeled = np.asarray(PILImage.open(io.BytesIO(mask.file.read())).convert("L"))
            masks = _masks_from_labeled(labeled)
            if not masks:
                return _error(400, "mask selects no pixels")
            parsed = json.loads(points)
            point_sets = _parse_points(parsed, len(masks))
            with gate:
                bundle = build_bundle(frame, masks, point_sets, backend, task_name=task)
        except (BundleError, ValueError, json.JSONDecodeError) as exc:
            return _error(400, str(exc))
        payload = bundle_to_bytes(bundle)
        bundle_id = hashlib.sha256(payload).hexdigest()
        if ephemeral_flag:
            with ephemeral_lock:
                ephemeral[bundle_id] = (bundle, frame, labeled)
                while len(ephemeral) > config.ephemeral_capacity:
                    ephemeral.pop(next(iter(ephemeral)))
        else:
            store.put(bundle, frame, labeled)
        return {"bundle_id": bundle_id, "objects": len(bundle.objects)}

    @app.post("/api/adapt")
    def adapt(body: dict):
        bundle_id = body.get("bundle_id")
        if not bundle_id:
            return _error(400, "bundle_id is required")
        with ephemeral_lock:
            entry = ephemeral.get(bundle_id)
        if entry is not None:
            bundle, frame, labeled = entry
        else:
            bundle = store.get(bundle_id)
            if bundle is None:
                return _error(404, f"unknown bundle {bundle_id}")
            frame, labeled = store.reference_pair(bundle_id)
        union = labeled > 0
        cfg = AdaptationConfig(
            steps=int(body.get("steps", AdaptationConfig.steps)),
            learning_rate=float(body.get("lr", AdaptationConfig.learning_rate)),
        )
        trace = []
        try:
            with gate:
                weights = adapt_weights(frame, union, bundle, backend, cfg, trace=trace)
        except (ValueError, FloatingPointError) as exc:
            return _error(400, str(exc))
        if entry is None:
            store.update(bundle_id, bundle)
        return {
            "w1": weights.w1,
            "w2": weights.w2,
            "initial_loss": trace[0],
            "final_loss": trace[-1],
        }

    @app.post("/api/segment")
    def segment(
        bundle_id: str = Form(...),
        image: UploadFile = File(...),
        debug: bool = Form(False),
    ):
        bundle = resolve(bundle_id)
        if bundle is None:
            return _error(404, f"unknown bundle {bundle_id}")
        try:
            frame = _decode_image_upload(image.file.read())
            with gate:
                result = segment_frame(frame, bundle, backend)
        except (ValueError, BundleError) as exc:
            return _error(400, str(exc))
        body = {
            "union_mask": pack_mask(result.union_mask),
            "object_masks": [pack_mask(m) for m in result.object_masks],
            "masked_image_png": base64.b64encode(_png_bytes(result.masked_frame)).decode(),
        }
        if debug:
            body["diagnostics"] = result.to_debug_dict()
        return body

    @app.post("/api/similarity")
    def similarity(
        bundle_id: str = Form(...),
        object_id: int = Form(...),
        kind: str = Form(...),
        index: int = Form(0),
        image: UploadFile = File(...),
    ):
        bundle = resolve(bundle_id)
        if bundle is None:
            return _error(404, f"unknown bundle {bundle_id}")
        matching = [o for o in bundle.objects if o.object_id == object_id]
        if not matching:
            return _error(404, f"bundle has no object {object_id}")
        obj = matching[0]
        if kind == "type1":
            feature_index = 0
        elif kind == "type2":
            if not 0 <= index < 3:
                return _error(400, "type2 index must be 0, 1 or 2")
            feature_index = 1 + index
        else:
            return _error(400, f"unknown kind {kind!r} (expected type1 or type2)")
        try:
            frame = _decode_image_upload(image.file.read())
            with gate:
                seg_grid = backend.encode_segmenter(frame)
                ctx_grid = backend.encode_context(frame)
                smap = object_similarity_maps(obj, seg_grid, ctx_grid)[feature_index]
        except ValueError as exc:
            return _error(400, str(exc))
        # [-1, 1] -> uint16 grayscale
        quantized = np.round((smap.values.astype(np.float64) + 1.0) / 2.0 * 65535.0)
        png = _png_bytes(quantized.astype(np.uint16))
        return Response(content=png, media_type="image/png")

    if FRONTEND_DIST.is_dir():
        app.mount("/", StaticFiles(directory=str(FRONTEND_DIST), html=True), name="ui")

    return app


def _parse_points(parsed, n_objects):
    """Points JSON (same schema as the CLI file) -> per-object (row, col) lists."""
    entries = {int(e["object_id"]): e["points"] for e in parsed["objects"]}
    points = []
    for object_id in range(n_objects):
        if object_id not in entries:
            raise BundleError(f"no points for object {object_id}; 3 are required per object")
        pts = entries[object_id]
        if len(pts) != 3:
            raise BundleError(f"object {object_id} has {len(pts)} points; exactly 3 are required")
        points.append([(int(y), int(x)) for x, y in pts])
    return points
