"""Serialized-model backend: three ONNX graphs plus a manifest.

Model directory layout::

    manifest.json      declares files, input sizes and normalization constants
    <segmenter>.onnx   1x3xHxW float  -> 1x256x64x64 image embedding
    <context>.onnx     1x3xHxW float  -> 1x768x32x32 embedding (resized to 64x64)
    <decoder>.onnx     SAM-style promptable decoder (points/box/mask feedback)

Preprocessing constants live in the manifest rather than code because
different exports use different normalizations. The decoder is expected to
take point coordinates in its native input square as (x, y) with labels
1=positive, 0=negative, 2/3=box corners, plus optional low-res mask feedback,
and to return 3 mask logits with 3 scores.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from ..coords import DECODER_SIDE
from ..core import GRID_SIDE, validate_image
from .base import BackendError, EncoderBackend, FeatureGrid, MaskCandidates, PromptSet
from .synthetic import bilinear_resize

MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = "samg-backend-manifest"

_DEFAULT_DECODER_IO = {
    "embedding": "image_embeddings",
    "point_coords": "point_coords",
    "point_labels": "point_labels",
    "mask_input": "mask_input",
    "has_mask_input": "has_mask_input",
    "orig_im_size": "orig_im_size",
    "masks": "masks",
    "scores": "iou_predictions",
    "low_res_masks": "low_res_masks",
}


def load_manifest(model_dir):
    path = Path(model_dir) / MANIFEST_NAME
    if not path.is_file():
        raise BackendError(f"no {MANIFEST_NAME} in model directory {model_dir}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise BackendError(f"unparseable manifest {path}: {exc}") from exc
    if manifest.get("format") != MANIFEST_FORMAT:
        raise BackendError(f"{path} is not a backend manifest (format={manifest.get('format')!r})")
    for section in ("segmenter", "context", "decoder"):
        if section not in manifest:
            raise BackendError(f"manifest missing required section '{section}'")
        entry = manifest[section]
        if "file" not in entry:
            raise BackendError(f"manifest section '{section}' missing 'file'")
        model_path = Path(model_dir) / entry["file"]
        if not model_path.is_file():
            raise BackendError(f"model file not found: {model_path}")
    for section in ("segmenter", "context"):
        entry = manifest[section]
        for key in ("input_size", "mean", "std"):
            if key not in entry:
                raise BackendError(f"manifest section '{section}' missing '{key}'")
        if len(entry["mean"]) != 3 or len(entry["std"]) != 3:
            raise BackendError(f"'{section}' normalization constants must have 3 channels")
    return manifest


def resolve_model_dir(explicit=None):
    """Model directory from an explicit flag or the SAMG_MODEL_DIR env var."""
    candidate = explicit or os.environ.get("SAMG_MODEL_DIR")
    if not candidate:
        raise BackendError(
            "no model directory configured; pass --models or set SAMG_MODEL_DIR"
        )
    return candidate


class OnnxBackend(EncoderBackend):
    """Runs the exported encoder/decoder graphs through onnxruntime."""

    name = "onnx"
    seg_dim = 256
    ctx_dim = 768

    def __init__(self, model_dir):
        try:
            import onnxruntime as ort
        except ImportError as exc:
            raise BackendError(
                "onnxruntime is required for the onnx backend "
                "(pip install 'samg[onnx]')"
            ) from exc
        self.model_dir = str(model_dir)
        self.manifest = load_manifest(model_dir)
        self._decoder_io = dict(_DEFAULT_DECODER_IO)
        self._decoder_io.update(self.manifest["decoder"].get("io", {}))
        self._mask_input_size = tuple(self.manifest["decoder"].get("mask_input_size", (256, 256)))
        try:
            self._seg = ort.InferenceSession(
                str(Path(model_dir) / self.manifest["segmenter"]["file"])
            )
            self._ctx = ort.InferenceSession(
                str(Path(model_dir) / self.manifest["context"]["file"])
            )
            self._dec = ort.InferenceSession(
                str(Path(model_dir) / self.manifest["decoder"]["file"])
            )
        except Exception as exc:
            raise BackendError(f"failed to load models from {model_dir}: {exc}") from exc

    # --- encoders ---------------------------------------------------------

    def _preprocess(self, image, section):
        entry = self.manifest[section]
        th, tw = entry["input_size"]
        resized = PILImage.fromarray(image).resize((tw, th), PILImage.BILINEAR)
        arr = np.asarray(resized, dtype=np.float32)
        arr = (arr - np.asarray(entry["mean"], dtype=np.float32)) / np.asarray(
            entry["std"], dtype=np.float32
        )
        return arr.transpose(2, 0, 1)[None]  # NCHW

    def _run_encoder(self, session, image, section):
        image = validate_image(image)
        inp = self._preprocess(image, section)
        try:
            (out,) = session.run(None, {session.get_inputs()[0].name: inp})
        except Exception as exc:
            raise BackendError(f"{section} encoder inference failed: {exc}") from exc
        grid = np.asarray(out[0], dtype=np.float64).transpose(1, 2, 0)  # (h, w, dim)
        if grid.shape[:2] != (GRID_SIDE, GRID_SIDE):
            grid = bilinear_resize(grid, GRID_SIDE, GRID_SIDE)
        return FeatureGrid(grid, image.shape[:2])

    def encode_segmenter(self, image) -> FeatureGrid:
        return self._run_encoder(self._seg, image, "segmenter")

    def encode_context(self, image) -> FeatureGrid:
        return self._run_encoder(self._ctx, image, "context")

    # --- decoder ----------------------------------------------------------

    def decode(self, image_embedding: FeatureGrid, prompts: PromptSet) -> MaskCandidates:
        if not prompts.positives:
            raise ValueError("decode requires at least one positive point prompt")
        io = self._decoder_io
        h, w = image_embedding.source_size

        coords = []
        labels = []
        for r, c in prompts.positives:
            coords.append((c, r))  # decoder convention is (x, y)
            labels.append(1)
        for r, c in prompts.negatives:
            coords.append((c, r))
            labels.append(0)
        if prompts.box is not None:
            coords.append((prompts.box.min_col, prompts.box.min_row))
            labels.append(2)
            coords.append((prompts.box.max_col, prompts.box.max_row))
            labels.append(3)

        mh, mw = self._mask_input_size
        if prompts.prior_logits is not None:
            prior = np.asarray(prompts.prior_logits, dtype=np.float32)
            if prior.shape != (mh, mw):
                raise BackendError(
                    f"prior logits shape {prior.shape} does not match decoder "
                    f"mask input {self._mask_input_size}"
                )
            mask_input = prior[None, None]
            has_mask = np.ones(1, dtype=np.float32)
        else:
            mask_input = np.zeros((1, 1, mh, mw), dtype=np.float32)
            has_mask = np.zeros(1, dtype=np.float32)

        embedding = image_embedding.values.astype(np.float32).transpose(2, 0, 1)[None]
        feeds = {
            io["embedding"]: embedding,
            io["point_coords"]: np.asarray(coords, dtype=np.float32)[None],
            io["point_labels"]: np.asarray(labels, dtype=np.float32)[None],
            io["mask_input"]: mask_input,
            io["has_mask_input"]: has_mask,
            io["orig_im_size"]: np.asarray([h, w], dtype=np.float32),
        }
        available = {i.name for i in self._dec.get_inputs()}
        feeds = {k: v for k, v in feeds.items() if k in available}
        try:
            outputs = self._dec.run(None, feeds)
        except Exception as exc:
            raise BackendError(f"decoder inference failed: {exc}") from exc
        by_name = {o.name: v for o, v in zip(self._dec.get_outputs(), outputs)}

        logits = np.asarray(by_name[io["masks"]][0], dtype=np.float32)
        scores = tuple(float(s) for s in np.asarray(by_name[io["scores"]]).reshape(-1)[:3])
        low_res = by_name.get(io["low_res_masks"])
        low_res = None if low_res is None else np.asarray(low_res[0], dtype=np.float32)
        return MaskCandidates(logits, scores, low_res_logits=low_res)
