"""Desk-scale generalization suite: procedural scenes with exact ground truth.

Scenes hold a few moving objects (disk, rectangle, articulated chain) over a
perturbable background plus a table band. Four regimes of increasing
difficulty mirror the usual generalization taxonomy: ``color_easy`` and
``color_hard`` recolor the static background and table (wider palette and a
textured table in the hard regime), ``video_easy`` and ``video_hard`` animate
the background with seeded multi-octave value noise, the hard regime faster,
higher-contrast, with a scrolling stripe texture and a drifting brightness
gradient (a self-contained stand-in for moving light).

Object identity colors never change and sit in a disjoint color region from
every background generator (objects carry blue >= 200, backgrounds are
clamped to blue <= 160), so mask ground truth stays exact and
correspondence-based segmentation is well-posed in every regime.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .adapt import AdaptationConfig, adapt_weights
from .core import iou, validate_mask
from .identify import build_bundle
from .segment import segment_frame

REPORT_FORMAT = "samg-suite-report"
REPORT_VERSION = 1

SETTING_NAMES = ("color_easy", "color_hard", "video_easy", "video_hard")
TRAIN_SETTING = "train"

_SETTING_IDS = {TRAIN_SETTING: 0, "color_easy": 1, "color_hard": 2, "video_easy": 3, "video_hard": 4}

BACKGROUND_BLUE_MAX = 160  # backgrounds never enter the objects' color region


@dataclass(frozen=True)
class ObjectSpec:
    shape: str  # disk | rectangle | chain
    color: tuple
    size: float
    trajectory_seed: int = 0

    def __post_init__(self):
        if self.shape not in ("disk", "rectangle", "chain"):
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.color[2] < 200:
            raise ValueError(
                f"object color {self.color} leaves the reserved object color region "
                "(blue channel must be >= 200)"
            )


@dataclass(frozen=True)
class SceneSpec:
    height: int = 84
    width: int = 84
    objects: tuple = ()
    table_rows: int = 12

    def __post_init__(self):
        colors = [o.color for o in self.objects]
        for i in range(len(colors)):
            for j in range(i + 1, len(colors)):
                if max(abs(a - b) for a, b in zip(colors[i], colors[j])) < 30:
                    raise ValueError(
                        f"object colors {colors[i]} and {colors[j]} are too close "
                        "to keep identities distinct"
                    )


def default_scene(height=84, width=84) -> SceneSpec:
    return SceneSpec(
        height=height,
        width=width,
        objects=(
            ObjectSpec("disk", (40, 40, 230), size=7.0, trajectory_seed=101),
            ObjectSpec("rectangle", (140, 40, 220), size=6.0, trajectory_seed=202),
            ObjectSpec("chain", (40, 140, 215), size=2.0, trajectory_seed=303),
        ),
        table_rows=12,
    )


# --- trajectories -----------------------------------------------------------

def object_trajectory(obj: ObjectSpec, lane, frame_index, width):
    """Deterministic smooth center position of an object at a frame.

    Depends only on the object's own trajectory seed, its lane, and the frame
    index — never on the perturbation setting or suite seed, so ground truth
    is comparable across regimes.
    """
    lane_top, lane_bottom = lane
    rng = np.random.default_rng(obj.trajectory_seed)
    freq_c = rng.uniform(0.02, 0.05)
    freq_r = rng.uniform(0.01, 0.03)
    phase_c = rng.uniform(0, 2 * np.pi)
    phase_r = rng.uniform(0, 2 * np.pi)
    lane_mid = (lane_top + lane_bottom) / 2.0
    extent = _object_extent(obj)
    amp_c = max((width - 2 * extent[1]) / 2.0 - 2.0, 0.0)
    amp_r = max((lane_bottom - lane_top - 2 * extent[0]) / 2.0 - 1.0, 0.0)
    row = lane_mid + amp_r * np.sin(2 * np.pi * freq_r * frame_index + phase_r)
    col = width / 2.0 + amp_c * np.sin(2 * np.pi * freq_c * frame_index + phase_c)
    return float(row), float(col)


def _object_extent(obj: ObjectSpec):
    """(half-height, half-width) bound used to keep objects inside their lane."""
    if obj.shape == "disk":
        return obj.size + 1, obj.size + 1
    if obj.shape == "rectangle":
        return obj.size + 1, obj.size * 0.8 + 1
    # chain: 3 links of length 5 with +-35 degree articulation
    return 3 * 5 * np.sin(0.62) / 2 + obj.size + 1, (3 * 5 + 2 * obj.size) / 2 + 1


def _draw_object(canvas_shape, obj: ObjectSpec, center, frame_index):
    h, w = canvas_shape
    rr, cc = np.mgrid[0:h, 0:w]
    r0, c0 = center
    if obj.shape == "disk":
        return (rr - r0) ** 2 + (cc - c0) ** 2 <= obj.size**2
    if obj.shape == "rectangle":
        half_h, half_w = obj.size, obj.size * 0.8
        return (np.abs(rr - r0) <= half_h) & (np.abs(cc - c0) <= half_w)
    # articulated chain: 3 capsule links with oscillating joint angles
    rng = np.random.default_rng(obj.trajectory_seed + 7)
    phases = rng.uniform(0, 2 * np.pi, 3)
    freqs = rng.uniform(0.03, 0.08, 3)
    mask = np.zeros((h, w), dtype=bool)
    link_len = 5.0
    # start so the chain stays centered on the trajectory point
    point = np.array([r0, c0 - 1.5 * link_len * np.cos(0.3)])
    for i in range(3):
        angle = 0.6 * np.sin(2 * np.pi * freqs[i] * frame_index + phases[i])
        step = np.array([link_len * np.sin(angle), link_len * np.cos(angle)])
        for t in np.linspace(0.0, 1.0, 6):
            p = point + t * step
            mask |= (rr - p[0]) ** 2 + (cc - p[1]) ** 2 <= obj.size**2
        point = point + step
    return mask


# --- backgrounds ------------------------------------------------------------

def _value_noise(rng, h, w, scale, offset_r, offset_c, grid_n=8):
    coarse = rng.random((grid_n, grid_n))
    r = (np.arange(h) + offset_r) / scale
    c = (np.arange(w) + offset_c) / scale
    r0 = np.floor(r).astype(int)
    c0 = np.floor(c).astype(int)
    fr = (r - r0)[:, None]
    fc = (c - c0)[None, :]
    g = lambda i, j: coarse[np.mod(i, grid_n)[:, None], np.mod(j, grid_n)[None, :]]
    top = g(r0, c0) * (1 - fc) + g(r0, c0 + 1) * fc
    bot = g(r0 + 1, c0) * (1 - fc) + g(r0 + 1, c0 + 1) * fc
    return top * (1 - fr) + bot * fr


def _uniform_color(rng, wide):
    if wide:
        return np.array([rng.integers(0, 256), rng.integers(0, 256), rng.integers(0, 161)])
    return np.array([rng.integers(60, 201), rng.integers(60, 201), rng.integers(40, 141)])


def _stripes(rng, h, w, horizontal=False):
    c0 = _uniform_color(rng, wide=True)
    c1 = _uniform_color(rng, wide=True)
    width = int(rng.integers(2, 5))
    idx = (np.arange(h)[:, None] if horizontal else np.arange(w)[None, :]) // width % 2
    return np.where(np.broadcast_to(idx, (h, w))[..., None] == 0, c0, c1)


def _render_background(spec: SceneSpec, setting, frame_index, seed):
    h, w = spec.height, spec.width
    rng = np.random.default_rng([seed, _SETTING_IDS[setting]])
    bg = np.zeros((h, w, 3), dtype=np.float64)

    if setting == TRAIN_SETTING:
        bg[:] = (120, 120, 110)
        table = np.full((spec.table_rows, w, 3), (90, 80, 70), dtype=np.float64)
    elif setting in ("color_easy", "color_hard"):
        bg[:] = _uniform_color(rng, wide=setting == "color_hard")
        if setting == "color_hard":
            table = _stripes(rng, spec.table_rows, w)
        else:
            table = np.broadcast_to(
                _uniform_color(rng, wide=False), (spec.table_rows, w, 3)
            ).copy()
    else:
        hard = setting == "video_hard"
        speed = 2.5 if hard else 0.5
        scale = 7.0 if hard else 16.0
        c0 = _uniform_color(rng, wide=hard)
        c1 = _uniform_color(rng, wide=hard)
        if hard:
            # force high contrast between the two noise anchor colors
            c1 = np.array([255 - c0[0], 255 - c0[1], max(0, 140 - int(c0[2]))])
        noise = _value_noise(rng, h, w, scale, frame_index * speed, frame_index * speed * 0.7)
        if hard:
            noise = 0.6 * noise + 0.4 * _value_noise(
                rng, h, w, scale / 2, -frame_index * speed, frame_index * speed
            )
        bg = c0[None, None, :] + noise[..., None] * (c1 - c0)[None, None, :]
        if hard:
            stripes = _stripes(rng, h, w, horizontal=True).astype(np.float64)
            shift = int(frame_index * 3) % h
            bg = 0.75 * bg + 0.25 * np.roll(stripes, shift, axis=0)
            # drifting brightness gradient: the moving-light stand-in
            rr, cc = np.mgrid[0:h, 0:w]
            phase = 2 * np.pi * frame_index * 0.05
            gain = 1.0 + 0.3 * np.sin(2 * np.pi * (rr + 2 * cc) / (2.0 * w) + phase)
            bg = bg * gain[..., None]
        table = _stripes(rng, spec.table_rows, w) if hard else np.broadcast_to(
            _uniform_color(rng, wide=False), (spec.table_rows, w, 3)
        ).copy()

    bg[h - spec.table_rows :, :, :] = table
    bg = np.clip(bg, 0, 255)
    bg[:, :, 2] = np.minimum(bg[:, :, 2], BACKGROUND_BLUE_MAX)
    return bg.astype(np.uint8)


def _lanes(spec: SceneSpec):
    usable = spec.height - spec.table_rows
    n = len(spec.objects)
    bounds = []
    for i in range(n):
        top = i * usable // n
        bottom = (i + 1) * usable // n
        bounds.append((top, bottom))
    return bounds


def generate_scene(spec: SceneSpec, setting, frame_index, seed):
    """Render one frame plus exact per-object ground-truth masks.

    Bit-deterministic in (spec, setting, frame_index, seed). In color regimes
    only background and table pixels vary with the seed; in video regimes the
    background also animates with the frame index.
    """
    if setting not in _SETTING_IDS:
        raise ValueError(f"unknown setting {setting!r}")
    if not spec.objects:
        raise ValueError("scene spec has no objects")
    image = _render_background(spec, setting, frame_index, seed)
    masks = []
    occupied = np.zeros((spec.height, spec.width), dtype=bool)
    for obj, lane in zip(spec.objects, _lanes(spec)):
        center = object_trajectory(obj, lane, frame_index, spec.width)
        mask = _draw_object((spec.height, spec.width), obj, center, frame_index)
        if not mask.any():
            raise ValueError(f"object {obj.shape} rendered empty at frame {frame_index}")
        if (mask & occupied).any():
            raise ValueError(f"scene spec places overlapping objects at frame {frame_index}")
        occupied |= mask
        image[mask] = obj.color
        masks.append(mask)
    return image, masks


def default_extra_points(mask, count=3):
    """Deterministic interior points of a mask, spread along its pixels."""
    mask = validate_mask(mask)
    interior = ndimage.binary_erosion(mask, iterations=1)
    pool = interior if np.count_nonzero(interior) >= count else mask
    rows, cols = np.nonzero(pool)
    n = rows.size
    picks = [n // 6, n // 2, (5 * n) // 6][:count]
    return [(int(rows[i]), int(cols[i])) for i in picks]


def training_bundle(spec: SceneSpec, backend, task_name="synthetic-scene", adapt=True,
                    adaptation=AdaptationConfig()):
    """Bundle from frame 0 of the unperturbed scene, optionally adapted."""
    image, masks = generate_scene(spec, TRAIN_SETTING, frame_index=0, seed=0)
    points = [default_extra_points(m) for m in masks]
    bundle = build_bundle(image, masks, points, backend, task_name=task_name)
    if adapt:
        union = np.zeros(image.shape[:2], dtype=bool)
        for m in masks:
            union |= m
        adapt_weights(image, union, bundle, backend, adaptation)
    return bundle


# --- suite runner -----------------------------------------------------------

def run_suite(bundle, backend, settings=SETTING_NAMES, n_frames=100, seed=0,
              spec: SceneSpec | None = None, clock=time.perf_counter) -> dict:
    """Segment ``n_frames`` per setting and aggregate per-object IoU statistics.

    Pipeline failures are recorded (IoU 0 for the frame's objects, frame
    counted as failed), never dropped. ``clock`` is injectable so determinism
    checks can compare full reports byte for byte.
    """
    if n_frames < 1:
        raise ValueError("empty suite: n_frames must be >= 1")
    spec = spec or default_scene()
    unknown = [s for s in settings if s not in SETTING_NAMES]
    if unknown:
        raise ValueError(f"unknown settings: {unknown}")

    # training-frame sanity reference: segmenting the reference frame itself
    train_image, train_masks = generate_scene(spec, TRAIN_SETTING, 0, 0)
    train_result = segment_frame(train_image, bundle, backend)
    train_iou = float(
        np.mean([iou(pm, gm) for pm, gm in zip(train_result.object_masks, train_masks)])
    )

    per_setting = {}
    for setting in sorted(settings, key=SETTING_NAMES.index):
        ious = []  # one entry per (frame, object)
        per_object = {obj_idx: [] for obj_idx in range(len(spec.objects))}
        times = []
        failed = 0
        for frame_index in range(n_frames):
            image, gt_masks = generate_scene(spec, setting, frame_index, seed)
            start = clock()
            try:
                result = segment_frame(image, bundle, backend)
                frame_ious = [iou(pm, gm) for pm, gm in zip(result.object_masks, gt_masks)]
            except Exception:
                failed += 1
                frame_ious = [0.0] * len(gt_masks)
            times.append(clock() - start)
            for obj_idx, value in enumerate(frame_ious):
                per_object[obj_idx].append(value)
                ious.append(value)
        arr = np.asarray(ious)
        per_setting[setting] = {
            "mean_iou": float(arr.mean()),
            "std_iou": float(arr.std()),
            "min_iou": float(arr.min()),
            "frames": n_frames,
            "failed_frames": failed,
            "wall_time_per_frame_s": float(np.mean(times)),
            "per_object": [
                {"object_id": k, "mean_iou": float(np.mean(v)), "min_iou": float(np.min(v))}
                for k, v in sorted(per_object.items())
            ],
        }

    return {
        "format": REPORT_FORMAT,
        "format_version": REPORT_VERSION,
        "backend": backend.name,
        "task_name": bundle.task_name,
        "canvas": [spec.width, spec.height],
        "n_objects": len(spec.objects),
        "n_frames": n_frames,
        "seed": seed,
        "train_frame_iou": train_iou,
        "settings": per_setting,
    }


def report_to_json(report) -> str:
    return json.dumps(report, sort_keys=True, separators=(",", ":"))


def save_report(report, path):
    Path(path).write_text(report_to_json(report))


def load_report(path) -> dict:
    data = json.loads(Path(path).read_text())
    if data.get("format") != REPORT_FORMAT:
        raise ValueError("not a suite report file")
    if data.get("format_version") != REPORT_VERSION:
        raise ValueError(f"unsupported report version {data.get('format_version')!r}")
    return data
