import io
import json
import struct
import sys

import numpy as np
import pytest
from PIL import Image

from samg.bench import default_extra_points, default_scene, generate_scene
from samg.cli import main

from conftest import tiny_scene


@pytest.fixture
def annotated_scene(tmp_path):
    """Reference image + labeled mask + points files for the default scene."""
    spec = default_scene()
    img, masks = generate_scene(spec, "train", 0, 0)
    Image.fromarray(img).save(tmp_path / "ref.png")
    labeled = np.zeros(img.shape[:2], dtype=np.uint8)
    for i, m in enumerate(masks):
        labeled[m] = i + 1
    Image.fromarray(labeled, mode="L").save(tmp_path / "mask.png")
    points = {
        "objects": [
            {"object_id": i, "points": [[c, r] for (r, c) in default_extra_points(m)]}
            for i, m in enumerate(masks)
        ]
    }
    (tmp_path / "points.json").write_text(json.dumps(points))
    return tmp_path, spec, img, masks, points


def _identify(tmp_path, capsys, extra=()):
    rc = main([
        "identify",
        "--image", str(tmp_path / "ref.png"),
        "--mask", str(tmp_path / "mask.png"),
        "--points", str(tmp_path / "points.json"),
        "--task", "scene",
        "--out", str(tmp_path / "bundle.json"),
        *extra,
    ])
    out = capsys.readouterr().out
    return rc, (json.loads(out) if out.strip() else None)


def test_identify_reports_matrix_shapes(annotated_scene, capsys):
    tmp_path, spec, *_ = annotated_scene
    rc, summary = _identify(tmp_path, capsys)
    assert rc == 0
    assert summary["objects"] == 3
    assert summary["matrix_seg"] == [12, 256]
    assert summary["matrix_ctx"] == [12, 768]
    assert (tmp_path / "bundle.json").is_file()


def test_identify_rejects_point_outside_mask(annotated_scene, capsys, caplog):
    tmp_path, spec, img, masks, points = annotated_scene
    points["objects"][1]["points"][2] = [0, 0]  # background corner
    (tmp_path / "points.json").write_text(json.dumps(points))
    rc, _ = _identify(tmp_path, capsys)
    assert rc != 0
    assert "object 1 point 2" in caplog.text


def test_identify_demands_points_for_every_object(annotated_scene, capsys, caplog):
    tmp_path, spec, img, masks, points = annotated_scene
    (tmp_path / "points.json").write_text(json.dumps({"objects": points["objects"][:1]}))
    rc, _ = _identify(tmp_path, capsys)
    assert rc != 0
    assert "3" in caplog.text  # error demands 3 points per object


def test_adapt_prints_losses_and_updates_bundle(annotated_scene, capsys):
    tmp_path, *_ = annotated_scene
    rc, _ = _identify(tmp_path, capsys)
    assert rc == 0
    rc = main([
        "adapt",
        "--bundle", str(tmp_path / "bundle.json"),
        "--image", str(tmp_path / "ref.png"),
        "--mask", str(tmp_path / "mask.png"),
        "--steps", "40",
    ])
    out = json.loads(capsys.readouterr().out)
    assert rc == 0
    assert set(out) == {"w1", "w2", "initial_loss", "final_loss"}
    assert out["final_loss"] <= out["initial_loss"] + 1e-12


def test_segment_directory_preserves_names(annotated_scene, capsys):
    tmp_path, spec, *_ = annotated_scene
    rc, _ = _identify(tmp_path, capsys)
    frames = tmp_path / "frames"
    frames.mkdir()
    for i in range(3):
        img, _ = generate_scene(spec, "color_easy", i, 2)
        Image.fromarray(img).save(frames / f"obs{i}.png")
    out_dir = tmp_path / "out"
    rc = main([
        "segment",
        "--bundle", str(tmp_path / "bundle.json"),
        "--input", str(frames),
        "--out-dir", str(out_dir),
        "--debug",
    ])
    assert rc == 0
    names = sorted(p.name for p in out_dir.iterdir())
    assert "obs0_masked.png" in names and "obs2_masked.png" in names
    assert "obs1_mask.png" in names

    debug = json.loads((out_dir / "obs0_debug.json").read_text())
    for obj in debug["objects"]:
        assert [p["point_count"] for p in obj["passes"]] == [5, 6, 7]
        assert [p["has_box"] for p in obj["passes"]] == [False, True, True]
        assert [p["has_prior_logits"] for p in obj["passes"]] == [False, True, True]


def test_stream_mode_zero_frames_clean_exit(annotated_scene, capsys, monkeypatch):
    tmp_path, *_ = annotated_scene
    _identify(tmp_path, capsys)

    monkeypatch.setattr(sys, "stdin", type("S", (), {"buffer": io.BytesIO(b"")})())
    rc = main(["segment", "--bundle", str(tmp_path / "bundle.json"), "--input", "-"])
    assert rc == 0


def test_stream_mode_roundtrip(annotated_scene, capsys, monkeypatch):
    tmp_path, spec, *_ = annotated_scene
    _identify(tmp_path, capsys)

    header = struct.Struct("<III")
    payload = io.BytesIO()
    frames = []
    for i in range(2):
        img, _ = generate_scene(spec, "color_easy", i, 4)
        frames.append(img)
        payload.write(header.pack(img.shape[1], img.shape[0], 3))
        payload.write(img.tobytes())
    payload.seek(0)

    out_buf = io.BytesIO()
    monkeypatch.setattr(sys, "stdin", type("S", (), {"buffer": payload})())

    class _Out:
        buffer = out_buf

        @staticmethod
        def flush():
            pass

    monkeypatch.setattr(sys, "stdout", _Out())
    rc = main(["segment", "--bundle", str(tmp_path / "bundle.json"), "--input", "-"])
    assert rc == 0

    out_buf.seek(0)
    for original in frames:
        w, h, ch = header.unpack(out_buf.read(header.size))
        assert (w, h, ch) == (original.shape[1], original.shape[0], 3)
        masked = np.frombuffer(out_buf.read(w * h * 3), dtype=np.uint8).reshape(h, w, 3)
        # masked pixels are either black or the original value
        changed = (masked != original).any(axis=2)
        assert (masked[changed] == 0).all()
    assert not out_buf.read()


def test_eval_writes_report(tmp_path, capsys):
    report_path = tmp_path / "report.json"
    rc = main([
        "eval", "--suite", "color_easy", "--frames", "2", "--seed", "3",
        "--report", str(report_path),
    ])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)
    assert "color_easy" in summary["settings"]
    report = json.loads(report_path.read_text())
    assert report["settings"]["color_easy"]["frames"] == 2
    assert "wall_time_per_frame_s" in report["settings"]["color_easy"]


def test_missing_input_path_fails(annotated_scene, capsys):
    tmp_path, *_ = annotated_scene
    _identify(tmp_path, capsys)
    rc = main([
        "segment", "--bundle", str(tmp_path / "bundle.json"),
        "--input", str(tmp_path / "nope"),
    ])
    assert rc == 2
