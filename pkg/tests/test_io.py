import json

import numpy as np
import pytest

from cliff_geom import io
from cliff_geom.io import (
    DatasetError, RunManifest, canonical_json, convert_coords, emit_plot, load_dataset,
    parallel_map, read_csv, read_manifest, save_dataset, threads, verify_manifest, write_csv,
)
from cliff_geom.synthetic import gen_dataset, scene_to_dict


def square(x):
    return x * x


def test_convert_coords():
    assert np.array_equal(convert_coords([0, 0], 1920, 1080), [960, 540])
    assert np.array_equal(convert_coords([-960, -540], 1920, 1080), [0, 0])
    pts = np.random.default_rng(0).normal(0, 300, (20, 2))
    back = convert_coords(convert_coords(pts, 640, 480), 640, 480, to="center")
    assert np.allclose(back, pts, atol=1e-12)
    with pytest.raises(ValueError):
        convert_coords(pts, 640, 480, to="bottom-left")


def test_canonical_json_rejects_nan():
    with pytest.raises(ValueError):
        canonical_json({"x": float("nan")})


def test_csv_round_trip(tmp_path):
    rows = [[1, 0.1, "a"], [2, 1e-300, "b"], [3, True, "c"]]
    write_csv(tmp_path / "t.csv", ["i", "v", "s"], rows)
    header, back = read_csv(tmp_path / "t.csv")
    assert header == ["i", "v", "s"]
    assert [float(r[1]) for r in back[:2]] == [0.1, 1e-300]
    assert back[2][1] == "true"
    first = (tmp_path / "t.csv").read_bytes()
    write_csv(tmp_path / "t.csv", header, back)
    assert (tmp_path / "t.csv").read_bytes() == first


def test_dataset_round_trip(tmp_path):
    scenes = gen_dataset(1, 3)
    save_dataset(scenes, tmp_path / "d")
    loaded = load_dataset(tmp_path / "d")
    assert [canonical_json(scene_to_dict(s)) for s in loaded] == \
        [canonical_json(scene_to_dict(s)) for s in scenes]
    save_dataset(loaded, tmp_path / "e")
    for name in ("scene_00000.json", "scene_00002.json"):
        assert (tmp_path / "d" / name).read_bytes() == (tmp_path / "e" / name).read_bytes()
    assert len(load_dataset(tmp_path / "d" / "scene_00001.json")) == 1


def test_dataset_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "missing")
    (tmp_path / "empty").mkdir()
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "empty")
    (tmp_path / "bad.json").write_text(json.dumps({"camera": {}}))
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "bad.json")


def test_manifest(tmp_path):
    (tmp_path / "a.txt").write_text("hello")
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "b.txt").write_text("world")
    m = RunManifest("gen", {"n": 3}, 7)
    m.write(tmp_path)
    back = read_manifest(tmp_path)
    assert back.same_run(m) and back.artifacts == m.artifacts
    assert sorted(back.artifacts) == ["a.txt", "sub/b.txt"]
    assert verify_manifest(tmp_path) == []
    (tmp_path / "a.txt").write_text("changed")
    assert verify_manifest(tmp_path) == ["a.txt"]
    assert RunManifest.from_dict(back.to_dict()).to_dict() == back.to_dict()


def test_emit_plot(tmp_path):
    csv_path, svg_path = emit_plot([(1.0, 2.0)], tmp_path / "one")
    header, rows = read_csv(csv_path)
    assert len(rows) == 1 and header == ["series", "x", "y"]
    assert svg_path.read_text().startswith("<svg")
    first = svg_path.read_bytes(), csv_path.read_bytes()
    emit_plot([(1.0, 2.0)], tmp_path / "one.svg")
    assert (svg_path.read_bytes(), csv_path.read_bytes()) == first
    with pytest.raises(ValueError):
        emit_plot([], tmp_path / "none")
    with pytest.raises(ValueError):
        emit_plot({"a": []}, tmp_path / "none")


def test_emit_plot_multiple_series(tmp_path):
    csv_path, svg_path = emit_plot({"a": [(0, 1), (1, 2)], "b": [(0, 3)]}, tmp_path / "p",
                                   "factor", "mpjpe_mm")
    header, rows = read_csv(csv_path)
    assert header == ["series", "factor", "mpjpe_mm"]
    assert [r[0] for r in rows] == ["a", "a", "b"]
    assert svg_path.read_text().count("<polyline") == 2


def test_threads_env(monkeypatch):
    monkeypatch.delenv("CLIFF_GEOM_THREADS", raising=False)
    assert threads() == 1
    monkeypatch.setenv("CLIFF_GEOM_THREADS", "3")
    assert threads() == 3
    monkeypatch.setenv("CLIFF_GEOM_THREADS", "zero")
    with pytest.raises(ValueError):
        threads()
    monkeypatch.setenv("CLIFF_GEOM_THREADS", "0")
    with pytest.raises(ValueError):
        threads()


def test_parallel_map_matches_serial(monkeypatch):
    monkeypatch.setenv("CLIFF_GEOM_THREADS", "2")
    assert parallel_map(square, list(range(7))) == [x * x for x in range(7)]
    assert io.parallel_map(square, []) == []
