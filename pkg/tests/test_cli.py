import json
import subprocess
import sys

import pytest

from cliff_geom.cli import EXIT_INVALID, EXIT_IO, main
from cliff_geom.io import read_csv, read_manifest, verify_manifest


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr().out


def tree(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*"))
            if p.is_file()}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "d"
    assert main(["gen", "--seed", "7", "--n", "3", "--out", str(out)]) == 0
    return out


def test_gen_twice_is_byte_identical(tmp_path, capsys):
    for name in ("a", "b"):
        assert run(capsys, "gen", "--seed", 7, "--n", 10, "--out", tmp_path / name)[0] == 0
    assert tree(tmp_path / "a") == tree(tmp_path / "b")
    m = read_manifest(tmp_path / "a")
    assert m.command == "gen" and m.seed == 7 and len(m.artifacts) == 10
    assert verify_manifest(tmp_path / "a") == []


def test_rerun_into_same_directory(tmp_path, capsys):
    out = tmp_path / "d"
    run(capsys, "gen", "--seed", 1, "--n", 3, "--out", out)
    first = tree(out)
    run(capsys, "gen", "--seed", 1, "--n", 2, "--out", out)
    assert len(read_manifest(out).artifacts) == 2
    assert not (out / "scene_00002.json").exists()
    run(capsys, "gen", "--seed", 1, "--n", 3, "--out", out)
    assert tree(out) == first


def test_foreign_files_are_not_overwritten(tmp_path, capsys):
    (tmp_path / "notes.txt").write_text("mine")
    code, _ = run(capsys, "gen", "--seed", 1, "--n", 1, "--out", tmp_path)
    assert code == EXIT_IO
    assert (tmp_path / "notes.txt").read_text() == "mine"


def test_usage_errors_exit_2(tmp_path):
    for argv in (["gen", "--n", "2", "--out", str(tmp_path)],
                 ["gen", "--seed", "1", "--n", "2", "--out", str(tmp_path), "--bogus"],
                 ["teleport", "--out", str(tmp_path)],
                 ["ablate", "--dataset", "d", "--seeds", "1,x", "--out", str(tmp_path)]):
        with pytest.raises(SystemExit) as err:
            main(argv)
        assert err.value.code == 2


def test_io_and_validation_exit_codes(tmp_path, capsys, dataset):
    assert run(capsys, "fit", "--dataset", tmp_path / "nope", "--out", tmp_path / "o")[0] == EXIT_IO
    (tmp_path / "bad.json").write_text("{not json")
    code, _ = run(capsys, "eval", "--pred", tmp_path / "bad.json", "--gt", dataset,
                  "--out", tmp_path / "e")
    assert code == EXIT_INVALID
    code, _ = run(capsys, "smooth", "--seed", 1, "--beta", -1, "--out", tmp_path / "s")
    assert code == EXIT_INVALID
    code, _ = run(capsys, "fit", "--dataset", dataset, "--prior", "perturbed", "--out", tmp_path / "f")
    assert code == EXIT_INVALID
    code, _ = run(capsys, "train-lifter", "--dataset", dataset, "--seed", 0, "--out", tmp_path / "t")
    assert code == EXIT_INVALID   # fewer than 50 samples


def test_eval_identical_is_zero(tmp_path, capsys, dataset):
    code, out = run(capsys, "eval", "--pred", dataset, "--gt", dataset, "--out", tmp_path, "--json")
    assert code == 0
    summary = json.loads(out)
    assert summary == {"mpjpe_mm": 0.0, "pa_mpjpe_mm": 0.0, "pve_mm": 0.0, "yaw_deg": 0.0}
    header, rows = read_csv(tmp_path / "metrics.csv")
    assert header == ["index", "mpjpe_mm", "pa_mpjpe_mm", "pve_mm", "yaw_deg"]
    assert len(rows) == 4 and rows[-1][0] == "mean"
    assert all(float(v) == 0.0 for r in rows for v in r[1:])


def test_single_scene_files_evaluate(tmp_path, capsys, dataset):
    scene = dataset / "scene_00000.json"
    code, out = run(capsys, "eval", "--pred", scene, "--gt", scene, "--out", tmp_path, "--json")
    assert code == 0 and json.loads(out)["mpjpe_mm"] == 0.0


def test_fit_annotate_eval_chain(tmp_path, capsys, dataset):
    code, out = run(capsys, "fit", "--dataset", dataset, "--prior", "perturbed", "--seed", 0,
                    "--out", tmp_path / "f", "--json")
    assert code == 0 and json.loads(out)["fits"] == 3
    fits = json.loads((tmp_path / "f" / "fits.json").read_text())["fits"]
    assert "wall_time" not in fits[0] and fits[0]["scene"] == 0
    code, _ = run(capsys, "eval", "--pred", tmp_path / "f" / "fits.json", "--pred-source", "fits",
                  "--gt", dataset, "--out", tmp_path / "e1")
    assert code == 0
    code, out = run(capsys, "annotate", "--dataset", dataset, "--seed", 0, "--sigma", 2,
                    "--out", tmp_path / "a", "--json")
    assert code == 0 and json.loads(out)["failed"] == 0
    code, out = run(capsys, "eval", "--pred", tmp_path / "a" / "scenes", "--pred-source",
                    "pseudo_gt", "--gt", dataset, "--out", tmp_path / "e2", "--json")
    assert code == 0 and json.loads(out)["mpjpe_mm"] > 0
    code, _ = run(capsys, "eval", "--pred", dataset, "--pred-source", "pseudo_gt", "--gt", dataset,
                  "--out", tmp_path / "e3")
    assert code == EXIT_INVALID


def test_json_flag_keeps_stdout_machine_readable(tmp_path, capsys):
    code, out = run(capsys, "smooth", "--seed", 2, "--frames", 30, "--out", tmp_path, "--json",
                    "--min-cutoff", 0.8, "--beta", 0.3, "--d-cutoff", 1.2, "--fps", 25)
    assert code == 0
    assert len(out.strip().splitlines()) == 1
    assert json.loads(out)["accel_after"] < json.loads(out)["accel_before"]
    cfg = read_manifest(tmp_path).config
    assert (cfg["min_cutoff"], cfg["beta"], cfg["d_cutoff"], cfg["fps"]) == (0.8, 0.3, 1.2, 25.0)


def test_smooth_from_file(tmp_path, capsys):
    frames = [[[0.0, 0.0, float(t % 2)]] for t in range(10)]
    (tmp_path / "in.json").write_text(json.dumps({"frames": frames}))
    code, _ = run(capsys, "smooth", "--input", tmp_path / "in.json", "--out", tmp_path / "o")
    assert code == 0
    out = json.loads((tmp_path / "o" / "smoothed.json").read_text())["frames"]
    assert len(out) == 10 and out[0] == frames[0]


def test_gen_ambiguity(tmp_path, capsys):
    code, out = run(capsys, "gen-ambiguity", "--seed", 3, "--n", 2, "--out", tmp_path, "--json")
    assert code == 0
    names = sorted(read_manifest(tmp_path).artifacts)
    assert names == ["gammas.csv", "pair_00000_a_center.json", "pair_00000_b_offset.json",
                     "pair_00001_a_center.json", "pair_00001_b_offset.json"]
    assert 5 <= json.loads(out)["mean_gamma_deg"] <= 30


def test_ablate_table_shape(tmp_path, capsys):
    run(capsys, "gen", "--seed", 5, "--n", 50, "--out", tmp_path / "d")
    code, _ = run(capsys, "ablate", "--dataset", tmp_path / "d", "--seeds", "1,2,3", "--epochs", 1,
                  "--n-eval", 3, "--out", tmp_path / "ab")
    assert code == 0
    header, rows = read_csv(tmp_path / "ab" / "ablation.csv")
    assert [r[0] for r in rows] == ["neither", "cs_only", "ci_cs"]
    assert header == ["config", "mpjpe_mean", "mpjpe_std", "pa_mpjpe_mean", "pa_mpjpe_std",
                      "yaw_mean", "yaw_std"]
    _, per_seed = read_csv(tmp_path / "ab" / "ablation_per_seed.csv")
    assert len(per_seed) == 9


def test_focal_sweep_outputs(tmp_path, capsys, dataset):
    code, out = run(capsys, "focal-sweep", "--dataset", dataset, "--seed", 0, "--factors",
                    "0.5,1,2", "--out", tmp_path, "--json")
    assert code == 0
    header, rows = read_csv(tmp_path / "focal_sweep.csv")
    assert header == ["series", "factor", "mpjpe_mm"]
    assert [float(r[1]) for r in rows] == [0.5, 1.0, 2.0]
    assert (tmp_path / "focal_sweep.svg").exists()


def test_console_script_and_version():
    res = subprocess.run([sys.executable, "-m", "cliff_geom.cli", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "0.1.0"
    res = subprocess.run([sys.executable, "-m", "cliff_geom.cli", "gen"], capture_output=True,
                         text=True)
    assert res.returncode == 2 and "usage" in res.stderr


def test_rerun_clears_nested_artifacts(tmp_path, capsys, dataset):
    out = tmp_path / "a"
    for _ in range(2):
        code, _ = run(capsys, "annotate", "--dataset", dataset, "--seed", 0, "--out", out)
        assert code == 0
    assert sorted(p.name for p in (out / "scenes").iterdir()) == [
        "scene_00000.json", "scene_00001.json", "scene_00002.json"]
