import json

import pytest

from main import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, build_parser, main
from pipeline.run_store import load_manifest


def test_simulate_then_metrics_and_report(scene_file, tmp_path, capsys):
    scene = scene_file()
    out = tmp_path / "run"
    assert main(["simulate", "--scene", str(scene), "--mode", "progressive", "--out", str(out)]) == EXIT_OK
    manifest = load_manifest(out)
    assert manifest["command"] == "simulate" and manifest["kind"] == "barycentric"
    assert (out / "metrics" / "continuity.csv").exists()
    first = (out / "metrics" / "consistency.csv").read_bytes()

    assert main(["metrics", "--run", str(out)]) == EXIT_OK
    assert (out / "metrics" / "consistency.csv").read_bytes() == first

    assert main(["report", "--run", str(out)]) == EXIT_OK
    assert "Speedup" in capsys.readouterr().out


@pytest.mark.parametrize("mode", ["direct-all-levels", "tracks", "embedded"])
def test_baseline_modes(scene_file, tmp_path, mode):
    out = tmp_path / mode
    args = ["simulate", "--scene", str(scene_file()), "--mode", mode, "--out", str(out), "--w", "10"]
    assert main(args) == EXIT_OK
    manifest = load_manifest(out)
    assert manifest["mode"] == mode and manifest["w"] == 10.0
    assert [entry["frames"] for entry in manifest["levels"]] == [9, 9]


def test_levels_flag_limits_hierarchy(scene_file, tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--scene", str(scene_file()), "--levels", "1", "--out", str(out)]) == EXIT_OK
    assert len(load_manifest(out)["levels"]) == 1
    assert not (out / "metrics" / "consistency.csv").read_text().strip().count("\n")


def test_bind_and_prolong(scene_file, tmp_path, capsys):
    scene = str(scene_file())
    assert main(["bind", "--scene", scene, "--out", str(tmp_path / "bind"), "--naive"]) == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    assert printed["bindings"][0]["robust"]["summary"]["unassigned"] == 0
    assert (tmp_path / "bind" / "bindings" / "level_0_to_1.txt").exists()
    assert (tmp_path / "bind" / "bindings" / "level_0_to_1_naive.txt").exists()

    assert main(["prolong", "--scene", scene, "--out", str(tmp_path / "P"), "--kind", "phong"]) == EXIT_OK
    assert load_manifest(tmp_path / "P")["kinds"] == ["phong"]
    assert (tmp_path / "P" / "operators" / "P_0_1.mtx").exists()


def test_prolong_uses_scene_pair_kinds(scene_file, tmp_path):
    hierarchy = {"generate": {
        "shape": "rectangle",
        "params": {"width": 0.6, "height": 0.3, "origin": [-0.3, 0.05]},
        "per_level": [{"nx": 2, "ny": 1}, {"nx": 4, "ny": 2}, {"nx": 8, "ny": 4}],
    }}
    scene = scene_file(hierarchy=hierarchy, progressive={"pair_kinds": ["phong", "barycentric"]})
    assert main(["prolong", "--scene", str(scene), "--out", str(tmp_path / "P")]) == EXIT_OK
    assert load_manifest(tmp_path / "P")["kinds"] == ["phong", "barycentric"]
    assert main(["prolong", "--scene", str(scene), "--out", str(tmp_path / "Q"), "--kind", "bary"]) == EXIT_OK
    assert load_manifest(tmp_path / "Q")["kinds"] == ["barycentric", "barycentric"]




def test_missing_scene_is_a_config_error(tmp_path, capsys):
    code = main(["simulate", "--scene", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "run")])
    assert code == EXIT_CONFIG
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["error"] == "ConfigError" and record["stage"] == "simulate"


def test_invalid_scene_is_a_config_error(scene_file, tmp_path):
    scene = scene_file(materials={})
    assert main(["simulate", "--scene", str(scene), "--out", str(tmp_path / "run")]) == EXIT_CONFIG


def test_negative_weight_is_a_config_error(scene_file, tmp_path):
    args = ["simulate", "--scene", str(scene_file()), "--out", str(tmp_path / "run"), "--w", "-1"]
    assert main(args) == EXIT_CONFIG


def test_starting_in_contact_is_numerical(scene_file, tmp_path, capsys):
    scene = scene_file(colliders=[{"type": "half_plane", "normal": [0.0, 1.0], "offset": 0.1}])
    assert main(["simulate", "--scene", str(scene), "--out", str(tmp_path / "run")]) == EXIT_NUMERICAL
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "InfeasibleStateError"


def test_metrics_on_unfinished_run(tmp_path):
    assert main(["metrics", "--run", str(tmp_path)]) == EXIT_NUMERICAL


def test_parser_rejects_unknown_mode():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["simulate", "--scene", "s.yaml", "--out", "o", "--mode", "fastest"])
