import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from pliks.cli import main
from pliks.model import load_model


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    model = d / "model.json"
    assert main(["gen-model", "--seed", "0", "--out", str(model)]) == 0
    scenario = d / "scenario.json"
    assert main(["gen-scenario", "--model", str(model), "--seed", "3", "--out", str(scenario)]) == 0
    return d, model, scenario


def run(args, capsys):
    code = main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


def test_gen_model(tmp_path, capsys):
    out = tmp_path / "m.json"
    code, text, _ = run(["gen-model", "--joints", 24, "--verts-per-seg", 32, "--shapes", 10,
                         "--seed", 7, "--out", out], capsys)
    assert code == 0 and text.strip() == "N=768 K=24 S=10"
    m = load_model(out)
    assert (m.num_vertices, m.num_joints) == (768, 24)
    first = out.read_bytes()
    run(["gen-model", "--joints", 24, "--verts-per-seg", 32, "--shapes", 10, "--seed", 7,
         "--out", out], capsys)
    assert out.read_bytes() == first
    code, text, _ = run(["gen-model", "--joints", 1, "--out", tmp_path / "one.json"], capsys)
    assert code == 0 and load_model(tmp_path / "one.json").num_joints == 1


def test_fit_two_passes(files, capsys):
    d, model, scenario = files
    code, text, _ = run(["fit", "--model", model, "--scenario", scenario, "--iterations", 2,
                         "--omega-beta", 0], capsys)
    assert code == 0
    res = json.loads(text)
    r = res["per_pass_residuals"]
    assert len(r) == 2 and r[1] <= r[0]
    assert res["metrics"]["mpjpe"] < 10
    assert res["config"]["iterations"] == 2 and "out" not in res["config"]


def test_fit_observation_with_policy(files, capsys, tmp_path):
    d, model, scenario = files
    data = json.loads(scenario.read_text())
    obs = tmp_path / "obs.json"
    obs.write_text(json.dumps(data["observation"]))
    code, text, _ = run(["fit", "--model", model, "--observation", obs, "--camera-policy", "diag",
                         "--image-size", 1280, 720], capsys)
    assert code == 0
    diag = json.loads(text)["diagnostics"]
    assert diag["assumed_focal"] == pytest.approx(1468.6, abs=0.05)
    assert "metrics" not in json.loads(text)


def test_fit_without_depth_lifts_flat(files, capsys, tmp_path):
    d, model, scenario = files
    data = json.loads(scenario.read_text())
    obs = dict(data["observation"])
    del obs["depth"]
    (tmp_path / "o.json").write_text(json.dumps(obs))
    (tmp_path / "c.json").write_text(json.dumps(data["camera"]))
    (tmp_path / "k.json").write_text(json.dumps(data["crop"]))
    code, text, _ = run(["fit", "--model", model, "--observation", tmp_path / "o.json",
                         "--camera", tmp_path / "c.json", "--crop", tmp_path / "k.json",
                         "--iterations", 2], capsys)
    assert code == 0
    res = json.loads(text)
    assert res["diagnostics"]["depth_provided"] is False
    assert 5.0 < res["global_translation"][2] < 9.0


def test_fit_constraints(files, capsys, tmp_path):
    d, model, scenario = files
    cons = tmp_path / "cons.json"
    cons.write_text(json.dumps([{"block": "translation", "joint": 0, "axis": 2, "rhs": 7.0,
                                 "weight": 0.2}]))
    code, text, _ = run(["fit", "--model", model, "--scenario", scenario, "--constraints", cons],
                        capsys)
    assert code == 0 and json.loads(text)["diagnostics"]["constraint_count"] == 1


def test_malformed_observation(files, capsys, tmp_path):
    d, model, _ = files
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"uv": [1, 2, 3], "weights": [1]}))
    code, _, err = run(["fit", "--model", model, "--observation", bad, "--image-size", 640, 480],
                       capsys)
    assert code == 2
    msg = json.loads(err)
    assert msg["error"] == "input_error" and "uv" in msg["message"]
    bad.write_text("{not json")
    code, _, err = run(["fit", "--model", model, "--observation", bad], capsys)
    assert code == 2


def test_exit_codes(files, capsys, tmp_path):
    d, model, scenario = files
    code, _, err = run(["fit", "--model", tmp_path / "missing.json", "--scenario", scenario],
                       capsys)
    assert code == 3 and json.loads(err)["exit_code"] == 3
    code, _, _ = run(["fit", "--model", model, "--scenario", scenario, "--out", scenario], capsys)
    assert code == 2
    code, _, _ = run(["bench", "--model", model, "--num", 0], capsys)
    assert code == 2


def test_solver_failure_exit_code(files, capsys, tmp_path):
    d, model, scenario = files
    data = json.loads(scenario.read_text())
    m = load_model(model)
    seg = np.flatnonzero(np.argmax(m.blend_weights, axis=0) == 3)
    weights = np.ones(m.num_vertices)
    weights[seg[2:]] = 0.0   # two usable vertices cannot fix a rotation
    data["observation"]["weights"] = weights.tolist()
    (tmp_path / "sparse.json").write_text(json.dumps(data))
    code, _, err = run(["fit", "--model", model, "--scenario", tmp_path / "sparse.json"], capsys)
    assert code == 1
    msg = json.loads(err)
    assert msg["error"] == "solver_error" and "segment 3" in msg["message"]


def test_bench_csv_and_determinism(files, capsys, tmp_path):
    d, model, _ = files
    args = ["bench", "--model", model, "--num", 2, "--seed", 42, "--iterations", 2,
            "--noise-mm", 0, 10, "--omega-beta", 0.1, 2.0]
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert run(args + ["--out", a, "--threads", 1], capsys)[0] == 0
    assert run(args + ["--out", b, "--threads", 2], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0].startswith("# config: ") and lines[1] == "# pliks-report v1"
    rows = list(csv.DictReader(io.StringIO("\n".join(lines[2:]))))
    assert len(rows) == 4 * 3
    assert sum(r["scenario_id"] == "mean" for r in rows) == 4
    assert all(r["status"] == "ok" for r in rows)


def test_bench_are_only_json(files, capsys):
    d, model, _ = files
    code, text, _ = run(["bench", "--model", model, "--num", 2, "--are-only", "--format", "json"],
                        capsys)
    assert code == 0
    rep = json.loads(text)
    assert rep["conditions"][0]["mode"] == "are" and rep["conditions"][0]["passes"] == 0


def test_sweep_matches_bench_at_true_focal(files, capsys):
    d, model, _ = files
    common = ["--model", model, "--num", 1, "--seed", 5, "--focal", 1500]
    code, text, _ = run(["sweep-focal", *common, "--grid", 1500, "--format", "json"], capsys)
    assert code == 0
    sweep = json.loads(text)["rows"][0]
    code, text, _ = run(["bench", *common, "--format", "json"], capsys)
    mean = json.loads(text)["conditions"][0]["mean"]
    assert sweep["mpjpe"] == mean["mpjpe"] and sweep["pve"] == mean["pve"]


def test_sweep_descending_grid(files, capsys):
    d, model, _ = files
    code, _, err = run(["sweep-focal", "--model", model, "--grid", 2000, 1000], capsys)
    assert code == 2 and "ascending" in json.loads(err)["message"]


def test_every_command_is_deterministic(files, tmp_path):
    d, model, scenario = files
    commands = [
        ["gen-model", "--seed", "11", "--joints", "6"],
        ["gen-scenario", "--model", str(model), "--seed", "2", "--noise-mm", "5"],
        ["fit", "--model", str(model), "--scenario", str(scenario), "--iterations", "2"],
        ["bench", "--model", str(model), "--num", "2", "--seed", "42"],
        ["sweep-focal", "--model", str(model), "--num", "1", "--grid-num", "3"],
    ]
    for i, cmd in enumerate(commands):
        outs = []
        for rep in range(2):
            out = tmp_path / f"{i}_{rep}.out"
            subprocess.run([sys.executable, "-m", "pliks", *cmd, "--out", str(out)], check=True,
                           env={"PLIKS_THREADS": "1", "PATH": ""}, capture_output=True)
            outs.append(out.read_bytes())
        assert outs[0] == outs[1], cmd[0]
