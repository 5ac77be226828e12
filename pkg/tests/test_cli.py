from __future__ import annotations

import json
import subprocess
import sys

import pytest

from ghostsim.cli import EXIT_IO, EXIT_OK, EXIT_VALIDATION, main


def run(tmp_path, *argv, config=None, out="out"):
    args = list(argv) + ["--out", str(tmp_path / out), "--quiet"]
    if config is not None:
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        args += ["--config", str(path)]
    return main(args)


def _errors(tmp_path, out="out"):
    return [e["code"] for e in json.loads((tmp_path / out / "errors.json").read_text())["errors"]]


def test_simulate_happy_path_and_determinism(tmp_path):
    assert run(tmp_path, "simulate", config={"workload": "gcn/er64"}, out="a") == EXIT_OK
    assert run(tmp_path, "simulate", config={"workload": "gcn/er64"}, out="b") == EXIT_OK
    a, b = tmp_path / "a", tmp_path / "b"
    assert sorted(p.name for p in a.iterdir()) == ["report.csv", "report.json"]
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    doc = json.loads((a / "report.json").read_text())
    assert set(doc["latency_by_block"]) == {"aggregate", "combine", "update"}
    assert len(doc["hash"]) == 64


def test_simulate_with_files(tmp_path):
    (tmp_path / "g.txt").write_text("0 1\n1 2\n2 0\n")
    (tmp_path / "f.csv").write_text("1,0\n0,1\n1,1\n")
    cfg = {"graph": {"path": "g.txt", "num_vertices": 3, "feature_dim": 2, "features": "f.csv"},
           "model": {"family": "gcn", "layers": [{"in_dim": 2, "out_dim": 2}]},
           "arch": {"vector": [4, 2, 2, 2, 2], "optimizations": ["bp", "pp"]}}
    assert run(tmp_path, "simulate", config=cfg) == EXIT_OK
    doc = json.loads((tmp_path / "out" / "report.json").read_text())
    assert doc["config"]["arch"]["V"] == 2 and doc["config"]["optimizations"] == "BP+PP"


def test_simulate_coherent_limit(tmp_path):
    assert run(tmp_path, "simulate", "--arch", "20,20,18,21,17") == EXIT_VALIDATION
    assert _errors(tmp_path) == ["coherent-width-exceeded"]


def test_missing_files_exit_1(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "nope.json"), "--out",
                 str(tmp_path)]) == EXIT_IO
    assert "nope.json" in capsys.readouterr().err
    cfg = {"graph": {"path": "missing.txt", "num_vertices": 3}}
    assert run(tmp_path, "simulate", config=cfg) == EXIT_IO


def test_schema_rejects_unknown_keys(tmp_path):
    assert run(tmp_path, "simulate", config={"colour": "blue"}) == EXIT_VALIDATION
    assert _errors(tmp_path) == ["schema"]


def test_malformed_graph_is_validation_error(tmp_path):
    (tmp_path / "g.txt").write_text("0 1\nzz\n")
    cfg = {"graph": {"path": "g.txt", "num_vertices": 3}}
    assert run(tmp_path, "simulate", config=cfg) == EXIT_VALIDATION


def test_sweep_device(tmp_path):
    assert run(tmp_path, "sweep-device", config={"sweep": {"kind": "device_coherent",
                                                           "ranges": {"lambda_nm": [1520]}}}) == 0
    doc = json.loads((tmp_path / "out" / "sweep_device.json").read_text())
    assert doc["summary"][0]["max_n"] == 20
    assert run(tmp_path, "sweep-device", "--mode", "device_noncoherent", out="nc") == 0
    doc = json.loads((tmp_path / "nc" / "sweep_device.json").read_text())
    assert (doc["summary"][0]["max_wavelengths"], doc["summary"][0]["max_mrs"]) == (18, 36)


def test_sweep_arch_singleton(tmp_path):
    cfg = {"workloads": ["gcn/er64"],
           "sweep": {"kind": "arch", "ranges": {"N": [20], "V": [20], "R_r": [18], "R_c": [7],
                                                "T_r": [17]}}}
    assert run(tmp_path, "sweep-arch", config=cfg) == EXIT_OK
    doc = json.loads((tmp_path / "out" / "sweep_arch.json").read_text())
    assert doc["argmin"] == [20, 20, 18, 7, 17]
    assert (tmp_path / "out" / "sweep_arch.csv").read_text().startswith("rank,N,V")


def test_ablate_baseline_row(tmp_path):
    assert run(tmp_path, "ablate", config={"workloads": ["gcn/er64", "gin/pl64"]}) == EXIT_OK
    rows = (tmp_path / "out" / "ablation.csv").read_text().splitlines()
    assert rows[0].split(",")[1] == "baseline"
    assert all(float(r.split(",")[1]) == 1.0 for r in rows[1:])


def test_gen_graph(tmp_path):
    assert run(tmp_path, "gen-graph", "--kind", "star", "--n", "5", out="s") == EXIT_OK
    lines = (tmp_path / "s" / "graph.txt").read_text().splitlines()
    assert len([l for l in lines if not l.startswith("#")]) == 4
    assert run(tmp_path, "gen-graph", "--kind", "erdos_renyi", "--n", "6", "--param", "0",
               out="e") == EXIT_OK
    lines = (tmp_path / "e" / "graph.txt").read_text().splitlines()
    assert lines and all(l.startswith("#") for l in lines)
    for out in ("p1", "p2"):
        run(tmp_path, "gen-graph", "--kind", "power_law", "--n", "30", "--param", "2.5",
            "--seed", "4", out=out)
    for name in ("graph.txt", "features.csv"):
        assert (tmp_path / "p1" / name).read_bytes() == (tmp_path / "p2" / name).read_bytes()
    assert run(tmp_path, "gen-graph", "--kind", "erdos_renyi", "--n", "4", "--param", "2",
               out="bad") == EXIT_VALIDATION


@pytest.mark.parametrize("argv, config, code, errors", [
    (["--arch", "20,20,18,7,17"], None, EXIT_OK, []),
    (["--bits", "32"], None, EXIT_VALIDATION, ["precision-out-of-range"]),
    (["--arch", "20,20,19,7,17"], None, EXIT_VALIDATION, ["noncoherent-width-exceeded"]),
    ([], {"device": {"laser_max_dbm": -20}}, EXIT_VALIDATION, ["laser-infeasible"]),
])
def test_validate(tmp_path, argv, config, code, errors):
    assert run(tmp_path, "validate", *argv, config=config) == code
    doc = json.loads((tmp_path / "out" / "validation.json").read_text())
    assert doc["ok"] is (code == EXIT_OK)
    assert [e["code"] for e in doc["errors"]] == errors


def test_threads_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv("GHOST_SIM_THREADS", "2")
    from ghostsim.cli import build_parser
    assert build_parser().parse_args(["validate"]).threads == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ghostsim.cli", "validate", "--out",
                           str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["ok"] is True
