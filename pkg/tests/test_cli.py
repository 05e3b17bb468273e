import json
import subprocess
import sys

import pytest

from ctbus import netio
from ctbus.cli import main


@pytest.fixture
def files(tmp_path, city):
    netio.save_road_network(city.road, tmp_path / "r.gr", tmp_path / "r.co")
    netio.save_transit_network(city.transit, tmp_path / "t.json")
    netio.save_trajectories(city.trajectories, tmp_path / "tr.txt")
    return tmp_path


def inputs(d):
    return ["--road-gr", str(d / "r.gr"), "--road-co", str(d / "r.co"), "--transit", str(d / "t.json"),
            "--trajectories", str(d / "tr.txt")]


def test_help_on_every_subcommand(capsys):
    for cmd in (["preprocess"], ["plan"], ["eval"], ["connectivity"], ["bounds"],
                ["experiment", "monotonicity"], ["experiment", "submodularity"], ["experiment", "bounds"]):
        assert main(cmd + ["--help"]) == 0
    assert "--neighbors" in capsys.readouterr().out


def test_unknown_flag_exits_1(capsys):
    assert main(["plan", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err


def test_range_error_exits_1(files, capsys):
    assert main(["plan", "--w", "1.5"] + inputs(files)) == 1
    assert "w must lie in [0, 1]" in capsys.readouterr().err
    assert main(["plan", "--k", "abc"] + inputs(files)) == 1


def test_plan_without_cache_in_pre_mode(files, capsys):
    assert main(["plan", "--cache", str(files / "c.json")] + inputs(files)) == 1
    assert "run `ctbus preprocess` first" in capsys.readouterr().err


def test_connectivity_of_empty_network(tmp_path, capsys):
    (tmp_path / "e.json").write_text('{"stops": [{"id": "a", "road_vertex": 1, "lat": 0, "lng": 0}]}')
    assert main(["connectivity", "--transit", str(tmp_path / "e.json")]) == 0
    assert json.loads(capsys.readouterr().out)["connectivity"] == 0.0


def test_pipeline(files, capsys):
    cache = str(files / "c.json")
    assert main(["preprocess", "--cache", cache] + inputs(files)) == 0
    rep, geo, trace = files / "rep.json", files / "route.geojson", files / "trace.csv"
    args = ["plan", "--cache", cache, "--k", "6", "--sn", "40", "--record-every", "5",
            "--report", str(rep), "--out", str(geo), "--trace", str(trace)] + inputs(files)
    assert main(args) == 0
    report = json.loads(rep.read_text())
    assert report["routes"][0]["termination"] in ("bound", "iteration_cap", "queue_exhausted")
    assert report["settings"]["k"] == 6
    gj = json.loads(geo.read_text())
    assert gj["type"] == "FeatureCollection" and gj["features"]
    assert trace.read_text().startswith("route,iteration,objective,demand_term,connectivity_term\n")
    first = rep.read_bytes()
    assert main(args) == 0
    assert rep.read_bytes() == first
    assert main(["eval", "--report", str(rep), "--out", str(files / "ev.json")] + inputs(files)) == 0
    ev = json.loads((files / "ev.json").read_text())
    assert ev["routes"][0]["distance_ratio"] >= 1.0


def test_stale_cache_is_rejected(files, capsys):
    cache = str(files / "c.json")
    assert main(["preprocess", "--cache", cache] + inputs(files)) == 0
    with open(files / "tr.txt", "a") as fh:
        fh.write("1 2\n")
    assert main(["plan", "--cache", cache] + inputs(files)) == 1
    assert "stale" in capsys.readouterr().err
    # preprocessing again refreshes it
    assert main(["preprocess", "--cache", cache] + inputs(files)) == 0
    assert main(["plan", "--cache", cache, "--k", "4", "--report", str(files / "r.json")] + inputs(files)) == 0


def test_online_mode_precomputes_in_memory(files):
    rep = files / "rep.json"
    args = ["plan", "--mode", "online", "--k", "4", "--sn", "10", "--itmax", "20", "--report", str(rep)]
    assert main(args + inputs(files)) == 0
    assert json.loads(rep.read_text())["routes"]


def test_settings_precedence(files, monkeypatch):
    cfg = files / "run.cfg"
    cfg.write_text("k = 5\nw = 0.2\nsn = 30\n")
    rep = files / "rep.json"
    monkeypatch.setenv("CTBUS_W", "0.4")
    args = ["plan", "--config", str(cfg), "--mode", "online", "--itmax", "5", "--report", str(rep)]
    assert main(args + inputs(files)) == 0
    s = json.loads(rep.read_text())["settings"]
    assert (s["k"], s["w"], s["sn"]) == (5, 0.4, 30)
    assert main(args + ["--w", "0.9"] + inputs(files)) == 0
    assert json.loads(rep.read_text())["settings"]["w"] == 0.9
    cfg.write_text("bogus = 1\n")
    assert main(args + inputs(files)) == 1


def test_bounds_and_experiments(files, capsys):
    t = str(files / "t.json")
    assert main(["bounds", "--transit", t, "--k", "3", "--exact"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["connectivity"] <= doc["path"] <= doc["general"]
    assert main(["experiment", "monotonicity", "--transit", t, "--steps", "3", "--exact"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "fraction_removed,routes_removed,edges,connectivity" and len(lines) == 5
    assert main(["experiment", "bounds", "--count", "5", "--n-max", "30"]) == 0
    assert capsys.readouterr().out.startswith("n,m,k,kind,lambda_G,exact,increment,path,general,estrada")
    assert main(["experiment", "submodularity", "--sizes", "1,3", "--trials", "2"] + inputs(files)) == 0
    assert capsys.readouterr().out.startswith("size,trial,sum_delta,joint_delta,theta")


def test_module_entry_point(files):
    out = subprocess.run([sys.executable, "-m", "ctbus", "connectivity", "--transit", str(files / "t.json")],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "connectivity" in out.stdout
    bad = subprocess.run([sys.executable, "-m", "ctbus", "plan", "--w", "2"], capture_output=True, text=True)
    assert bad.returncode == 1
