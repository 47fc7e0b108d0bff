import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from flowservo.bench import (bundled_suite, compute_metrics, dump_scenario, load_scenario, parse_scenario,
                             read_flo, read_trajectory_csv, run_suite, write_flo)
from flowservo.bench.io import CSV_HEADER, FLO_MAGIC
from flowservo.cli import main
from flowservo.errors import ConfigError
from flowservo.scene import Building, Scene

MINIMAL = """{
  "name": "mini",
  "buildings": [{"id": 7, "min": [20, -5, 0], "max": [30, 5, 30]}],
  "start": {"position": [0, 0, 10]},
  "goal": [50, 0, 10]
}
"""

# Small camera and short horizon so suite-level tests stay quick.
FAST = """{
  "name": "fast",
  "buildings": [{"id": 1, "min": [20, -6, 0], "max": [28, 6, 30]}],
  "start": {"position": [0, 0, 10], "yaw_deg": 0},
  "goal": [45, 0, 10],
  "camera": {"width": 64, "height": 48, "fx": 32, "fy": 32},
  "termination": {"t_max": 30}
}
"""


def test_minimal_file_gets_defaults():
    cfg = parse_scenario(MINIMAL)
    assert cfg.camera.width == 256 and cfg.termination.dt == 0.1 and cfg.controller.lam == 10
    assert cfg.controller.cem.dt == cfg.termination.dt
    assert cfg.buildings[0].id == 7 and cfg.noise_sigma == 0.0


def test_round_trip_equality():
    cfg = parse_scenario(MINIMAL)
    again = parse_scenario(dump_scenario(cfg))
    assert again == cfg
    assert dump_scenario(again) == dump_scenario(cfg)
    for path in bundled_suite():
        c = load_scenario(path)
        assert parse_scenario(dump_scenario(c)) == c


def _err(text):
    with pytest.raises(ConfigError) as info:
        parse_scenario(text, "s.json")
    return str(info.value)


def test_start_inside_building_names_it():
    msg = _err(MINIMAL.replace("[0, 0, 10]", "[25, 0, 10]"))
    assert "building 7" in msg and "start" in msg and msg.startswith("s.json:")


def test_unknown_key_and_line_numbers():
    msg = _err(MINIMAL.replace('"goal"', '"gaol"'))
    assert "gaol" in msg and "s.json:5" in msg
    msg = _err(MINIMAL.replace('"goal": [50, 0, 10]', '"goal": [50, 0, 10], "controller": {"lamda": 3}'))
    assert "lamda" in msg
    assert "invalid JSON" in _err("{\n  \"name\": \n}")


def test_invalid_values():
    assert "goal" in _err(MINIMAL.replace("[50, 0, 10]", "[0, 0, 10]"))
    assert "goal" in _err(MINIMAL.replace("[50, 0, 10]", "[50, 0]"))
    bad = json.loads(MINIMAL)
    bad["controller"] = {"cem": {"elites": 500}}
    assert "controller" in _err(json.dumps(bad))
    bad = json.loads(MINIMAL)
    bad["noise_sigma"] = -1
    assert "noise_sigma" in _err(json.dumps(bad))


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "nope.json")


def test_metrics_examples():
    path = np.array([[x, 0.0, 10.0] for x in range(11)])
    assert compute_metrics(path, Scene([]))[1] == pytest.approx(10.0)
    scene = Scene([Building(1, (4, 3, 0), (6, 5, 30))])
    assert compute_metrics(path, scene) == pytest.approx((3.0, 10.0))
    assert compute_metrics(path[:1], scene)[1] == 0.0
    with pytest.raises(ValueError):
        compute_metrics(np.zeros((0, 3)), scene)


def test_flo_layout(tmp_path):
    p = tmp_path / "z.flo"
    write_flo(np.zeros((2, 2, 2)), p)
    raw = p.read_bytes()
    assert len(raw) == 12 + 32
    assert np.frombuffer(raw[:4], "<f4")[0] == FLO_MAGIC
    assert tuple(np.frombuffer(raw[4:12], "<i4")) == (2, 2)
    flow = np.zeros((2, 3, 2))
    flow[0, 1] = (5.0, -7.0)  # (row, col)
    write_flo(flow, p)
    data = np.frombuffer(p.read_bytes()[12:], "<f4").reshape(2, 3, 2)
    assert tuple(data[0, 1]) == (-7.0, 5.0)  # stored as (col, row)
    assert tuple(np.frombuffer(p.read_bytes()[4:12], "<i4")) == (3, 2)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 9), st.integers(1, 9), st.just(2)),
              elements=st.floats(-1e4, 1e4)))
def test_flo_round_trip(tmp_path_factory, flow):
    p = tmp_path_factory.mktemp("flo") / "f.flo"
    write_flo(flow, p)
    assert np.array_equal(read_flo(p), flow.astype(np.float32))


def test_flo_rejects_garbage(tmp_path):
    p = tmp_path / "bad.flo"
    p.write_bytes(b"\x00" * 20)
    with pytest.raises(ValueError):
        read_flo(p)


@pytest.fixture(scope="module")
def fast_suite(tmp_path_factory):
    scen_dir = tmp_path_factory.mktemp("scen")
    (scen_dir / "fast.json").write_text(FAST)
    out = tmp_path_factory.mktemp("out")
    summary = run_suite([scen_dir / "fast.json"], out_dir=out, noise=0.5, dump_flow=True)
    return scen_dir, out, summary


def test_suite_cardinality_and_artifacts(fast_suite):
    _, out, summary = fast_suite
    assert len(summary.records) == 3 and len(summary.results) == 3
    for ctl in ("ours", "naive-fb", "radial-fb"):
        assert (out / "fast" / f"{ctl}.csv").exists()
    assert (out / "summary.txt").exists() and (out / "summary.json").exists()
    assert (out / "fast" / "trajectories.png").stat().st_size > 0
    assert (out / "success_rates.png").stat().st_size > 0
    flos = sorted((out / "fast" / "ours_flo").glob("*.flo"))
    assert flos and any(f.name.endswith("_predicted.flo") for f in flos)
    doc = json.loads((out / "summary.json").read_text())
    for ctl, s in doc["success"].items():
        assert s["rate"] == s["successes"] / s["episodes"]
    assert summary.success_rate("ours") == Fraction(summary.successes("ours"), 1)


def test_csv_schema_and_reparse(fast_suite):
    _, out, summary = fast_suite
    for (scen, ctl), res in summary.results.items():
        path = out / scen / f"{ctl}.csv"
        header = path.read_text().splitlines()[0]
        assert header == ",".join(CSV_HEADER)
        rows = read_trajectory_csv(path)
        assert len(rows) == len(res.trajectory)
        pos = np.array([[r["x"], r["y"], r["z"]] for r in rows])
        cfg = parse_scenario(FAST)
        min_dist, length = compute_metrics(pos, cfg.scene)
        rec = summary.record(scen, ctl)
        assert length == pytest.approx(rec.traj_length, abs=1e-5)
        assert min_dist == pytest.approx(rec.min_dist, abs=1e-5)
        assert {r["mode"] for r in rows} <= {"GoalReaching", "Avoidance"}


def test_empty_scene_csv_is_goal_reaching(tmp_path):
    cfg = json.loads(FAST)
    cfg["buildings"] = []
    cfg["name"] = "empty"
    p = tmp_path / "empty.json"
    p.write_text(json.dumps(cfg))
    summary = run_suite([p], ["ours"], tmp_path / "out", plots=False)
    rows = read_trajectory_csv(tmp_path / "out" / "empty" / "ours.csv")
    assert all(r["mode"] == "GoalReaching" for r in rows)
    assert summary.success_rate("ours") == 1


def test_suite_determinism(fast_suite, tmp_path):
    scen_dir, out, _ = fast_suite
    run_suite([scen_dir / "fast.json"], out_dir=tmp_path, noise=0.5, dump_flow=True)
    for f in sorted(out.rglob("*")):
        if f.is_file():
            assert (tmp_path / f.relative_to(out)).read_bytes() == f.read_bytes(), f.name


def test_episode_errors_are_recorded(tmp_path, monkeypatch):
    import flowservo.bench.suite as suite

    def boom(*a, **k):
        raise RuntimeError("simulated failure")

    monkeypatch.setattr(suite, "run_scenario", boom)
    (tmp_path / "m.json").write_text(MINIMAL)
    summary = run_suite([tmp_path / "m.json"], ["ours"], tmp_path / "out", plots=False)
    assert summary.records[0].outcome == "Error" and "simulated" in summary.records[0].error
    assert summary.success_rate("ours") == 0


def test_cli_exit_codes(tmp_path, capsys):
    (tmp_path / "fast.json").write_text(FAST)
    assert main(["run", "--scenario", str(tmp_path / "fast.json"), "--controller", "radial-fb",
                 "--out", str(tmp_path / "o"), "--no-plots"]) == 0
    assert "radial-fb" in capsys.readouterr().out
    assert main(["run", "--scenario", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2
    (tmp_path / "bad.json").write_text(MINIMAL.replace('"goal"', '"gaol"'))
    assert main(["run", "--scenario", str(tmp_path / "bad.json"), "--out", str(tmp_path / "o")]) == 2
    assert "gaol" in capsys.readouterr().err
    assert main(["run", "--suite", str(tmp_path / "nodir"), "--out", str(tmp_path / "o")]) == 2
    with pytest.raises(SystemExit):
        main(["run", "--scenario", "x.json", "--controller", "nope"])
    assert main(["scenarios"]) == 0
    assert len(capsys.readouterr().out.split()) == 8
