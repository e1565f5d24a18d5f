import csv
import io
import json
import subprocess
import sys

import pytest

from gcaps import cli
from gcaps.cli import (
    CSV_COLUMNS, SweepSpec, analyze, analyze_file, gen_file, point_params, rows_to_csv,
    run_sweep, soundness_check,
)
from gcaps.gen import GenParams, table2_taskset
from gcaps.model import dumps, loads


@pytest.fixture
def table2_file(tmp_path):
    path = tmp_path / "t2.json"
    path.write_text(dumps(table2_taskset()))
    return path


@pytest.fixture
def params_file(tmp_path):
    path = tmp_path / "params.json"
    path.write_text(GenParams(seed=3, num_cores=2).dumps())
    return path


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gen_then_analyze_round_trip(tmp_path, params_file):
    out = tmp_path / "ts.json"
    ts = gen_file(params_file, out, seed=5)
    assert loads(out.read_text()) == ts
    direct = analyze(ts, "gcaps_busy").to_dict()
    assert analyze_file(out, "gcaps_busy").to_dict() == direct


def test_gen_cli_is_seeded(params_file, capsys):
    code, a, _ = run(["gen", "--config", str(params_file), "--seed", "1"], capsys)
    _, b, _ = run(["gen", "--config", str(params_file), "--seed", "1"], capsys)
    _, c, _ = run(["gen", "--config", str(params_file), "--seed", "2"], capsys)
    assert code == 0 and a == b != c
    assert loads(a).config.num_cores == 2


def test_analyze_table2_cli(table2_file, capsys):
    code, out, _ = run(["analyze", "--config", str(table2_file), "--method", "gcaps_suspend"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["tasks"]["4"]["wcrt_ms"] == "unbounded"
    assert doc["taskset_schedulable"] is False


def test_analyze_sep_reports_assignment(table2_file, capsys):
    code, out, _ = run(["analyze", "--config", str(table2_file), "--method", "gcaps_suspend_sep",
                        "--format", "csv"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["task"] for r in rows] == ["1", "2", "3", "4"]
    assert all(r["schedulable"] == "True" for r in rows)
    res = analyze(table2_taskset(), "gcaps_suspend_sep")
    assert res.gpu_priorities[4] > res.gpu_priorities[3]


def test_assign_prio_cli(table2_file, capsys):
    code, out, _ = run(["assign-prio", "--config", str(table2_file), "--method", "gcaps_suspend"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["feasible"]
    assert doc["gpu_priorities"]["4"] > doc["gpu_priorities"]["3"]


def test_simulate_cli_json_and_trace(table2_file, tmp_path, capsys):
    code, out, _ = run(["simulate", "--config", str(table2_file), "--method", "gcaps_suspend",
                        "--horizon", "2000"], capsys)
    assert code == 0
    assert json.loads(out)["tasks"]["4"]["misses"] > 0
    trace = tmp_path / "trace.csv"
    code, _, _ = run(["simulate", "--config", str(table2_file), "--trace", "--horizon", "200",
                      "--release", "sporadic", "--seed", "3", "--out", str(trace)], capsys)
    lines = trace.read_text().splitlines()
    assert code == 0 and lines[0] == "time_us,kind,task,job" and len(lines) > 10


def test_usage_errors_exit_1(table2_file, capsys):
    assert cli.main(["analyze", "--config", str(table2_file), "--method", "nope"]) == 1
    assert cli.main(["analyze", "--config", "/no/such/file.json"]) == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["analyze"])
    assert exc.value.code == 1


def test_validation_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    doc = json.loads(dumps(table2_taskset()))
    doc["tasks"][0]["deadline_ms"] = 500
    bad.write_text(json.dumps(doc))
    assert cli.main(["analyze", "--config", str(bad)]) == 2
    garbage = tmp_path / "garbage.json"
    garbage.write_text("{not json")
    assert cli.main(["analyze", "--config", str(garbage)]) == 2
    params = tmp_path / "p.json"
    params.write_text(json.dumps({"num_cores": 0}))
    assert cli.main(["gen", "--config", str(params)]) == 2


def test_soundness_violation_exit_3(monkeypatch, capsys):
    monkeypatch.setattr(cli, "soundness_check", lambda *a, **k: [{"task": 1}])
    assert cli.main(["soundness", "--count", "1"]) == 3
    monkeypatch.setattr(cli, "soundness_check", lambda *a, **k: [])
    assert cli.main(["soundness", "--count", "1"]) == 0


def test_module_entry_point(table2_file):
    proc = subprocess.run([sys.executable, "-m", "gcaps.cli", "analyze", "--config", str(table2_file),
                           "--format", "csv"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0] == "task,wcrt_ms,schedulable"


def test_point_params_shifts_and_shrinks():
    base = GenParams()
    assert point_params(base, "util_per_core", 0.3).util_per_core == pytest.approx((0.2, 0.4))
    assert point_params(base, "util_per_core", 0.05).util_per_core == pytest.approx((0.025, 0.075))
    assert point_params(base, "gpu_task_ratio", 0.95).gpu_task_ratio == pytest.approx((0.9, 1.0))
    assert point_params(base, "tasks_per_core", 8).tasks_per_core == (6, 10)
    assert point_params(base, "best_effort_ratio", 0.4).best_effort_ratio == 0.4
    assert point_params(base, "num_cores", 2).num_cores == 2
    with pytest.raises(ValueError):
        point_params(base, "util_per_core", 0.0)


def test_sweep_spec_validation():
    assert SweepSpec(values=(0.5,)).violations() == []
    assert SweepSpec(values=()).violations()
    assert SweepSpec(values=(0.5,), tasksets_per_point=0).violations()
    assert SweepSpec(values=(0.5,), methods=("mpcp",)).violations()
    assert SweepSpec(parameter="colour", values=(1,)).violations()
    assert SweepSpec(parameter="gpu_task_ratio", values=(1.5,)).violations()
    spec = SweepSpec(values=(0.3, 0.5), tasksets_per_point=7)
    assert SweepSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec


def test_sweep_rows_schema_and_determinism():
    spec = SweepSpec(GenParams(seed=2), "util_per_core", (0.3, 0.5), 6)
    rows = run_sweep(spec)
    assert len(rows) == 2 * len(spec.methods)
    text = rows_to_csv(rows)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    for r in csv.DictReader(io.StringIO(text)):
        assert 0 <= int(r["accepted"]) <= int(r["total"]) == 6
        assert float(r["ratio"]) == pytest.approx(int(r["accepted"]) / 6)
    assert rows_to_csv(run_sweep(spec)) == text


def test_sep_methods_accept_at_least_as_many():
    spec = SweepSpec(GenParams(seed=4), "util_per_core", (0.4,), 30)
    ratio = {r["method"]: r["accepted"] for r in run_sweep(spec)}
    assert ratio["gcaps_busy_sep"] >= ratio["gcaps_busy"]
    assert ratio["gcaps_suspend_sep"] >= ratio["gcaps_suspend"]


def test_sweep_cli_csv(tmp_path, capsys):
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(SweepSpec(GenParams(seed=1), "best_effort_ratio", (0.0, 0.5), 3).to_dict()))
    code, out, _ = run(["sweep", "--config", str(path), "--format", "csv", "--method", "gcaps_busy"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [(r["method"], r["value"]) for r in rows] == [("gcaps_busy", "0.0"), ("gcaps_busy", "0.5")]


def test_vanishing_load_is_always_accepted():
    base = GenParams(seed=3)
    gcaps = SweepSpec(base, "util_per_core", (1e-4,), 40,
                      ("gcaps_busy", "gcaps_suspend", "gcaps_busy_sep", "gcaps_suspend_sep"))
    assert all(r["ratio"] == 1.0 for r in run_sweep(gcaps))
    # round robin charges nu * (L + theta) per segment whatever the load; it
    # vanishes only together with the slice and the switch cost
    tiny = GenParams(seed=3, slice=0.001, theta=0.0, epsilon=0.0)
    rr = SweepSpec(tiny, "util_per_core", (1e-4,), 40, ("tsg_rr_busy", "tsg_rr_suspend"))
    assert all(r["ratio"] == 1.0 for r in run_sweep(rr))


def test_soundness_check_small():
    assert soundness_check(GenParams(seed=17), 4) == []
