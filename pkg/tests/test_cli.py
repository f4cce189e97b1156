import csv
import io
import json
import subprocess
import sys
from fractions import Fraction
from pathlib import Path

import pytest

from caasflow.cli import main, workflow_from_generator
from caasflow.engine import ExecutionTrace
from caasflow.executors import load_profiles
from caasflow.workflow import parse_workflow

FIXTURES = Path(__file__).parent / "fixtures"
OUTPUTS = ("trace.jsonl", "gantt.csv", "cost.json", "stats.json")


def test_generate_bag(tmp_path):
    out = tmp_path / "bag.json"
    assert main(["generate", "bag", "--n", "100", "--group", "kinc", "--out", str(out)]) == 0
    w = parse_workflow(out.read_text())
    assert len(w.tasks) == 100 and {t.group for t in w.tasks} == {"kinc"}


def test_generate_fan_width_one(tmp_path):
    out = tmp_path / "fan.json"
    assert main(["generate", "fan", "--width", "1", "--out", str(out)]) == 0
    w = parse_workflow(out.read_text())
    assert len(w.tasks) == 3 and len(w.edges()) == 2


def test_generate_pipeline(tmp_path, capsys):
    assert main(["generate", "pipeline", "--stage", "a:2", "--stage", "b:2:matched"]) == 0
    w = parse_workflow(capsys.readouterr().out)
    assert len(w.edges()) == 2


@pytest.mark.parametrize("argv", [
    ["generate", "pipeline"],
    ["generate", "bag", "--n", "0"],
    ["generate", "fan"],
    ["generate", "pipeline", "--stage", "a"],
    ["generate", "bag", "--n", "3", "--parallelism", "0"],
    ["generate", "teapot"],
    [],
])
def test_generate_usage_errors(argv, tmp_path, capsys):
    assert main(argv) == 2


def test_validate(tmp_path, capsys):
    assert main(["validate", "--workflow", str(FIXTURES / "soykb.json")]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "w", "data": [{"id": "d", "name": "d", "size_bytes": 0}], "tasks": [
        {"id": "A", "name": "A", "group": "g", "work_gcs": 1, "parallelism": 1, "memory_mb": 1,
         "disk_mb": 0, "inputs": [], "outputs": ["d"]},
        {"id": "B", "name": "B", "group": "g", "work_gcs": 1, "parallelism": 1, "memory_mb": 1,
         "disk_mb": 0, "inputs": [], "outputs": ["d"]}]}))
    capsys.readouterr()
    assert main(["validate", "--workflow", str(bad)]) == 2
    assert "multiple producers: d" in capsys.readouterr().out
    (tmp_path / "broken.json").write_text("{")
    assert main(["validate", "--workflow", str(tmp_path / "broken.json")]) == 2


def _run(tmp_path, name, *extra):
    out = tmp_path / name
    code = main(["run", "--out", str(out), *extra])
    return code, out


def test_run_twice_byte_identical(tmp_path):
    args = ("--generator", "bag:n=60,group=kinc,work_gcs=300", "--executor", "cloudrun-like", "--seed", "9")
    c1, o1 = _run(tmp_path, "a", *args)
    c2, o2 = _run(tmp_path, "b", *args)
    assert c1 == c2 == 0
    for f in OUTPUTS:
        assert (o1 / f).read_bytes() == (o2 / f).read_bytes()
    assert not list(o1.glob(".*.tmp"))


def test_kinc_200_fargate_starts_in_waves(tmp_path):
    code, out = _run(tmp_path, "kinc", "--generator", "bag:n=200,group=kinc,work_gcs=1200,parallelism=2,memory_mb=2048",
                     "--executor", "fargate-like")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO((out / "gantt.csv").read_text())))
    starts = sorted(Fraction(r["exec_start_t"]) for r in rows)
    assert len(rows) == 200
    assert len(set(starts)) > 1
    # admission is rate limited: the last start lags the first by a wide margin
    assert starts[-1] - starts[0] > 60
    lanes = {int(r["lane"]) for r in rows}
    assert len(lanes) == 100
    stats = json.loads((out / "stats.json").read_text())
    assert stats["executors"]["fargate-like"]["peak_running"] == 100


def test_soykb_hybrid_uses_both(tmp_path):
    code, out = _run(tmp_path, "soy", "--workflow", str(FIXTURES / "soykb.json"),
                     "--policy", str(Path(__file__).parents[1] / "src/caasflow/data/policy-soykb.json"))
    assert code == 0
    trace = ExecutionTrace.from_jsonl((out / "trace.jsonl").read_text())
    assert {a.executor for a in trace.attempts} == {"lambda-like", "fargate-like"}
    cost = json.loads((out / "cost.json").read_text())
    assert set(cost["per_executor"]) == {"lambda-like", "fargate-like"}


def test_run_engine_overrides_and_profile_overrides(tmp_path):
    # estimate at the 2.5 GHz reference: 15 / 2.5 = 6 s fits the 8 s budget,
    # but the overridden 1 GHz clock makes the real run 15 s > 10 s
    code, out = _run(tmp_path, "o", "--generator", "bag:n=5,work_gcs=15,memory_mb=1792",
                     "--executor", "lambda-like", "--set", "max_exec_s=10", "--set", "clock_ghz=1",
                     "--engine.max_task_retries=0")
    assert code == 3
    trace = ExecutionTrace.from_jsonl((out / "trace.jsonl").read_text())
    assert [(a.attempt_no, a.outcome) for a in trace.attempts] == [(1, "timeout")] * 5
    assert len(trace.incomplete) == 5


def test_run_config_errors(tmp_path):
    assert _run(tmp_path, "x", "--generator", "bag:n=2")[0] == 0
    assert _run(tmp_path, "x")[0] == 2
    assert _run(tmp_path, "x", "--generator", "bag:n=2", "--workflow", "w.json")[0] == 2
    assert _run(tmp_path, "x", "--generator", "bag:n=2", "--executor", "nope")[0] == 2
    assert _run(tmp_path, "x", "--generator", "bag:n=2", "--engine.bogus=1")[0] == 2
    assert _run(tmp_path, "x", "--generator", "bag:n=2", "--set", "nope=1")[0] == 2
    bad_policy = tmp_path / "p.json"
    bad_policy.write_text(json.dumps({"preference": ["ghost"]}))
    assert _run(tmp_path, "y", "--generator", "bag:n=2", "--policy", str(bad_policy))[0] == 2
    assert not (tmp_path / "y").exists()


def test_run_unroutable_exits_3(tmp_path):
    code, out = _run(tmp_path, "nf", "--generator", "bag:n=2,memory_mb=100000")
    assert code == 3
    assert not out.exists()


def test_report_regenerates_outputs(tmp_path):
    code, out = _run(tmp_path, "r", "--generator", "fan:width=4,work_gcs=50", "--executor", "fargate-like")
    assert code == 0
    again = tmp_path / "again"
    assert main(["report", "--trace", str(out / "trace.jsonl"), "--out", str(again)]) == 0
    for f in ("gantt.csv", "cost.json", "stats.json"):
        assert (again / f).read_bytes() == (out / f).read_bytes()


def test_burst_bench_fargate(tmp_path, capsys):
    assert main(["burst-bench", "--profile", "fargate-like", "--repeats", "10"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [int(r["repeat"]) for r in rows] == list(range(10))
    assert all(30 <= int(r["burst"]) <= 50 for r in rows)


def test_burst_bench_zero_refill(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["burst-bench", "--profile", "fargate-like", "--repeats", "3", "--set", "burst_refill_per_s=0",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert [int(r["burst"]) for r in rows] == [38, 38, 38]


def test_burst_bench_cloudrun_grows(capsys):
    assert main(["burst-bench", "--profile", "cloudrun-like", "--n", "1000", "--repeats", "4"]) == 0
    bursts = [int(r["burst"]) for r in csv.DictReader(io.StringIO(capsys.readouterr().out))]
    assert bursts == sorted(bursts) and bursts[-1] > bursts[0]


def test_burst_bench_errors():
    assert main(["burst-bench", "--profile", "nope"]) == 2
    assert main(["burst-bench", "--profile", "fargate-like", "--n", "0"]) == 2


def test_generator_spec_parsing():
    w = workflow_from_generator("pipeline:stages=a*2/b*2*matched,work_gcs=0.5,name=p")
    assert w.name == "p" and len(w.tasks) == 4
    assert {t.work_gcs for t in w.tasks} == {Fraction(1, 2)}


def test_module_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "caasflow", "run", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for flag in ("--workflow", "--generator", "--profiles", "--policy", "--seed", "--out", "--engine.seed"):
        assert flag in res.stdout


def test_custom_profiles_file(tmp_path):
    profiles = load_profiles()
    path = tmp_path / "profiles.json"
    path.write_text(json.dumps({"profiles": [profiles["fargate-like"].to_dict()]}))
    code, _ = _run(tmp_path, "c", "--generator", "bag:n=3", "--profiles", str(path), "--executor", "fargate-like")
    assert code == 0
    code, _ = _run(tmp_path, "d", "--generator", "bag:n=3", "--profiles", str(path))
    assert code == 2  # built-in hybrid policy names lambda-like
