import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from quadctl import cli

ROOT = Path(__file__).resolve().parent.parent
EXAMPLES = sorted(p for p in (ROOT / "docs" / "examples").glob("*.json") if not p.name.startswith("params_"))
MALFORMED = sorted((ROOT / "tests" / "fixtures" / "malformed").glob("*.json"))
NUMERICAL = sorted((ROOT / "tests" / "fixtures" / "numerical").glob("*.json"))


def command_of(path):
    return path.name.split("__" if "__" in path.name else "_", 1)[0]


def run_to(tmp_path, name, *argv):
    out = tmp_path / name
    status, report = cli.run([*argv, "--output", str(out)])
    return status, report, out


@pytest.mark.parametrize("path", EXAMPLES, ids=lambda p: p.stem)
def test_examples_round_trip(path, tmp_path):
    cmd = command_of(path)
    s1, _, o1 = run_to(tmp_path, "a.json", cmd, "--input", str(path))
    s2, _, o2 = run_to(tmp_path, "b.json", cmd, "--input", str(path))
    assert s1 == s2 == 0
    assert o1.read_bytes() == o2.read_bytes()
    t1, t2 = cli.trace_path(o1), cli.trace_path(o2)
    assert t1.exists() == t2.exists()
    if t1.exists():
        assert t1.read_bytes() == t2.read_bytes()


def test_fixture_counts():
    assert len(EXAMPLES) >= 7
    assert len(MALFORMED) >= 20


@pytest.mark.parametrize("path", MALFORMED, ids=lambda p: p.stem)
def test_malformed_rejected(path, tmp_path):
    status, report, out = run_to(tmp_path, "err.json", command_of(path), "--input", str(path))
    assert status == 2
    assert report["field"]
    assert json.loads(out.read_text())["error"] == report["error"]


@pytest.mark.parametrize("path", NUMERICAL, ids=lambda p: p.stem)
def test_numerical_failures_exit_3(path, tmp_path):
    status, report, _ = run_to(tmp_path, "err.json", command_of(path), "--input", str(path))
    assert status == 3
    assert report["error"] in ("SingularV", "SingularL", "LegendreViolated")


def test_blow_up_reports_time(tmp_path):
    status, report, _ = run_to(tmp_path, "e.json", "riccati", "--input", str(ROOT / "tests/fixtures/numerical/riccati__blowup.json"))
    assert report["error"] == "SingularV" and report["t"] == pytest.approx(1.0)


def test_simulate_oscillator_values(tmp_path):
    _, report, _ = run_to(tmp_path, "s.json", "simulate", "--input", str(ROOT / "docs/examples/simulate_oscillator.json"))
    assert report["x_final"] == pytest.approx([math.sin(1.0), math.cos(1.0)], abs=1e-8)


def test_hardness_undamped_gap(tmp_path):
    _, report, _ = run_to(tmp_path, "h.json", "hardness", "--input", str(ROOT / "docs/examples/hardness_undamped.json"))
    assert report["gap"] == [0.0] * len(report["t"])


def test_riccati_tanh_and_trace(tmp_path):
    status, report, out = run_to(tmp_path, "r.json", "riccati", "--input", str(ROOT / "docs/examples/riccati_tanh.json"))
    assert status == 0
    assert report["y_final"][0] == pytest.approx(0.761594, abs=1e-6)
    with open(cli.trace_path(out)) as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "t" and rows[0][-1] == "sigma_min_v"
    assert float(rows[-1][0]) == pytest.approx(1.0)
    assert float(rows[-1][1]) == pytest.approx(math.tanh(1.0), abs=1e-8)


def test_epsilon_override(tmp_path):
    path = str(ROOT / "docs/examples/riccati_tanh.json")
    _, loose, _ = run_to(tmp_path, "a.json", "riccati", "--input", path, "--epsilon", "1e-3")
    _, tight, _ = run_to(tmp_path, "b.json", "riccati", "--input", path, "--epsilon", "1e-12")
    assert loose["k"] < tight["k"]


@pytest.mark.parametrize("flag, value", [("--epsilon", "1.5"), ("--gamma", "-0.1"), ("--grid", "0"), ("--seed", "-1")])
def test_bad_overrides(flag, value, tmp_path):
    status, report, _ = run_to(tmp_path, "e.json", "riccati", "--input", str(ROOT / "docs/examples/riccati_tanh.json"), flag, value)
    assert status == 2 and report["field"] == flag.lstrip("-")


def test_resources_theorem_params(tmp_path):
    params = ROOT / "docs/examples/params_qpe.json"
    status, report, out = run_to(tmp_path, "q.json", "resources", "--theorem", "qpe_variant", "--params", str(params))
    assert status == 0 and report["theorem"] == "qpe_variant"
    assert report["units"] == "leading-order units"
    assert isinstance(report["query_formula"], str)


def test_resources_needs_theorem_and_params(tmp_path):
    status, report, _ = run_to(tmp_path, "e.json", "resources", "--theorem", "ham_canon")
    assert status == 2


def test_missing_input_file(tmp_path):
    status, report, _ = run_to(tmp_path, "e.json", "simulate", "--input", str(tmp_path / "nope.json"))
    assert status == 2 and report["field"] == "input"


def test_stdout_and_entry_point(tmp_path):
    path = ROOT / "docs/examples/lqr_scalar.json"
    proc = subprocess.run([sys.executable, "-m", "quadctl.cli", "lqr", "--input", str(path)], capture_output=True, text=True)
    assert proc.returncode == 0
    report = json.loads(proc.stdout)
    assert report["J"] == pytest.approx(math.tanh(2.0), abs=1e-5)


def test_non_finite_values_become_strings():
    text = cli.dumps({"a": float("inf"), "b": [float("nan"), 1.0], "c": -float("inf")})
    assert json.loads(text) == {"a": "inf", "b": ["nan", 1.0], "c": "-inf"}


def test_atomic_write_leaves_no_temporaries(tmp_path):
    cli._atomic_write(tmp_path / "x.json", "{}\n")
    assert [p.name for p in tmp_path.iterdir()] == ["x.json"]
