"""End-to-end command line checks: exit codes, outputs, determinism."""

import json
from pathlib import Path

import numpy as np
import pytest

from driftlab.cli import (
    EXIT_HYPOTHESIS,
    EXIT_NOVIKOV,
    EXIT_OK,
    EXIT_PROPERTY,
    EXIT_USAGE,
    main,
)


def _write(tmp_path: Path, name: str, text: str) -> str:
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _shifted_sine_config(out_dir, n=8000, tol=0.02, knots="[32, 64]"):
    return f"""
[run]
seed = 101
output = "{out_dir}"

[grid]
horizon = 1.0
n_steps = 64

[drift]
kind = "shifted_sine"
dim = 1

[paths]
n = {n}
x0 = 0.0

[envelope]
box = [-12.566370614359172, 12.566370614359172]
resolution = 2049

[compare]
knots = {knots}
tol = {tol}
"""


# ------------------------------------------------------------- selftest


def test_selftest_passes(capsys):
    assert main(["selftest"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "selftest passed" in out
    assert out.count("PASS") == 6


def test_selftest_fault_injection_names_normalization(capsys):
    assert main(["selftest", "--inject-fault", "normalization"]) == EXIT_PROPERTY
    out = capsys.readouterr().out
    assert "FAIL normalization" in out


# -------------------------------------------------------------- novikov


def test_novikov_constant_drift(tmp_path, capsys):
    cfg = _write(tmp_path, "c.toml", f"""
[run]
seed = 11
output = "{tmp_path / 'out'}"

[grid]
horizon = 1.0
n_steps = 64

[drift]
kind = "constant"
vector = [0.5]

[paths]
n = 2000
""")
    assert main(["novikov", cfg]) == EXIT_OK
    rows = (tmp_path / "out" / "csv" / "novikov.csv").read_text().splitlines()
    est = float(rows[1].split(",")[0])
    assert abs(est - np.exp(0.25)) <= 1e-12
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["status"] == "complete"
    assert "csv/novikov.csv" in manifest["outputs"]


def test_novikov_supercritical_fails(tmp_path):
    cfg = _write(tmp_path, "x.toml", f"""
[run]
seed = 12
output = "{tmp_path / 'out'}"

[grid]
horizon = 2.0
n_steps = 128

[drift]
kind = "linear"
matrix = [[1.0]]
offset = [0.0]

[paths]
n = 4000
""")
    assert main(["novikov", cfg]) == EXIT_NOVIKOV
    report = (tmp_path / "out" / "reports" / "novikov.txt").read_text()
    assert "verdict         fail" in report


# -------------------------------------------------------------- compare


def test_compare_dominates_and_byte_identical(tmp_path, capsys):
    outs = []
    for tag in ("a", "b"):
        out_dir = tmp_path / tag
        cfg = _write(tmp_path, f"cmp_{tag}.toml", _shifted_sine_config(out_dir))
        assert main(["compare", cfg]) == EXIT_OK
        outs.append(out_dir)
    csvs = sorted(p.name for p in (outs[0] / "csv").iterdir())
    assert csvs == sorted(p.name for p in (outs[1] / "csv").iterdir())
    assert len(csvs) >= 4
    for name in csvs:
        assert (outs[0] / "csv" / name).read_bytes() == \
            (outs[1] / "csv" / name).read_bytes(), f"{name} differs between runs"
    ma = json.loads((outs[0] / "manifest.json").read_text())
    mb = json.loads((outs[1] / "manifest.json").read_text())
    assert ma["config_hash"] != mb["config_hash"]  # different output paths
    report = (outs[0] / "reports" / "dominance_knot64.txt").read_text()
    assert "verdict        dominates" in report


def test_compare_seed_changes_hash_not_structure(tmp_path):
    out_dir = tmp_path / "o"
    cfg = _write(tmp_path, "cmp.toml", _shifted_sine_config(out_dir, n=2000,
                                                            tol=0.5))
    assert main(["compare", cfg]) in (EXIT_OK, EXIT_PROPERTY)
    first = json.loads((out_dir / "manifest.json").read_text())["config_hash"]
    assert main(["compare", cfg, "--seed", "999"]) in (EXIT_OK, EXIT_PROPERTY)
    second = json.loads((out_dir / "manifest.json").read_text())["config_hash"]
    assert first != second


def test_compare_rotation_field_exits_hypothesis(tmp_path, capsys):
    cfg = _write(tmp_path, "rot.toml", f"""
[run]
seed = 13
output = "{tmp_path / 'out'}"

[grid]
horizon = 1.0
n_steps = 64

[drift]
kind = "linear"
matrix = [[0.0, -1.0], [1.0, 0.0]]
offset = [0.0, 0.0]

[paths]
n = 1000
x0 = [0.0, 0.0]

[envelope]
box = [[-2.0, 2.0], [-2.0, 2.0]]
resolution = 9
""")
    assert main(["compare", cfg]) == EXIT_HYPOTHESIS
    text = (tmp_path / "out" / "reports" / "hypothesis.txt").read_text()
    assert "fail" in text and "witness" in text
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["status"] == "hypothesis-failed"


def test_compare_warn_gate_requires_flag(tmp_path, capsys):
    cfg = _write(tmp_path, "warn.toml", f"""
[run]
seed = 14
output = "{tmp_path / 'out'}"

[grid]
horizon = 1.0
n_steps = 64

[drift]
kind = "linear"
matrix = [[1.0]]
offset = [0.0]

[paths]
n = 4000

[envelope]
box = [-3.0, 3.0]
resolution = 65
""")
    assert main(["compare", cfg]) == EXIT_NOVIKOV
    out = capsys.readouterr().out
    assert "--allow-warn" in out


def test_compare_convex_drift_equality_flag(tmp_path):
    cfg = _write(tmp_path, "eq.toml", f"""
[run]
seed = 15
output = "{tmp_path / 'out'}"

[grid]
horizon = 1.0
n_steps = 64

[drift]
kind = "constant"
vector = [0.3]

[paths]
n = 20000

[envelope]
box = [-2.0, 2.0]
resolution = 65

[compare]
knots = [64]
tol = 0.04
""")
    assert main(["compare", cfg]) == EXIT_OK
    report = (tmp_path / "out" / "reports" / "dominance_knot64.txt").read_text()
    assert "verdict        dominates" in report
    assert "equality       True" in report


# ------------------------------------------------------- other commands


def test_envelope_command(tmp_path):
    cfg = _write(tmp_path, "env.toml", f"""
[run]
seed = 16
output = "{tmp_path / 'out'}"

[grid]
horizon = 1.0
n_steps = 64

[drift]
kind = "shifted_sine"

[envelope]
box = [-12.566370614359172, 12.566370614359172]
resolution = 2049
""")
    assert main(["envelope", cfg]) == EXIT_OK
    rows = (tmp_path / "out" / "csv" / "envelope_profile.csv").read_text().splitlines()
    assert rows[0] == "axis0,drift0,envelope0"
    data = np.array([[float(c) for c in r.split(",")] for r in rows[1:]])
    assert np.all(data[:, 2] <= data[:, 1] + 1e-9)


def test_simulate_command(tmp_path):
    cfg = _write(tmp_path, "sim.toml", f"""
[run]
seed = 17
output = "{tmp_path / 'out'}"

[grid]
horizon = 1.0
n_steps = 64

[drift]
kind = "tanh"

[paths]
n = 2000
""")
    assert main(["simulate", cfg]) == EXIT_OK
    rows = (tmp_path / "out" / "csv" / "euler_summary.csv").read_text().splitlines()
    assert rows[0].startswith("knot,time,coordinate,mean")
    assert len(rows) > 10


def test_linear_bound_command(tmp_path):
    cfg = _write(tmp_path, "lb.toml", f"""
[run]
seed = 18
output = "{tmp_path / 'out'}"

[grid]
horizon = 1.0
n_steps = 64

[drift]
kind = "linear"
matrix = [[-0.5, 0.3], [0.2, -1.0]]
offset = [0.4, -0.2]

[paths]
n = 2000
x0 = [1.0, -1.0]
""")
    assert main(["linear-bound", cfg]) == EXIT_OK
    report = (tmp_path / "out" / "reports" / "linear_bound.txt").read_text()
    assert "matrix_checks        pass" in report
    assert "off_diagonal_nonneg  True" in report
    rows = (tmp_path / "out" / "csv" / "euler_vs_closed_form.csv").read_text().splitlines()
    assert len(rows) == 3


def test_scaling_command(tmp_path):
    cfg = _write(tmp_path, "sc.toml", f"""
[run]
seed = 19
output = "{tmp_path / 'out'}"

[grid]
horizon = 1.0
n_steps = 128

[drift]
kind = "constant"
vector = [0.0]

[paths]
n = 20000
""")
    assert main(["scaling", cfg]) == EXIT_OK
    report = (tmp_path / "out" / "reports" / "scaling.txt").read_text()
    assert "slope" in report and "pass" in report


# ----------------------------------------------------------------- usage


def test_usage_errors(tmp_path, capsys):
    assert main(["novikov", str(tmp_path / "missing.toml")]) == EXIT_USAGE
    assert "not found" in capsys.readouterr().err

    cfg = _write(tmp_path, "nokind.toml", f"""
[run]
seed = 1
output = "{tmp_path / 'out'}"

[grid]
horizon = 1.0
n_steps = 8

[drift]
dim = 1
""")
    assert main(["novikov", cfg]) == EXIT_USAGE
    assert "drift.kind" in capsys.readouterr().err

    bad = _write(tmp_path, "badkind.toml", f"""
[run]
seed = 1
output = "{tmp_path / 'out'}"

[grid]
horizon = 1.0
n_steps = 8

[drift]
kind = "warp"
""")
    assert main(["novikov", bad]) == EXIT_USAGE
    assert "warp" in capsys.readouterr().err

    assert main([]) == EXIT_USAGE
    assert main(["no-such-command"]) == EXIT_USAGE


def test_usage_error_missing_output(tmp_path, capsys):
    cfg = _write(tmp_path, "noout.toml", """
[run]
seed = 1

[grid]
horizon = 1.0
n_steps = 8

[drift]
kind = "tanh"

[paths]
n = 100
""")
    assert main(["simulate", cfg]) == EXIT_USAGE
    assert "run.output" in capsys.readouterr().err
