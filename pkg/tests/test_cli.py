import json
import subprocess
import sys

import pytest

from fbpbarrier.cli import main, parse_eps, parse_levels, UsageError
from fbpbarrier.profile import block_profile, load_profile


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def test_barriers_writes_curves_and_manifest(tmp_path):
    assert run(tmp_path, "barriers", "--delta", "0.1", "--k", "3", "--grid-h", "0.0078125") == 0
    gaps = json.loads((tmp_path / "gaps.json").read_text())
    assert gaps[0]["k"] == 3 and gaps[0]["max_gap"] <= gaps[0]["bound"] + 5 * 0.0078125
    lines = (tmp_path / "barriers.csv").read_text().splitlines()
    assert lines[0] == "k,r,F_lower,F_upper"
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["status"] == "ok"
    assert set(man["files"]) == {"barriers.csv", "gaps.json"}
    assert man["config"]["delta"] == 0.1
    assert set(man["versions"]) >= {"numpy", "scipy", "python", "fbpbarrier"}


def test_barrier_level_sweep(tmp_path):
    assert run(tmp_path, "barriers", "--levels", "1..3", "--t", "0.4", "--grid-h", "0.015625") == 0
    gaps = json.loads((tmp_path / "gaps.json").read_text())
    assert [g["k"] for g in gaps] == [2, 4, 8]
    assert [g["delta"] for g in gaps] == pytest.approx([0.2, 0.1, 0.05])


def test_separating_certificate(tmp_path):
    assert run(tmp_path, "separating", "--t", "0.25", "--tol", "0.02", "--grid-h", "0.00390625") == 0
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert cert["certified_gap"] <= 0.02
    u = load_profile(str(tmp_path / "separating_profile.csv"), cell_width=0.00390625)
    assert u.density_mass > 0


def test_separating_reports_nonconvergence(tmp_path):
    code = run(tmp_path, "separating", "--t", "0.5", "--tol", "1e-9", "--levels", "3",
               "--grid-h", "0.015625")
    assert code == 1
    assert json.loads((tmp_path / "manifest.json").read_text())["status"] == "violation"
    assert (tmp_path / "certificate.json").exists()


def test_quasi_and_stationary_check(tmp_path):
    assert run(tmp_path, "quasi", "--preset", "bump", "--T", "0.2", "--eps", "0.1,0.05",
               "--grid-h", "0.00390625") == 0
    summary = json.loads((tmp_path / "quasi_summary.json").read_text())
    assert [s["epsilon"] for s in summary] == [0.1, 0.05]
    assert (tmp_path / "edge_eps0.05.csv").read_text().startswith("t,X_t")
    assert run(tmp_path, "stationary-check", "--t", "0.25", "--tol", "0.02",
               "--grid-h", "0.00390625") == 0
    rep = json.loads((tmp_path / "stationary_check.json").read_text())
    assert rep["passed"] and rep["sup_error"] <= 0.02


def test_validate_stationary(tmp_path):
    code = run(tmp_path, "validate", "--T", "0.2", "--delta", "0.05", "--eps", "0.1,0.05",
               "--paths", "4000", "--dt", "0.005", "--grid-h", "0.00390625")
    verdict = json.loads((tmp_path / "verdict.json").read_text())
    assert code == 0 and verdict["passed"]
    assert len(verdict["runs"]) == 2


def test_input_file_and_domain_violation(tmp_path):
    src = tmp_path / "u.json"
    src.write_text(block_profile(0, 1, 0.05, 1 / 64).to_json())
    code = run(tmp_path / "o", "barriers", "--in", str(src), "--delta", "0.1", "--k", "2",
               "--grid-h", "0.015625")
    assert code == 1


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"delta": 0.2, "k": 2, "grid-h": 0.015625}))
    assert run(tmp_path, "barriers", "--config", str(cfg), "--k", "1") == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["config"]["delta"] == 0.2 and man["config"]["k"] == 1


@pytest.mark.parametrize("args", [
    ["barriers", "--delta", "-1"],
    ["barriers", "--k", "0"],
    ["barriers", "--preset", "nope"],
    ["quasi", "--eps", "a,b"],
    ["separating", "--levels", "5..2"],
    ["frobnicate"],
    [],
])
def test_usage_errors(tmp_path, args):
    assert main(args + (["--out", str(tmp_path)] if args and args[0] != "frobnicate" else [])) == 64


def test_bad_config_key_is_usage_error(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert run(tmp_path, "barriers", "--config", str(cfg)) == 64


def test_io_errors(tmp_path):
    assert run(tmp_path, "barriers", "--in", str(tmp_path / "missing.json")) == 2
    assert run(tmp_path, "barriers", "--config", str(tmp_path / "missing.json")) == 2


def test_rerun_is_byte_identical(tmp_path):
    args = ["validate", "--T", "0.1", "--delta", "0.05", "--eps", "0.05", "--paths", "2000",
            "--dt", "0.01", "--grid-h", "0.0078125", "--seed", "7", "--preset", "bump"]
    main(args + ["--out", str(tmp_path)])
    first = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    main(args + ["--out", str(tmp_path)])
    second = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    assert first == second


def test_parsers():
    assert parse_levels("3..8") == (3, 8)
    assert parse_levels(6) == (None, 6)
    assert parse_eps("0.1, 0.05") == [0.1, 0.05]
    with pytest.raises(UsageError):
        parse_eps("0,1")


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "fbpbarrier.cli", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()
