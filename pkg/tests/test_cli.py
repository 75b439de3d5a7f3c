"""Tests for the command-line interface."""

import json
from pathlib import Path
from unittest.mock import patch

import pytest

from pmpcheck.cli import main

GOLDEN = Path(__file__).parent / "golden"


def run_json(capsys, *argv):
    code = main([*argv, "--format", "json"])
    return code, json.loads(capsys.readouterr().out)


def test_decode(capsys):
    """Test decoding cfg and pmpaddr values to regions."""
    argv = ["decode", "--paddr-bits", "8", "--cfg", "0x1F,0x8F"]
    code, out = run_json(capsys, *argv, "--addr", "0x7", "--addr", "0x20")
    assert code == 0
    first, second = out["entries"]
    assert (first["mode"], first["lo"], first["hi"]) == ("NAPOT", 0, 0x3F)
    assert first["perms"] == "rwx"
    assert (second["mode"], second["lo"], second["hi"]) == ("TOR", 0x1C, 0x7F)
    assert second["locked"] is True


def test_decode_count_mismatch(capsys):
    """Test decode with unequal --cfg and --addr counts."""
    assert main(["decode", "--cfg", "0x1F,0x1F", "--addr", "0x7"]) == 2
    assert "2 --cfg value(s) but 1 --addr value(s)" in capsys.readouterr().err


def test_decode_human_output(capsys):
    """Test the human-readable decode table."""
    assert main(["decode", "--paddr-bits", "8", "--cfg", "0x99", "--addr", "0x7"]) == 0
    out = capsys.readouterr().out
    assert "NAPOT" in out and "r--" in out


def test_check_granted_and_denied(capsys):
    """Test the check exit code for granted and denied access types."""
    entry = ["--paddr-bits", "8", "--entry", "0x19:0x7"]
    code, out = run_json(capsys, "check", *entry, "--addr", "0x10", "--prv", "U", "--type", "r")
    assert code == 0
    assert out["match"] == 0
    assert out["perms"] == {"r": True, "w": False, "x": False}
    assert out["granted"] is True

    code, out = run_json(capsys, "check", *entry, "--addr", "0x10", "--prv", "U", "--type", "w")
    assert code == 1
    assert out["granted"] is False


@pytest.mark.parametrize("impl", ["spec", "mask"])
def test_check_partial_overlap_denied(capsys, impl):
    """Test that an access straddling a region end is denied."""
    argv = ["check", "--paddr-bits", "8", "--entry", "0x1F:0x7", "--addr", "0x3C"]
    argv += ["--size", "3", "--prv", "U", "--type", "r", "--impl", impl]
    code, out = run_json(capsys, *argv)
    assert code == 1
    assert out["match"] == 0
    assert out["perms"] == {"r": False, "w": False, "x": False}
    assert out["granted"] is False

    assert main(argv) == 1
    assert "-> r denied" in capsys.readouterr().out


def test_check_without_type_always_succeeds(capsys):
    """Test check without an access type."""
    code, out = run_json(capsys, "check", "--paddr-bits", "8", "--addr", "0x10", "--prv", "S")
    assert code == 0
    assert out["match"] is None
    assert out["granted"] is None


@pytest.mark.parametrize(
    "argv",
    [
        ["check", "--addr", "0x10", "--prv", "H"],
        ["check", "--addr", "0xZZ"],
        ["check", "--entry", "0x1F", "--addr", "0"],
        ["check", "--paddr-bits", "8", "--addr", "0x100"],
    ],
)
def test_check_usage_errors(argv):
    """Test check usage errors."""
    assert main(argv) == 2


def test_unknown_flag_exits_with_usage():
    """Test an unknown flag."""
    with pytest.raises(SystemExit) as info:
        main(["verify", "--bogus"])
    assert info.value.code == 2


def test_verify_exhaustive_small(capsys):
    """Test an exhaustive verify run."""
    code, out = run_json(
        capsys, "verify", "--exhaustive", "--paddr-bits", "4", "--entries", "1", "--impl", "mask"
    )
    assert code == 0
    (report,) = out["reports"]
    assert report["checker"] == "mask"
    assert report["mode"] == "exhaustive"
    assert report["violation_count"] == 0
    assert "wall_time_seconds" not in report


def test_verify_default_runs_both_checkers(capsys):
    """Test that verify runs both checkers by default."""
    code, out = run_json(
        capsys, "verify", "--paddr-bits", "16", "--entries", "4", "--trials", "500"
    )
    assert code == 0
    assert [r["checker"] for r in out["reports"]] == ["spec", "mask"]


def test_verify_guard_is_usage_error(capsys):
    """Test that an intractable exhaustive run is a usage error."""
    assert main(["verify", "--exhaustive", "--paddr-bits", "32", "--entries", "8"]) == 2
    assert "paddr_bits <= 8" in capsys.readouterr().err


def test_verify_is_deterministic(capsys):
    """Test that verify output is deterministic."""
    argv = ["verify", "--paddr-bits", "12", "--entries", "3", "--trials", "800", "--seed", "9"]
    _, first = run_json(capsys, *argv)
    _, second = run_json(capsys, *argv)
    assert first == second


def test_verify_mutant_fails(capsys):
    """Test verify against a mutant."""
    code, out = run_json(
        capsys, "verify", "--exhaustive", "--paddr-bits", "3", "--entries", "1",
        "--impl", "lock_ignored",
    )
    assert code == 1
    assert out["reports"][0]["violation_count"] > 0


def test_verify_human_output_shows_shrunk_counterexample(capsys):
    """Test that human output shows the shrunk counterexample."""
    code = main(
        ["verify", "--exhaustive", "--paddr-bits", "3", "--entries", "1", "--impl", "lock_ignored"]
    )
    assert code == 1
    out = capsys.readouterr().out
    assert "FAIL" in out
    assert "First counterexample, shrunk:" in out


def test_emit_smt_all(capsys, tmp_path):
    """Test emitting every property document."""
    code, out = run_json(
        capsys, "emit-smt", "--all", "--paddr-bits", "8", "--entries", "2", "--out", str(tmp_path)
    )
    assert code == 0
    names = sorted(Path(f["path"]).name for f in out["files"])
    assert names == sorted(
        f"pmp_{p}_8b_2e.smt2"
        for p in ("RegionBoundsEq1", "AlignImplEq2", "MainLowEq3", "NoMatchEq4", "HighPrivEq5")
    )
    assert all("verdict" not in f for f in out["files"])
    assert all(Path(f["path"]).exists() for f in out["files"])


def test_emit_smt_golden(capsys, tmp_path):
    """Test the emitted document against the stored one."""
    argv = ["emit-smt", "--property", "eq3", "--paddr-bits", "4", "--entries", "1"]
    code = main([*argv, "--out", str(tmp_path)])
    assert code == 0
    written = (tmp_path / "pmp_MainLowEq3_4b_1e.smt2").read_text()
    assert written == (GOLDEN / "pmp_MainLowEq3_4b_1e.smt2").read_text()


def test_emit_smt_needs_a_property(tmp_path):
    """Test emit-smt without a valid property."""
    assert main(["emit-smt", "--out", str(tmp_path)]) == 2
    assert main(["emit-smt", "--property", "Eq9", "--out", str(tmp_path)]) == 2


def test_emit_smt_solver_verdicts(capsys, tmp_path):
    """Test exit codes from solver verdicts."""
    argv = ["emit-smt", "--property", "Eq5", "--paddr-bits", "8", "--entries", "1"]
    argv += ["--out", str(tmp_path), "--solver", "z3"]
    with patch("pmpcheck.cli.run_solver", return_value=("sat", "sat")):
        code, out = run_json(capsys, *argv)
    assert code == 1
    assert out["files"][0]["verdict"] == "sat"

    with patch("pmpcheck.cli.run_solver", return_value=("unsat", "unsat")):
        code, out = run_json(capsys, *argv)
    assert code == 0


def test_scenario_golden_trace(capsys, tmp_path):
    """Test the scenario trace against the stored one."""
    trace_out = tmp_path / "trace.json"
    code, out = run_json(
        capsys, "scenario", str(GOLDEN / "scenario_basic.txt"), "--trace-out", str(trace_out)
    )
    assert code == 0
    assert out["passed"] is True
    assert json.loads(trace_out.read_text()) == out


def test_scenario_violation_exit_code(capsys, tmp_path):
    """Test the scenario exit code on an isolation violation."""
    script = tmp_path / "leak.txt"
    script.write_text(
        "boot 0x1000 0x0 0x200 entries=4 paddr_bits=16\n"
        "create 1 0x400 0x100\n"
        "corrupt 1 0x19 0x11F\n"
    )
    code, out = run_json(capsys, "scenario", str(script), "--samples", "4")
    assert code == 1
    assert out["violation_count"] > 0


def test_scenario_errors(capsys, tmp_path):
    """Test scenario script and precondition errors."""
    bad = tmp_path / "bad.txt"
    bad.write_text("create 1 0x400 0x100\n")
    assert main(["scenario", str(bad)]) == 2
    assert "line 1" in capsys.readouterr().err

    failing = tmp_path / "failing.txt"
    failing.write_text("boot 0x1000 0x0 0x200 entries=4 paddr_bits=16\nenter 3\n")
    assert main(["scenario", str(failing), "--format", "json"]) == 2
    out = json.loads(capsys.readouterr().out)
    assert out["error_line"] == 2

    assert main(["scenario", str(tmp_path / "missing.txt")]) == 2
