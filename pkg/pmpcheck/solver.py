"""
Optional external SMT solver invocation.
"""

import subprocess
from pathlib import Path

from loguru import logger

VERDICTS = ("sat", "unsat", "unknown")
Z3_MODULE = "z3py"


def parse_verdict(stdout: str) -> str:
    """First non-empty output line if it is a verdict, else unknown."""
    for line in stdout.splitlines():
        line = line.strip()
        if line:
            return line if line in VERDICTS else "unknown"
    return "unknown"


def run_solver(solver: str, smt_file: Path, timeout: int = 300) -> tuple[str, str]:
    """
    Run an external solver binary on an SMT-LIB file.

    Args:
        solver: Solver executable (path or name on PATH), or "z3py" to use the
            z3 Python bindings in-process
        smt_file: Document to solve
        timeout: Seconds before the run is abandoned

    Returns:
        (verdict, message); verdict is "unknown" whenever the solver could not
        produce an answer
    """
    if solver == Z3_MODULE:
        return run_z3(smt_file.read_text(encoding="utf-8"))

    logger.info(f"Running {solver} on {smt_file}")
    try:
        result = subprocess.run(
            [solver, str(smt_file)],
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except FileNotFoundError:
        return "unknown", f"Solver not found: {solver}"
    except subprocess.TimeoutExpired:
        return "unknown", f"Solver timed out after {timeout}s"
    except Exception as e:
        return "unknown", f"Solver error: {str(e)}"

    verdict = parse_verdict(result.stdout)
    if verdict == "unknown" and result.returncode != 0:
        return "unknown", f"Solver exited with {result.returncode}: {result.stderr.strip()}"
    return verdict, result.stdout.strip()


def run_z3(text: str) -> tuple[str, str]:
    """Check a document with the z3 Python bindings."""
    try:
        import z3
    except ImportError:
        return "unknown", "z3 is not installed (pip install pmpcheck[solver])"

    try:
        s = z3.Solver()
        s.from_string(text)
        verdict = str(s.check())
    except z3.Z3Exception as e:
        return "unknown", f"z3 error: {e}"
    return (verdict if verdict in VERDICTS else "unknown"), verdict
