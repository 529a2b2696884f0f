import subprocess
import sys

import pytest


def _cli(*args) -> None:
    subprocess.run(
        [sys.executable, "-m", "etcsim.cli", *args], check=True, capture_output=True
    )


@pytest.fixture(scope="session")
def artifacts(tmp_path_factory):
    """Built-in scenario outputs produced through the etcsim CLI."""
    out = tmp_path_factory.mktemp("etcsim-out")
    _cli("run", "--scenario", "paper/linear-gamma2delta", "--out", str(out))
    _cli("run", "--scenario", "paper/nonlinear-fig", "--out", str(out))
    _cli(
        "sweep",
        "--scenario",
        "paper/nonlinear-rate",
        "--gammas",
        "0.05,0.1,0.2",
        "--seeds",
        "2",
        "--out",
        str(out),
    )
    lin = out / "paper-linear-gamma2delta"
    non = out / "paper-nonlinear-fig-gamma010"
    return {
        "linear_trace": lin / "trace.csv",
        "linear_events": lin / "events.csv",
        "linear_summary": lin / "summary.json",
        "scalar_trace": non / "trace.csv",
        "scalar_events": non / "events.csv",
        "scalar_summary": non / "summary.json",
        "sweep": out / "paper-nonlinear-rate-sweep.csv",
    }
