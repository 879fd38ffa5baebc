from pathlib import Path

import numpy as np
import pytest

from itolab.cli import main
from itolab.correlation import CorrelationModel
from itolab.initial import GaussianBump

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

# criterion number -> (passed, detail); filled by the acceptance tests
ACCEPTANCE = {}


@pytest.fixture
def model():
    return CorrelationModel()


@pytest.fixture
def bump():
    return GaussianBump()


@pytest.fixture(scope="session")
def quick_run(tmp_path_factory):
    """Full CLI pipeline on the quick config (seconds)."""
    out = tmp_path_factory.mktemp("quick")
    cfg = str(CONFIGS / "quick.conf")
    for cmd in ("simulate", "kinetic", "ou-sample"):
        assert main([cmd, "--config", cfg, "--out", str(out)]) == 0
    status = main(["verify", "--config", cfg, "--out", str(out)])
    assert status in (0, 1)
    assert main(["report", "--config", cfg, "--out", str(out)]) == 0
    return out


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {k:>2}: {detail}")
