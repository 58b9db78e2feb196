import numpy as np
import pytest

from palmsense.types import CalibrationProfile, geometry_default


@pytest.fixture
def geometry():
    return geometry_default()


@pytest.fixture
def flat_profile():
    """Baseline 300 counts, sigma at the 1-count floor: what a noiseless idle run calibrates to."""
    return CalibrationProfile(np.full(16, 300.0), np.ones(16), 100)


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def criterion(request):
    """Record an acceptance verdict; it is printed in the terminal summary and asserted."""
    def record(number: int, passed: bool, detail: str):
        line = f"AC{number:<2d} {'PASS' if passed else 'FAIL'}  {detail}"
        request.config.acceptance_lines.append(line)
        print(line)
        assert passed, line
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s[2:4])):
            terminalreporter.write_line(line)
