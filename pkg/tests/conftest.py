import numpy as np
import pytest

from pointgva.numerics import set_check_finite


def pytest_configure(config):
    set_check_finite(True)
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance_log(request):
    """Append a one-line verdict that is echoed in the terminal summary."""
    lines = request.config._acceptance_lines

    def record(line: str):
        print(line)
        lines.append(line)

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
