import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wavobstacle import build_scenario, preset, run_evolution  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def fig1_record():
    return run_evolution(build_scenario(preset("paper-fig1")))


@pytest.fixture(scope="session")
def free_sine_record():
    return run_evolution(build_scenario(preset("free-sine")))


@pytest.fixture(scope="session")
def fractional_free_record():
    return run_evolution(build_scenario(preset("fractional-free")))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
