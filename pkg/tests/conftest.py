import sys
from pathlib import Path

import pytest

# allow `import helpers` regardless of how pytest was invoked
sys.path.insert(0, str(Path(__file__).parent))

from probtrace.solver import Solver


@pytest.fixture(scope="session")
def solver() -> Solver:
    """One shared solver; its cache is an asset across tests."""
    return Solver()


# One line per acceptance criterion, printed after the run so the verdicts
# are visible regardless of output capturing.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
