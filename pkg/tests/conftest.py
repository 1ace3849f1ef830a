import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from permgap.datasets import load_worked_example  # noqa: E402


@pytest.fixture
def worked():
    return load_worked_example()


@pytest.fixture
def worked_acyclic():
    return load_worked_example(acyclic=True)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
