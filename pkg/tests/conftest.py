import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_LINES = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def criterion_log(request):
    """Shared ``{criterion: line}`` map echoed in the terminal summary."""
    return request.config.stash.setdefault(_LINES, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
