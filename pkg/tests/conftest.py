import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest  # noqa: E402

from kgeval.synthetic import write_mini_fixtures  # noqa: E402


@pytest.fixture
def mini(tmp_path):
    """Freshly generated miniature fixtures; returns the directory holding config.yaml."""
    write_mini_fixtures(tmp_path)
    return tmp_path


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
