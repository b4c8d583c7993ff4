import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

REPO = Path(__file__).resolve().parents[1]
_criteria: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def two_player_path() -> Path:
    return REPO / "instances" / "two_player.json"


@pytest.fixture
def criterion():
    """Record an acceptance criterion's outcome, then assert it."""

    def record(number: int, passed: bool, detail: str) -> None:
        _criteria[number] = (bool(passed), detail)
        assert passed, f"criterion {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        passed, detail = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
