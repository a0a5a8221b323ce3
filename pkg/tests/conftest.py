import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_ACCEPTANCE: list[tuple[int, str, bool, str]] = []


@pytest.fixture
def record():
    """Record one acceptance line: ``record(number, title, ok, detail)``."""

    def _record(number: int, title: str, ok: bool, detail: str = "") -> None:
        _ACCEPTANCE.append((number, title, bool(ok), detail))

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title} | {detail}")
