from __future__ import annotations

import pytest

_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Callable recording one summary line per acceptance criterion."""

    def record(number: int, title: str, passed: bool, elapsed: float, limit: float | None, detail: str):
        status = "PASS" if passed else "FAIL"
        budget = f"{elapsed:.1f}s" + (f" / {limit:.0f}s" if limit else "")
        line = f"criterion {number} {status}  {title}  [{budget}]  {detail}"
        _ACCEPTANCE.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
