import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    def report(criterion: int, ok: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
