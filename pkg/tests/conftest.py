import pytest

# one line per acceptance criterion, printed after the run whatever the capture mode
ACCEPTANCE: list[str] = []


@pytest.fixture
def report():
    def record(criterion: str, passed: bool, detail: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}"
        ACCEPTANCE.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
