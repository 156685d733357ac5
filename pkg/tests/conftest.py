import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number, ok, detail, elapsed, limit):
        in_time = elapsed < limit
        status = "PASS" if ok and in_time else "FAIL"
        line = f"{status} criterion {number}: {detail} [{elapsed:.2f} s, limit {limit:g} s]"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok and in_time

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
