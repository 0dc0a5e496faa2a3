import pytest

ACCEPTANCE = []


@pytest.fixture
def report():
    """Record one acceptance line; the assertion stays with the caller."""

    def _report(criterion, passed, detail):
        line = f"ACCEPTANCE {criterion:>2} {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE.append((criterion, line))
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE, key=lambda t: t[0]):
        terminalreporter.write_line(line)
