import pytest

_LINES = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, ok, detail, seconds)``."""
    lines = request.config.stash.setdefault(_LINES, [])

    def record(n, ok, detail, seconds):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail} [{seconds:.2f} s]"
        lines.append((n, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
