import pytest

_LINES = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_LINES] = {}


@pytest.fixture
def report_criterion(request):
    """Record ``(AC id, passed, detail)``; lines are echoed in the terminal summary."""

    def record(ac, passed, detail):
        line = f"{ac} {'PASS' if passed else 'FAIL'}  {detail}"
        request.config.stash[_LINES][ac] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash[_LINES]
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for ac in sorted(lines, key=lambda k: int(k[2:])):
        terminalreporter.write_line(lines[ac])
