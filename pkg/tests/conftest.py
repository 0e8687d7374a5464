import pytest

_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict line; the test still asserts on its own."""
    lines = request.config.stash[_VERDICTS]

    def record(tag: str, passed: bool, detail: str) -> bool:
        lines.append(f"{tag:<4} {'PASS' if passed else 'FAIL'}  {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s[1:s.index(" ")])):
            terminalreporter.write_line(line)
