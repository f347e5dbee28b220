import pytest

ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request, capsys):
    """Record and print one pass/fail line for an acceptance criterion."""
    lines = request.config.stash[ACCEPTANCE_KEY]

    def report(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number} [{title}]: {'PASS' if ok else 'FAIL'} ({detail})"
        lines.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[ACCEPTANCE_KEY]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
