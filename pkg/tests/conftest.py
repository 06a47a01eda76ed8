import pytest

_RESULTS_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS_KEY] = []


@pytest.fixture
def criterion(request, capsys):
    """Record and echo one PASS/FAIL line for an acceptance criterion, then assert it."""
    results = request.config.stash[_RESULTS_KEY]

    def check(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'} {detail}"
        results.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS_KEY, [])
    if results:
        terminalreporter.section("acceptance criteria")
        for line in sorted(results, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
