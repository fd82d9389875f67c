import pytest

_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.fixture
def record(request):
    """Log one acceptance line; the test still asserts on its own."""

    def log(number: int, name: str, ok: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {name}" + (f" ({detail})" if detail else "")
        request.config.stash[_RESULTS].append((number, line))
        print(line)
        return ok

    return log


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[_RESULTS]
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(results):
            terminalreporter.write_line(line)
