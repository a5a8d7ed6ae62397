import time
from contextlib import contextmanager

import pytest

_CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_CRITERIA] = []


@pytest.fixture
def criterion(request):
    """Context manager recording one pass/fail line per acceptance criterion."""
    lines = request.config.stash[_CRITERIA]

    @contextmanager
    def record(number, title, budget):
        start = time.perf_counter()
        try:
            yield
            elapsed = time.perf_counter() - start
            assert elapsed < budget, f"took {elapsed:.1f}s, budget {budget}s"
        except BaseException as exc:
            line = f"criterion {number:2d} FAIL  {title}: {exc}".splitlines()[0]
            lines.append(line)
            print(line)
            raise
        line = f"criterion {number:2d} PASS  {title} ({elapsed:.1f}s)"
        lines.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash[_CRITERIA]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
