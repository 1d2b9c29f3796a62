import numpy as np
import pytest

from safedesc.torus import build_bank, default_spec


@pytest.fixture(scope="session")
def default_bank():
    return build_bank(default_spec())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_LINES = pytest.StashKey()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash.setdefault(_LINES, {})

    def record(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        lines[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
