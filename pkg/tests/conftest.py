import numpy as np
import pytest

from onergate.atom import AtomSpec


@pytest.fixture(scope="session")
def spec():
    return AtomSpec()


def mhz(x):
    return 2 * np.pi * x


@pytest.fixture
def acceptance(request):
    """Record a one-line verdict for an acceptance criterion.

    Verdicts are printed immediately (visible with ``-s``) and repeated in the
    terminal summary of every run.
    """
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(criterion, ok, detail):
        line = f"CRITERION {criterion:<3} {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: (int("".join(c for c in s.split()[1] if c.isdigit())), s)):
            terminalreporter.write_line(line)
