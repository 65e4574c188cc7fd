import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gradedmult.group import load_descriptor  # noqa: E402


@pytest.fixture(scope="session")
def h1():
    return load_descriptor("heisenberg-1")


@pytest.fixture(scope="session")
def ab12():
    return load_descriptor("abelian-12")


@pytest.fixture(scope="session")
def iso2():
    return load_descriptor("abelian-iso-2")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance_log(request):
    """Collects one line per acceptance criterion for the terminal summary."""
    lines = request.config.stash[_ACCEPTANCE]

    def log(tag, clauses, elapsed):
        ok = all(c[1] for c in clauses)
        failed = [c[0] for c in clauses if not c[1]]
        line = "%s %s (%.1fs)%s" % (tag, "PASS" if ok else "FAIL", elapsed,
                                   "" if ok else ": failed " + ", ".join(failed))
        lines.append(line)
        print(line)
        for name, passed, value in clauses:
            print("    [%s] %s = %s" % ("ok" if passed else "FAIL", name, value))
        return ok, failed

    return log


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
