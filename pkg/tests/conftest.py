import itertools
from pathlib import Path

import numpy as np
import pytest

from microplate_doe.scenarios import load_scenario

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def paper():
    return load_scenario("paper")


@pytest.fixture(scope="session", params=["paper", "alt1", "alt2", "alt3", "alt4"])
def any_scenario(request):
    return load_scenario(request.param)


def letter_columns(rt):
    """Map every letter word to its ±1 column, computed from the run table only."""
    out = {}
    n = len(rt.factors)
    for r in range(1, n + 1):
        for combo in itertools.combinations(range(n), r):
            col = np.prod(rt.levels[:, list(combo)], axis=1)
            out["".join(rt.factors[i] for i in combo)] = col
    return out


def columns_by_pattern(rt):
    """Group letter words whose run-table columns coincide up to sign."""
    groups = {}
    for label, col in letter_columns(rt).items():
        key = tuple(col * col[0])
        groups.setdefault(key, set()).add(label)
    return groups


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
