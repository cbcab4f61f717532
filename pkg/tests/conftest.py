import itertools

import numpy as np
import pytest

from ecoinfer.model import BracketPartition, OptionSet, PrecinctRecord, cell_matrix


def naive_tables(x, t):
    """Every integer table with the given margins, by filtering the full product of cell ranges."""
    R, C = len(x), len(t)
    ranges = [range(min(x[g], t[p]) + 1) for g in range(R) for p in range(C)]
    out = []
    for cells in itertools.product(*ranges):
        tab = np.array(cells).reshape(R, C)
        if tuple(tab.sum(axis=1)) == tuple(x) and tuple(tab.sum(axis=0)) == tuple(t):
            out.append(tab)
    return out


@pytest.fixture
def two_brackets():
    return BracketPartition(((18, 44), (45, None)))


@pytest.fixture
def two_options():
    return OptionSet(("yes", "no"))


@pytest.fixture
def homogeneous():
    """Age-homogeneous precincts voting exactly [[0.7, 0.3], [0.2, 0.8]]."""
    records = [
        PrecinctRecord("a1", (100, 0), (70, 30)),
        PrecinctRecord("a2", (200, 0), (140, 60)),
        PrecinctRecord("b1", (0, 100), (20, 80)),
        PrecinctRecord("b2", (0, 50), (10, 40)),
    ]
    return records


HOMOGENEOUS_BETA = np.array([[0.7, 0.3], [0.2, 0.8]])

DESK_BETA = np.array([
    [0.20, 0.45, 0.10, 0.25],
    [0.28, 0.40, 0.13, 0.19],
    [0.36, 0.33, 0.16, 0.15],
    [0.44, 0.27, 0.19, 0.10],
    [0.52, 0.20, 0.22, 0.06],
])
DESK_PARTITION = BracketPartition.parse("18-29,30-44,45-59,60-74,75+")
DESK_OPTIONS = OptionSet(("A", "B", "C", "abstain"), abstain="abstain")


def desk_beta():
    return cell_matrix(DESK_BETA, DESK_PARTITION.labels, DESK_OPTIONS.options)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def check(number, ok, detail):
        lines.append((number, f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"))
        print(lines[-1][1])
        assert ok, detail

    return check


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
