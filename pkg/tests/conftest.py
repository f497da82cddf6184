import json
from fractions import Fraction as F

import pytest

from markedgw.laws import validate_law
from markedgw.tree import build_tree

LAWS = {
    # subcritical, mean 4/5, only binary nodes are marked
    "A": ({0: F(3, 5), 2: F(2, 5)}, {0: F(0), 2: F(1)}),
    # critical, every node marked
    "B": ({0: F(1, 2), 2: F(1, 2)}, F(1)),
    # supercritical, mean 8/5
    "C": ({0: F(1, 5), 2: F(4, 5)}, F(1)),
    # critical
    "D": ({0: F(1, 2), 2: F(1, 2)}, {0: F(0), 2: F(1)}),
    # no leaves, r = 2
    "F": ({2: F(3, 5), 3: F(2, 5)}, F(1, 2)),
    # supercritical, unmarked nodes may have children
    "G": ({0: F(3, 10), 1: F(1, 5), 2: F(1, 2)}, F(1, 2)),
    # subcritical, three atoms, mark probability varies with the degree
    "H": ({0: F(11, 20), 1: F(1, 4), 3: F(1, 5)}, {0: F(1, 3), 1: F(1, 2), 3: F(1)}),
}

LAW_JSON = {
    "A": {"p": {"0": "3/5", "2": "2/5"}, "q": {"0": "0", "2": "1"}},
    "B": {"p": {"0": "1/2", "2": "1/2"}, "q": {"0": "1", "2": "1"}},
    "C": {"p": {"0": "1/5", "2": "4/5"}, "q": {"0": "1", "2": "1"}},
    "D": {"p": {"0": "1/2", "2": "1/2"}, "q": {"0": "0", "2": "1"}},
    "F": {"p": {"2": "3/5", "3": "2/5"}, "q": {"2": "1/2", "3": "1/2"}},
}

EXAMPLE_RECORDS = [
    ((), 3, 1),
    ((1,), 1, 0),
    ((2,), 2, 1),
    ((3,), 0, 0),
    ((1, 1), 0, 1),
    ((2, 1), 0, 0),
    ((2, 2), 1, 1),
    ((2, 2, 1), 0, 0),
]

EXAMPLE_MASSES = {
    (): F(0),
    (1,): F(1, 3),
    (2,): F(1, 3),
    (3,): F(1, 3),
    (1, 1): F(4, 9),
    (2, 1): F(7, 9),
    (2, 2): F(7, 9),
    (2, 2, 1): F(4),
}


def make_law(name, exact=True):
    p, q = LAWS[name]
    if not exact:
        p = {k: float(v) for k, v in p.items()}
        q = float(q) if not isinstance(q, dict) else {k: float(v) for k, v in q.items()}
    return validate_law(p, q)


@pytest.fixture
def law_a():
    return make_law("A")


@pytest.fixture
def law_b():
    return make_law("B")


@pytest.fixture
def law_c():
    return make_law("C")


@pytest.fixture
def law_d():
    return make_law("D")


@pytest.fixture
def law_f():
    return make_law("F")


@pytest.fixture
def law_g():
    return make_law("G")


@pytest.fixture
def law_h():
    return make_law("H")


@pytest.fixture
def example_tree():
    return build_tree(EXAMPLE_RECORDS, 3)


@pytest.fixture
def law_file(tmp_path):
    def write(name):
        path = tmp_path / f"law{name}.json"
        path.write_text(json.dumps(LAW_JSON[name]))
        return str(path)
    return write


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
