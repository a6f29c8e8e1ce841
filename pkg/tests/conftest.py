import numpy as np
import pytest

from budgetpath.graph_core import DirectedGraph


def random_graph(rng, m, budget, reset, p_safe=0.3, density=3, max_cost=9):
    """Random labelled graph on m non-target nodes plus a target."""
    n = m + 1
    safe = frozenset(int(i) for i in np.nonzero(rng.random(m) < p_safe)[0])
    g = DirectedGraph(n, m, safe)
    for i in range(m):
        heads = rng.choice(n, size=min(density, n - 1), replace=False)
        for j in heads:
            if j != i:
                sec = rng.integers(1, 3) if i not in safe else 0
                g.add_arc(i, int(j), float(rng.integers(0, max_cost + 1)), int(sec))
    if reset:
        g = g.with_secondary(lambda i, a: -budget if i in safe else a.secondary)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
