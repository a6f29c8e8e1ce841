import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from budgetpath.discrete_budget import (
    compute_auxiliaries,
    solve_discrete,
    solve_no_reset,
    solve_reset_dijkstra,
    solve_reset_iterative,
)
from budgetpath.graph_core import (
    INF,
    BudgetLevels,
    DirectedGraph,
    GraphFormatError,
    build_expanded_graph,
    dijkstra,
    eight_node_example,
    solve_expanded,
)

from conftest import random_graph

# nodes are 0-based here: x1 -> 0, ..., x8 -> 7, target 8


def test_no_reset_chain_values():
    t = solve_no_reset(eight_node_example(3), BudgetLevels(3))
    want = {(3, 3): 6, (0, 3): 9, (1, 3): 8, (0, 2): 10, (1, 2): 11, (2, 2): INF,
            (4, 2): 5, (0, 1): INF, (6, 1): 2}
    for (i, b), v in want.items():
        assert t.value(i, b) == v


def test_no_reset_zero_budget_unsafe_infinite():
    g = eight_node_example(3)
    t = solve_no_reset(g, BudgetLevels(3))
    for i in g.unsafe:
        assert math.isinf(t.value(i, 0))


def test_no_reset_large_budget_gives_unconstrained():
    g = eight_node_example(5)
    t = solve_no_reset(g, BudgetLevels(5))
    assert list(t.top()[:8]) == dijkstra(g)[:8]


def test_no_reset_matches_expanded_dijkstra(rng):
    for _ in range(30):
        m = int(rng.integers(2, 30))
        B = int(rng.integers(0, 6))
        g = random_graph(rng, m, B, False)
        t = solve_no_reset(g, BudgetLevels(B))
        ref = solve_expanded(build_expanded_graph(g, BudgetLevels(B), reset=False, labelled=False))
        assert t == ref


def test_no_reset_rejects_negative_costs():
    with pytest.raises(GraphFormatError):
        solve_no_reset(eight_node_example(3, True), BudgetLevels(3))


def test_reset_chain_values():
    t = solve_reset_dijkstra(eight_node_example(3, True), BudgetLevels(3))
    want = {(3, 3): 5, (3, 2): 10, (2, 2): 7, (2, 1): 9, (4, 2): 4, (5, 1): 3, (0, 3): 9, (1, 3): 8}
    for (i, b), v in want.items():
        assert t.value(i, b) == v


def test_reset_b4_lowers_w42():
    t3 = solve_reset_dijkstra(eight_node_example(3, True), BudgetLevels(3))
    t4 = solve_reset_dijkstra(eight_node_example(4, True), BudgetLevels(4))
    assert t3.value(3, 2) == 10 and t4.value(3, 2) == 9


def test_reset_all_safe_is_unconstrained():
    base = eight_node_example(3)
    g = DirectedGraph(9, 8, frozenset(range(8)))
    for i, a in base.all_arcs():
        g.add_arc(i, a.head, a.primary, -3)
    t = solve_reset_dijkstra(g, BudgetLevels(3))
    assert list(t.top()) == dijkstra(g)


def test_auxiliaries_no_reset():
    aux = compute_auxiliaries(eight_node_example(3))
    assert list(aux.V[:8]) == [2, 2, 3, 3, 2, 2, 1, 1]
    assert list(aux.Vt[:8]) == [5, 5, 5, 4, 3, 2, 1, 1]
    assert list(aux.Ut[:8]) == [10, 11, 7, 6, 5, 3, 2, 1]
    fin = np.isfinite(aux.Ut)
    assert np.all(aux.Ut[fin] >= aux.U[fin]) and np.all(aux.Vt[fin] >= aux.V[fin])


def test_auxiliaries_reset_final_safe_set():
    g = eight_node_example(3, True)
    t = solve_reset_dijkstra(g, BudgetLevels(3))
    reach = {j: t.value(j, 3) for j in g.safe if t.value(j, 3) < INF}
    aux = compute_auxiliaries(g, reach)
    assert (aux.V[2], aux.V[3], aux.Ut[2], aux.Ut[3]) == (1, 2, 9, 10)


def test_auxiliaries_coincide_on_a_path():
    g = DirectedGraph(3, 2)
    g.add_arc(0, 1, 1, 1)
    g.add_arc(1, 2, 1, 1)
    aux = compute_auxiliaries(g)
    assert np.array_equal(aux.U, aux.Ut) and np.array_equal(aux.V, aux.Vt)


def test_remark4_identities():
    g = eight_node_example(3)
    aux = compute_auxiliaries(g)
    t = solve_no_reset(g, BudgetLevels(5))
    for i in range(8):
        assert t.value(i, int(aux.V[i])) == aux.Ut[i]
        for b in range(int(aux.Vt[i]), 6):
            assert t.value(i, b) == aux.U[i]


def test_iterative_sequence():
    r = solve_reset_iterative(eight_node_example(3, True), BudgetLevels(3))
    safe = sorted({0, 1, 6})
    first, second = r.history[0], r.history[1]
    assert first[safe.index(6)] == 2
    assert (second[safe.index(0)], second[safe.index(1)]) == (9, 8)
    assert r.iterations == 3
    assert r.table == solve_reset_dijkstra(eight_node_example(3, True), BudgetLevels(3))


def test_iterative_no_unsafe_one_pass():
    base = eight_node_example(3)
    g = DirectedGraph(9, 8, frozenset(range(8)))
    for i, a in base.all_arcs():
        g.add_arc(i, a.head, a.primary, -3)
    r = solve_reset_iterative(g, BudgetLevels(3))
    assert r.iterations == 1 and list(r.table.top()) == dijkstra(g)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 50), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_iterative_equals_expanded(m, B, seed):
    g = random_graph(np.random.default_rng(seed), m, B, True)
    it = solve_reset_iterative(g, BudgetLevels(B)).table
    ref = solve_reset_dijkstra(g, BudgetLevels(B))
    assert it == ref
    assert ref.is_monotone()


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_reset_never_worse_than_no_reset(m, B, seed):
    rng = np.random.default_rng(seed)
    g0 = random_graph(rng, m, B, False)
    g1 = g0.with_secondary(lambda i, a: -B if i in g0.safe else a.secondary)
    w0 = solve_no_reset(g0, BudgetLevels(B))
    w1 = solve_reset_dijkstra(g1, BudgetLevels(B))
    for i in g0.unsafe:
        for b in range(1, B + 1):
            assert w1.value(i, b) <= w0.value(i, b)
    for i in g0.safe:
        assert w1.value(i, B) <= w0.value(i, B)


def test_solve_discrete_modes():
    g = eight_node_example(3, True)
    a = solve_discrete(g, 3, "reset-dijkstra")
    b = solve_discrete(g, 3, "reset-iterative")
    assert a == b
    with pytest.raises(ValueError):
        solve_discrete(g, 3, "bogus")
