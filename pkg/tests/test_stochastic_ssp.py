import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from budgetpath.discrete_budget import solve_no_reset, solve_reset_dijkstra
from budgetpath.graph_core import INF, BudgetLevels, dijkstra, eight_node_example
from budgetpath.stochastic_ssp import (
    SSPFormatError,
    SSPModel,
    read_model,
    simulate_policy,
    solve_budget_ssp,
    solve_reset_ssp,
    value_iteration,
    write_model,
)

from conftest import random_graph


def geometric(with_direct=False, secondary=0):
    m = SSPModel(2, 1, 1.0)
    if with_direct:
        m.add_control(0, 3.0, secondary, [1], [1.0])
    m.add_control(0, 1.0, secondary, [0, 1], [0.5, 0.5])
    return m


def random_ssp(rng, m, B, reset=True):
    n = m + 1
    safe = frozenset(int(i) for i in np.nonzero(rng.random(m) < 0.3)[0])
    model = SSPModel(n, m, 1.0, safe)
    for i in range(m):
        for _ in range(int(rng.integers(1, 4))):
            k = int(rng.integers(1, 4))
            succ = rng.choice(n, size=k, replace=False)
            p = rng.random(k) + 0.05
            p /= p.sum()
            p[-1] = 1.0 - p[:-1].sum()
            if i in safe:
                c = -B if reset else 0
            else:
                c = int(rng.integers(1, 3))
            model.add_control(i, float(rng.uniform(1, 5)), c, succ, p)
    return model


def test_geometric_series():
    r = value_iteration(geometric())
    assert abs(r.values[0] - 2.0) < 1e-9


def test_geometric_two_controls_prefers_stochastic():
    r = value_iteration(geometric(with_direct=True))
    assert abs(r.values[0] - 2.0) < 1e-9
    assert r.policy[0] == 1


def test_monte_carlo_matches_value():
    m = geometric(with_direct=True)
    r = value_iteration(m)
    costs = simulate_policy(m, r.policy, 0, 100_000, np.random.default_rng(7))
    se = costs.std() / math.sqrt(costs.size)
    assert abs(costs.mean() - r.values[0]) < 3 * se


def test_deterministic_model_matches_dijkstra():
    g = eight_node_example(3)
    r = value_iteration(SSPModel.from_graph(g))
    assert list(r.values) == dijkstra(g)


def test_budget_ssp_deterministic_matches_no_reset():
    g = eight_node_example(3)
    t = solve_budget_ssp(SSPModel.from_graph(g), BudgetLevels(3))
    assert t == solve_no_reset(g, BudgetLevels(3))


def test_budget_ssp_self_loop_infeasible():
    t = solve_budget_ssp(geometric(secondary=1), BudgetLevels(6))
    assert np.all(np.isinf(t.values[0]))


def test_budget_ssp_zero_costs_give_unconstrained():
    m = geometric(with_direct=True)
    t = solve_budget_ssp(m, BudgetLevels(4))
    assert np.allclose(t.values[0], 2.0, atol=1e-9)


def test_budget_ssp_explicit_sweep_with_direct_control():
    # with a cost-3 escape the self loop helps more as the budget grows
    t = solve_budget_ssp(geometric(with_direct=True, secondary=1), BudgetLevels(4))
    want = [INF, 3.0, 2.5, 2.25, 2.125]
    assert np.allclose(t.values[0], want)


def test_reset_ssp_deterministic_matches_graph():
    g = eight_node_example(3, True)
    r = solve_reset_ssp(SSPModel.from_graph(g), BudgetLevels(3))
    assert r.table == solve_reset_dijkstra(g, BudgetLevels(3))


def test_reset_ssp_all_safe():
    g = eight_node_example(3)
    m = SSPModel(9, 8, 1.0, frozenset(range(8)))
    for i, a in g.all_arcs():
        m.add_control(i, a.primary, -3, [a.head], [1.0])
    r = solve_reset_ssp(m, BudgetLevels(3))
    assert list(r.table.top()) == dijkstra(g)


@pytest.mark.parametrize("seed", range(20))
def test_reset_ssp_matches_monolithic(seed):
    rng = np.random.default_rng(seed)
    B = int(rng.integers(1, 5))
    m = random_ssp(rng, int(rng.integers(3, 12)), B)
    alt = solve_reset_ssp(m, BudgetLevels(B), tol=1e-13).table.values
    mono = solve_budget_ssp(m, BudgetLevels(B), tol=1e-13).values
    # compare the states the alternation owns: unsafe levels >= 1, safe nodes once
    for i in range(m.n_nodes):
        bs = [B] if i in m.safe else range(1, B + 1)
        for b in bs:
            a, c = alt[i, b], mono[i, b]
            assert (math.isinf(a) and math.isinf(c)) or abs(a - c) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_explicit_sweep_equals_value_iteration(m, B, seed):
    rng = np.random.default_rng(seed)
    model = random_ssp(rng, m, B, reset=False)
    # strictly positive costs everywhere: re-label safe nodes with cost 1
    for i in model.safe:
        for c in model.controls[i]:
            c.secondary = 1
    sweep = solve_budget_ssp(model, BudgetLevels(B)).values
    from budgetpath.stochastic_ssp import _solve_expanded_ssp
    full = _solve_expanded_ssp(model, BudgetLevels(B), 1e-13, 1_000_000).values
    fin = np.isfinite(sweep)
    assert np.array_equal(fin, np.isfinite(full))
    assert np.allclose(sweep[fin], full[fin], atol=1e-9, rtol=0)
    assert np.all(sweep[:, 1:] <= sweep[:, :-1])


def test_residuals_eventually_decrease():
    m = random_ssp(np.random.default_rng(3), 10, 2, reset=False)
    res = value_iteration(m).residuals
    tail = res[len(res) // 2:]
    assert all(b <= a + 1e-15 for a, b in zip(tail, tail[1:]))


def test_model_validation():
    m = SSPModel(3, 2, 1.0)
    with pytest.raises(SSPFormatError):
        m.add_control(0, 1.0, 0, [1, 2], [0.5, 0.6])
    with pytest.raises(SSPFormatError):
        m.add_control(0, 0.5, 0, [2], [1.0])
    with pytest.raises(SSPFormatError):
        m.add_control(2, 1.0, 0, [0], [1.0])
    with pytest.raises(SSPFormatError):
        SSPModel(2, 1, 0.0)


def test_model_file_round_trip(tmp_path):
    m = random_ssp(np.random.default_rng(5), 6, 2)
    p = tmp_path / "m.txt"
    write_model(m, 2, p)
    m2, B = read_model(p)
    assert B == 2 and m2.safe == m.safe
    a = solve_reset_ssp(m, BudgetLevels(2)).table.values
    b = solve_reset_ssp(m2, BudgetLevels(2)).table.values
    assert np.array_equal(a, b)


def test_model_file_errors(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("1 1 1.0\n-\n")
    with pytest.raises(SSPFormatError):
        read_model(p)
    p.write_text("1 1 1.0 2\n0 0 1.0 0 1\n-\n")
    with pytest.raises(SSPFormatError):
        read_model(p)
