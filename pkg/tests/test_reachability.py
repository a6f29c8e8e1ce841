import tracemalloc

import numpy as np
import pytest

from budgetpath.budget_reset_solver import solve_budget_reset
from budgetpath.grid_field import INF, ScenarioConfig, rasterize_scenario
from budgetpath.reachability import (
    propagate_safe_component_min,
    safe_components,
    solve_reachability,
)
from budgetpath.scenarios import islands_config


def two_islands():
    # two safe blocks, neither touching the target component
    cfg = ScenarioConfig(name="two", N=41, B=0.3,
                         safe=[{"rect": [-0.5, -0.3, -0.2, 0.2]}, {"rect": [0.3, 0.5, -0.2, 0.2]}],
                         target=[{"point": [-1.0, 0.0]}])
    return rasterize_scenario(cfg)[0]


def test_components_are_four_connected():
    grid = two_islands()
    labels, count = safe_components(grid)
    # the boundary ring and the two blocks
    assert count == 3
    a = labels[grid.index_of(-0.4, 0.0)]
    b = labels[grid.index_of(0.4, 0.0)]
    assert a != b and a > 0 and b > 0
    # diagonal contact alone does not merge
    s = np.zeros((5, 5), dtype=bool)
    s[1, 1] = s[2, 2] = True
    from scipy import ndimage
    from budgetpath.reachability import _FOUR
    assert ndimage.label(s, structure=_FOUR)[1] == 2


def test_component_minimum_over_adjacent_data():
    grid = two_islands()
    data = np.full((grid.N, grid.N), INF)
    i, j = grid.index_of(-0.25, 0.0)  # unsafe, next to the left block
    data[i, j] = 0.5
    data[i, j + 1] = 0.2
    g = propagate_safe_component_min(grid, data, B=0.3)
    left = g[grid.index_of(-0.4, 0.1)]
    assert left == pytest.approx(0.2)
    assert g[grid.index_of(0.4, 0.0)] == INF
    # every value above B: nothing propagates
    g2 = propagate_safe_component_min(grid, np.where(np.isfinite(data), 0.9, INF), B=0.3)
    assert g2[grid.index_of(-0.4, 0.1)] == INF
    # the component holding the target gets zero
    assert g[grid.index_of(-1.0, 0.0)] == 0.0
    assert g[0, 0] == INF  # infinite-cost exits join no component


def test_no_unsafe_points_single_pass():
    cfg = ScenarioConfig(name="open", N=21, B=0.2, safe=[{"rect": [-1, 1, -1, 1]}],
                         target=[{"point": [0, 0]}])
    res = solve_reachability(cfg)
    assert res.iterations == 1 and res.converged


@pytest.fixture(scope="module")
def islands_pair():
    cfg = islands_config(N=100, B=0.3)
    return cfg, solve_reachability(cfg), solve_budget_reset(cfg, ntheta=32)


def test_reachable_sets_match_full_solve(islands_pair):
    cfg, res, sol = islands_pair
    grid = sol.grid
    np.testing.assert_array_equal(np.isfinite(res.G) & grid.safe, np.isfinite(sol.W2) & grid.safe)
    reach = res.reachable(cfg.B)
    full = grid.unsafe & np.isfinite(sol.W1[-1])
    # equal up to one budget step on the minimum feasible level
    diff = reach ^ full
    assert np.all(np.abs(res.V[diff] - cfg.B) <= sol.axis.db + 1e-12)


def test_counts_grow(islands_pair):
    _, res, _ = islands_pair
    safe_pts = [c[2] for c in res.counts]
    assert safe_pts == sorted(safe_pts)
    assert res.converged


def _peak(cfg):
    tracemalloc.start()
    solve_reachability(cfg)
    peak = tracemalloc.get_traced_memory()[1]
    tracemalloc.stop()
    return peak


def test_memory_does_not_depend_on_budget_levels():
    base = islands_config(N=80, B=0.3)
    coarse = _peak(base.replace(db=0.1))
    fine = _peak(base.replace(db=0.001))
    assert fine <= 1.1 * coarse
    # N x N work arrays only
    assert fine < 40 * 80 * 80 * 8
