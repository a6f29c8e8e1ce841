import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from budgetpath import cli
from budgetpath.budget_reset_solver import solve_budget_reset
from budgetpath.grid_field import INF, ScenarioError, read_field, write_field
from budgetpath.scenarios import (
    SCENARIO_NAMES,
    catalog,
    convergence_config,
    error_norms,
    exact_fields,
    exact_solution,
    islands_config,
    lattice_oracle,
    path_crosses_obstacle,
    replay_budget,
    run_scenario,
    visibility_config,
)

# --- closed-form slab solution ---------------------------------------------


def test_exact_safe_points():
    assert exact_solution(-0.5, 0.0, 1.0) == pytest.approx(1.5)
    assert exact_solution(1.0, 0.0, 0.3) == 0.0
    # the straight segment leaves the usable face: go around its end
    ly = math.sqrt(5) / 3
    v = exact_solution(0.3, 0.9, 1.0)
    assert v == pytest.approx(math.hypot(1 / 3 - 0.3, 0.9 - ly) + 1.0)
    assert exact_solution(0.0, 0.95, 1.0) == pytest.approx(math.hypot(1.0, 0.95))


def test_exact_unsafe_points():
    assert exact_solution(0.9, 0.05, 1.0) == pytest.approx(math.hypot(0.1, 0.05))
    assert exact_solution(0.9, 0.5, 0.1) == INF
    # not enough budget to go straight, enough to reach the slab
    v = exact_solution(0.5, 0.9, 0.3)
    assert math.isfinite(v) and v > math.hypot(0.5, 0.9)


@settings(max_examples=80, deadline=None)
@given(x=st.floats(1 / 3 + 1e-3, 1), y=st.floats(-1, 1), b=st.floats(0.01, 1.0), db=st.floats(0.01, 0.5))
def test_exact_nonincreasing_in_budget(x, y, b, db):
    lo, hi = exact_solution(x, y, b), exact_solution(x, y, min(b + db, 1.0))
    assert hi <= lo + 1e-9
    assert hi >= math.hypot(1 - x, y) - 1e-9


def test_exact_never_above_lattice_oracle():
    n, nb = 21, 11
    safe_vals, unsafe_vals = lattice_oracle(n, nb)
    eW2, eW1 = exact_fields(n, np.linspace(0, 1, nb))
    inner = np.zeros((n, n), dtype=bool)
    inner[1:-1, 1:-1] = True
    m = inner & np.isfinite(safe_vals)
    assert np.all(np.isfinite(eW2[m]))
    assert np.all(eW2[m] <= safe_vals[m] + 1e-9)
    mu = inner[None] & np.isfinite(unsafe_vals)
    assert np.all(np.isfinite(eW1[mu]))
    assert np.all(eW1[mu] <= unsafe_vals[mu] + 1e-9)


# --- error norms -----------------------------------------------------------


@pytest.fixture(scope="module")
def slab41():
    return solve_budget_reset(convergence_config(41), ntheta=32)


def test_norms_zero_on_exact_fields():
    N = 21
    sol = solve_budget_reset(convergence_config(N), max_iters=1)
    lv = sol.axis.levels
    eW2, eW1 = exact_fields(N, lv)
    L1, sups, mism = error_norms(eW1, eW2, sol.grid, lv)
    assert L1 == 0.0 and sups == [0.0, 0.0] and mism == 0


def test_norms_from_written_fields(slab41, tmp_path):
    sol = slab41
    write_field(sol.W1, tmp_path / "w1.txt", sol.axis.B)
    write_field(sol.W2, tmp_path / "w2.txt", sol.axis.B)
    W1, B = read_field(tmp_path / "w1.txt")
    W2, _ = read_field(tmp_path / "w2.txt")
    lv = np.linspace(0, B, W1.shape[0])
    assert error_norms(W1, W2, sol.grid, lv) == error_norms(sol.W1, sol.W2, sol.grid, sol.axis.levels)


def test_wider_band_never_raises_sup(slab41):
    sol = slab41
    _, sups, _ = error_norms(sol.W1, sol.W2, sol.grid, sol.axis.levels, eps_list=(0.05, 0.1, 0.2))
    assert sups[0] >= sups[1] >= sups[2]


# --- catalog and directional checks ----------------------------------------


def test_catalog_names():
    for name in SCENARIO_NAMES:
        cfgs = catalog(name, N=30)
        assert cfgs and all(c.N == 30 for c in cfgs)
    assert [c.B for c in catalog("islands-B")] == [0.3, 0.4, 0.5]
    with pytest.raises(ScenarioError):
        catalog("nowhere")
    with pytest.raises(ScenarioError):
        islands_config(variant="lava")


def test_replay_counts_only_unsafe_travel():
    cfg = convergence_config(41)
    pts = np.array([[0.0, 0.0], [0.5, 0.0], [0.5, 0.3]])
    low, worst = replay_budget(cfg, pts, substeps=50)
    assert worst == pytest.approx(0.5 - 1 / 3 + 0.3, abs=0.02)
    assert low == pytest.approx(1.0 - worst)


@pytest.mark.slow
def test_islands_paths_change_with_budget():
    lengths = []
    for B in (0.3, 0.5):
        b = run_scenario(islands_config(N=100, B=B), ntheta=32)
        tr = b.paths[0]
        assert tr is not None and tr.reached
        low, _ = replay_budget(b.config, tr.points)
        assert low >= -1e-9
        lengths.append(tr.length)
    assert abs(lengths[0] - lengths[1]) > 0.05


@pytest.mark.slow
def test_visibility_path_shortens_with_budget():
    lengths = []
    for B in (0.15, 0.6):
        cfg = visibility_config(N=100, B=B)
        b = run_scenario(cfg, ntheta=32)
        tr = b.paths[0]
        assert tr is not None and tr.reached
        assert not path_crosses_obstacle(cfg, tr.points)
        assert replay_budget(cfg, tr.points)[0] >= -1e-9
        lengths.append(tr.length)
    assert lengths[1] < lengths[0] - 0.1


# --- command line ----------------------------------------------------------


def test_cli_discrete(tmp_path, capsys):
    from budgetpath.graph_core import eight_node_example, write_graph
    p = tmp_path / "g.txt"
    write_graph(eight_node_example(3, reset=True), 3, p)
    assert cli.main(["discrete", str(p), "--mode", "reset-dijkstra"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 9  # eight nodes plus the target
    assert cli.main(["discrete", str(p), "--mode", "reset-iterative", "-o", str(tmp_path / "t.txt")]) == 0
    assert (tmp_path / "t.txt").exists()


def test_cli_hjb_solve_and_path(tmp_path, capsys):
    cfg = convergence_config(21)
    cp = tmp_path / "c.json"
    cfg.save(cp)
    rc = cli.main(["hjb", "solve", "--config", str(cp), "--out-dir", str(tmp_path),
                   "--emit", "w2", "w1-full", "contours", "log"])
    assert rc == 0
    for suffix in ("w2.txt", "w1.txt", "contours.csv", "log.csv"):
        assert (tmp_path / f"convergence_{suffix}").exists()
    W1, B = read_field(tmp_path / "convergence_w1.txt")
    assert B == 1.0 and W1.ndim == 3
    rc = cli.main(["path", "--config", str(cp), "--x", "0.9", "--y", "0.9", "--out-dir", str(tmp_path)])
    assert rc == 0
    rows = (tmp_path / "convergence_path.csv").read_text().splitlines()
    assert rows[0] == "x,y,b,t" and len(rows) > 3


def test_cli_reach_and_errors(tmp_path, capsys):
    rc = cli.main(["reach", "islands-B", "--N", "40", "--out-dir", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "islands-plain_reach_mask.csv").exists()
    assert cli.main(["scenario", "nowhere", "--out-dir", str(tmp_path)]) == 1
    with pytest.raises(SystemExit):
        cli.main(["hjb", "solve", "--out-dir", str(tmp_path)])


def test_cli_converge(tmp_path, capsys):
    assert cli.main(["hjb", "converge", "--sizes", "21", "--out-dir", str(tmp_path)]) == 0
    rows = (tmp_path / "convergence.csv").read_text().splitlines()
    assert rows[0].startswith("N,L1") and rows[1].startswith("21,")
