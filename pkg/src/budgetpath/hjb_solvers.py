"""Grid solvers: eikonal, minimum feasible level, and the budget-slice sweep."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .grid_field import INF, BudgetAxis, Grid2D

GOLDEN_STEPS = 12


@dataclass
class EikonalProblem:
    """``f |grad u| = K`` on ``active`` with fixed values where ``data`` is finite.

    ``K_aux`` and ``data_aux`` optionally carry a second running cost that is
    accumulated along the characteristics of ``u``.
    """

    active: np.ndarray
    f: np.ndarray
    K: np.ndarray
    data: np.ndarray
    K_aux: np.ndarray | None = None
    data_aux: np.ndarray | None = None

    @property
    def h(self) -> float:
        return 2.0 / (self.active.shape[0] - 1)


def _steps(problem: EikonalProblem):
    live = problem.f > 0
    s = np.where(live, problem.h * problem.K / np.where(live, problem.f, 1.0), INF)
    active = problem.active & live & ~np.isfinite(problem.data)
    return np.ascontiguousarray(active), np.ascontiguousarray(s, dtype=float)


def solve_eikonal(problem: EikonalProblem, method: str = "fmm", with_aux: bool = False):
    """First-order upwind solution; ``method`` is ``"fmm"`` or ``"sweep"``."""
    active, s = _steps(problem)
    data = np.ascontiguousarray(problem.data, dtype=float)
    if method == "sweep":
        if with_aux:
            raise ValueError("the sweeping solver does not carry an auxiliary cost")
        u, _ = _kernels.fast_sweep(active, s, data, 10_000)
        return u
    if method != "fmm":
        raise ValueError(f"unknown method {method!r}")
    if problem.K_aux is not None:
        Ka = problem.K_aux
        sa = np.where(problem.f > 0, problem.h * Ka / np.where(problem.f > 0, problem.f, 1.0), INF)
    else:
        sa = np.zeros_like(s)
    da = problem.data_aux if problem.data_aux is not None else np.zeros_like(data)
    da = np.where(np.isfinite(data), da, INF)
    u, aux = _kernels.fast_march(active, s, np.ascontiguousarray(sa, dtype=float), data,
                                 np.ascontiguousarray(da, dtype=float))
    return (u, aux) if with_aux else u


def solve_unconstrained(grid: Grid2D) -> np.ndarray:
    """Cost-to-exit with no budget constraint, over every non-obstacle gridpoint."""
    ex = grid.exits
    data = np.where(ex & np.isfinite(grid.q), grid.q, INF)
    return solve_eikonal(EikonalProblem(~grid.obstacle & ~ex, grid.f, grid.K, data))


def solve_mfl(grid: Grid2D, safe_reachable: np.ndarray, W2: np.ndarray):
    """Minimum feasible level V and primary cost Ut along its characteristics.

    V marches through unsafe gridpoints at rate ``Khat`` from zero data on
    ``safe_reachable``. Ut rides the same march with cost ``K`` and data
    ``W2`` there. Returns ``(V, Ut)``, both infinite off the unsafe set.
    """
    if np.any(safe_reachable & ~grid.safe):
        raise ValueError("reachable set must be safe")
    data = np.where(safe_reachable, 0.0, INF)
    prob = EikonalProblem(grid.unsafe, grid.f, grid.Khat, data, grid.K, np.where(safe_reachable, W2, INF))
    V, Ut = solve_eikonal(prob, with_aux=True)
    V = np.where(grid.unsafe, V, INF)
    Ut = np.where(grid.unsafe, Ut, INF)
    return V, Ut


def mfl_value(grid: Grid2D, safe_reachable: np.ndarray) -> np.ndarray:
    """V alone (no auxiliary cost)."""
    data = np.where(safe_reachable, 0.0, INF)
    V = solve_eikonal(EikonalProblem(grid.unsafe, grid.f, grid.Khat, data))
    return np.where(grid.unsafe, V, INF)


def sweep_budget_slices(grid: Grid2D, axis: BudgetAxis, W2: np.ndarray, V: np.ndarray,
                        Ut: np.ndarray, U: np.ndarray, ntheta: int = 64,
                        refine: int = GOLDEN_STEPS, early_exit: bool = True) -> np.ndarray:
    """Unsafe values on every budget level, shape ``(Nb, N, N)``.

    Infinite on safe and obstacle gridpoints, which read ``W2`` instead.
    """
    W1 = np.empty((axis.Nb, grid.N, grid.N))
    _kernels.budget_sweep(W1, np.ascontiguousarray(W2, dtype=float), grid.cls,
                          V, Ut, U, grid.f, grid.K, grid.Khat, grid.h, axis.db,
                          int(ntheta), int(refine), bool(early_exit))
    return W1
