"""Alternating solve of the budget-reset problem on a grid, and path extraction."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .grid_field import INF, SAFE, BudgetAxis, Grid2D, ScenarioConfig, rasterize_scenario
from .hjb_solvers import (
    GOLDEN_STEPS,
    EikonalProblem,
    solve_eikonal,
    solve_mfl,
    solve_unconstrained,
    sweep_budget_slices,
)

log = logging.getLogger(__name__)

SLICE_SLACK = 2


class SolverFailure(RuntimeError):
    def __init__(self, msg, log_records=None):
        super().__init__(msg)
        self.log = log_records or []


def max_change(prev: np.ndarray, new: np.ndarray) -> float:
    """Sup-norm change; a point that switches between finite and infinite counts as inf."""
    if prev.shape != new.shape:
        raise ValueError(f"shape mismatch {prev.shape} vs {new.shape}")
    fp = np.isfinite(prev)
    fn = np.isfinite(new)
    if np.any(fp != fn):
        return INF
    if not fn.any():
        return 0.0
    return float(np.max(np.abs(prev[fn] - new[fn])))


@dataclass
class IterationRecord:
    k: int
    dW1: float
    dW2: float
    safe_reachable: int
    unsafe_reachable: int
    seconds: float


@dataclass
class ResetSolution:
    grid: Grid2D
    axis: BudgetAxis
    W1: np.ndarray
    W2: np.ndarray
    U: np.ndarray
    V: np.ndarray
    Ut: np.ndarray
    log: list[IterationRecord]
    converged: bool
    ntheta: int = 64
    refine: int = GOLDEN_STEPS
    history: list = field(default_factory=list)  # optional per-iteration snapshots

    @property
    def iterations(self) -> int:
        return len(self.log)

    def value(self, i: int, j: int, level: int | None = None) -> float:
        """W at a gridpoint; ``level`` indexes the budget axis for unsafe points."""
        if self.grid.cls[i, j] == SAFE:
            return float(self.W2[i, j])
        lv = self.axis.Nb - 1 if level is None else level
        return float(self.W1[lv, i, j])


def phase_two(grid: Grid2D, W1_top: np.ndarray) -> np.ndarray:
    """Safe-set eikonal solve fed by exits and by unsafe gridpoints next to the safe set."""
    ex = grid.exits
    data = np.where(ex & np.isfinite(grid.q), grid.q, INF)
    gam = grid.gamma_unsafe()
    data = np.where(gam, np.minimum(data, W1_top), data)
    active = grid.safe & ~ex
    u = solve_eikonal(EikonalProblem(active, grid.f, grid.K, data))
    out = np.where(grid.safe, u, INF)
    out[ex] = grid.q[ex]
    return out


def solve_budget_reset(
    scenario,
    ntheta: int | None = None,
    tol: float | None = None,
    max_iters: int | None = None,
    refine: int = GOLDEN_STEPS,
    early_exit: bool = True,
    keep_history: bool = False,
    raise_on_cap: bool = False,
    monitor=None,
) -> ResetSolution:
    """Outer loop: MFL solve, budget sweep on the unsafe set, eikonal on the safe set.

    ``scenario`` is a :class:`ScenarioConfig` or a ``(grid, axis)`` pair.
    Stops once both sup-norm changes are at most ``tol``. With no unsafe
    gridpoints the first pass is already final. ``monitor``, if given, is
    called as ``monitor(k, (W1, W2, V), (W1n, W2n, Vn))`` after every pass
    with the previous and new iterates.
    """
    if isinstance(scenario, ScenarioConfig):
        grid, axis = rasterize_scenario(scenario)
        ntheta = ntheta or scenario.ntheta
        tol = scenario.tol if tol is None else tol
        max_iters = max_iters or scenario.max_iters
    else:
        grid, axis = scenario
    ntheta = ntheta or 64
    tol = 1e-8 if tol is None else tol
    max_iters = max_iters or 100

    N, Nb = grid.N, axis.Nb
    U = solve_unconstrained(grid)
    W1 = np.full((Nb, N, N), INF)
    W2 = np.where(grid.exits, grid.q, INF)
    records: list[IterationRecord] = []
    history = []
    V = Ut = np.full((N, N), INF)
    converged = False
    no_unsafe = not grid.unsafe.any()
    for k in range(1, max_iters + 1):
        t0 = time.perf_counter()
        reach = grid.safe & np.isfinite(W2)
        V_prev = V
        V, Ut = solve_mfl(grid, reach, W2)
        W1n = sweep_budget_slices(grid, axis, W2, V, Ut, U, ntheta, refine, early_exit)
        W2n = phase_two(grid, W1n[-1])
        rec = IterationRecord(
            k,
            max_change(W1, W1n),
            max_change(W2, W2n),
            int(np.count_nonzero(grid.safe & np.isfinite(W2n))),
            int(np.count_nonzero(grid.unsafe & np.isfinite(W1n[-1]))),
            time.perf_counter() - t0,
        )
        records.append(rec)
        log.info("iter %d  dW1=%.3e  dW2=%.3e  safe=%d  unsafe=%d  (%.1fs)",
                 k, rec.dW1, rec.dW2, rec.safe_reachable, rec.unsafe_reachable, rec.seconds)
        if monitor is not None:
            monitor(k, (W1, W2, V_prev), (W1n, W2n, V))
        if keep_history:
            history.append((W1n[-1].copy(), W2n.copy(), V.copy(), W1n.copy() if keep_history == "full" else None))
        W1, W2 = W1n, W2n
        if (rec.dW1 <= tol and rec.dW2 <= tol) or no_unsafe:
            converged = True
            break
    if not converged and raise_on_cap:
        raise SolverFailure(f"no convergence within {max_iters} outer iterations", records)
    return ResetSolution(grid, axis, W1, W2, U, V, Ut, records, converged, ntheta, refine, history)


# --- optimal paths ---------------------------------------------------------


@dataclass
class PathTrace:
    points: np.ndarray  # rows (x, y, b, t)
    reached: bool
    cost: float
    dt: float

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, :2]

    @property
    def length(self) -> float:
        d = np.diff(self.xy, axis=0)
        return float(np.hypot(d[:, 0], d[:, 1]).sum())


class InfeasibleStart(ValueError):
    pass


class ExtractionFailure(RuntimeError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


def extract_path(sol: ResetSolution, start, b0: float | None = None,
                 ntheta: int | None = None, refine: int | None = None,
                 raise_on_cap: bool = True) -> PathTrace:
    """Forward-Euler trajectory that greedily minimises the one-step expression.

    Step ``dt = h/(2 F2)``. In the unsafe set the budget drops by
    ``Khat*dt``; reaching the safe set restores it. Stops once a finite-cost
    exit is within one cell diagonal; the last segment runs straight to it.
    """
    grid, axis = sol.grid, sol.axis
    ntheta = ntheta or sol.ntheta
    refine = sol.refine if refine is None else refine
    h, N, B = grid.h, grid.N, axis.B
    W1, W2 = sol.W1, np.ascontiguousarray(sol.W2)
    x, y = float(start[0]), float(start[1])
    i, j = grid.index_of(x, y)
    safe = grid.cls[i, j] == SAFE
    beta = B if (safe or b0 is None) else float(b0)
    if not 0 <= beta <= B + 1e-12:
        raise InfeasibleStart(f"starting budget {beta} outside [0, {B}]")
    if safe:
        w0 = _kernels.mixed_sample(W1, Nb_top(axis), W2, grid.cls, x, y, N, h)
    else:
        w0 = _kernels.mixed_sample(W1, _slice(beta, axis), W2, grid.cls, x, y, N, h)
    if not (w0 < INF):
        raise InfeasibleStart(f"value at ({x}, {y}, {beta}) is not finite")

    dt = h / (2.0 * grid.F2)
    exit_ids = np.argwhere(grid.exits & np.isfinite(grid.q))
    tree = cKDTree(-1.0 + exit_ids * h)
    wmax = float(np.max(sol.W2[np.isfinite(sol.W2)])) if np.isfinite(sol.W2).any() else 0.0
    t_cap = 1.5 * (B / grid.Khat1 + wmax / grid.K1)

    pts = [(x, y, beta, 0.0)]
    t = 0.0
    cost = 0.0
    reached = False
    while t < t_cap:
        i, j = grid.index_of(x, y)
        fx, Kx = grid.f[i, j], grid.K[i, j]
        hit = _near_exit(x, y, tree, exit_ids, h)
        if hit is not None:
            ex, ey = -1.0 + hit[0] * h, -1.0 + hit[1] * h
            tt = math.hypot(ex - x, ey - y) / fx
            t += tt
            cost += tt * Kx + grid.q[hit]
            pts.append((ex, ey, B, t))
            reached = True
            break
        if grid.cls[i, j] == SAFE:
            beta = B
            nb = B
        else:
            nb = beta - dt * grid.Khat[i, j]
        if nb < -1e-12:
            break
        # nearest level, then up to two above it: the numerical feasible
        # boundary sits O(h) above the true one, so the lower level is often
        # spuriously infinite right next to it
        js = min(int(round(max(nb, 0.0) / axis.db)), axis.Nb - 1)
        for extra in range(SLICE_SLACK + 1):
            jj = min(js + extra, axis.Nb - 1)
            val, th = _kernels.semi_lagrangian_argmin(W1, jj, W2, grid.cls, x, y, dt * fx,
                                                      dt * Kx, ntheta, refine, N, h)
            if val < INF:
                break
        if not (val < INF):
            break
        x += dt * fx * math.cos(th)
        y += dt * fx * math.sin(th)
        t += dt
        cost += dt * Kx
        i, j = grid.index_of(x, y)
        if grid.cls[i, j] == SAFE and beta < B:
            # only the gridpoint is known to be safe: walk onto it before
            # refilling, so a path grazing the safe set does not refill early
            pts.append((x, y, max(nb, 0.0), t))
            gx, gy = -1.0 + i * h, -1.0 + j * h
            tt = math.hypot(gx - x, gy - y) / fx
            x, y = gx, gy
            t += tt
            cost += tt * Kx
            beta = B
        else:
            beta = B if grid.cls[i, j] == SAFE else max(nb, 0.0)
        pts.append((x, y, beta, t))
    trace = PathTrace(np.array(pts), reached, cost, dt)
    if not reached and raise_on_cap:
        raise ExtractionFailure(f"path from {start} did not reach an exit (t={t:.3f})", trace)
    return trace


def _near_exit(x, y, tree, exit_ids, h):
    """Closest finite-cost exit if it lies within one cell diagonal of (x, y)."""
    d, e = tree.query((x, y))
    if d <= math.sqrt(2.0) * h * (1 + 1e-9):
        return tuple(int(v) for v in exit_ids[e])
    return None


def Nb_top(axis: BudgetAxis) -> int:
    return axis.Nb - 1


def _slice(b: float, axis: BudgetAxis) -> int:
    return min(int(math.floor(b / axis.db + 1e-9)), axis.Nb - 1)
