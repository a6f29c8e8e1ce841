"""Reachable set of the reset problem without a budget axis.

Alternates a minimum-feasible-level solve on the unsafe set with a
componentwise minimum over the safe set. Only N x N arrays are allocated.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .grid_field import INF, Grid2D, ScenarioConfig, rasterize_scenario
from .hjb_solvers import mfl_value

log = logging.getLogger(__name__)

_FOUR = ndimage.generate_binary_structure(2, 1)


def safe_components(grid: Grid2D):
    """Label 4-connected pieces of the safe set that the safe solve can use.

    Safe non-exit gridpoints plus finite-cost exits; exits with infinite
    cost never carry a value, so they do not join components.
    """
    usable = (grid.safe & ~grid.exits) | (grid.exits & np.isfinite(grid.q))
    labels, count = ndimage.label(usable, structure=_FOUR)
    return labels, count


def propagate_safe_component_min(grid: Grid2D, gamma_data: np.ndarray, B: float,
                                 labels=None) -> np.ndarray:
    """Componentwise constant g over the safe set.

    A component holding a finite-cost exit gets 0. Otherwise it gets the
    smallest ``gamma_data`` value at most ``B`` among unsafe gridpoints
    4-adjacent to it, or inf if there is none.
    """
    if labels is None:
        labels, count = safe_components(grid)
    else:
        count = int(labels.max())
    best = np.full(count + 1, INF)
    targets = labels[grid.exits & np.isfinite(grid.q)]
    best[targets[targets > 0]] = 0.0

    vals = np.where(grid.unsafe & (gamma_data <= B), gamma_data, INF)
    n = grid.N
    padded = np.pad(labels, 1)
    fin = np.isfinite(vals)
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        # label of the neighbour at (i+di, j+dj) for the data at (i, j)
        lab = padded[1 + di:1 + di + n, 1 + dj:1 + dj + n]
        m = (lab > 0) & fin
        np.minimum.at(best, lab[m], vals[m])
    best[0] = INF
    return best[labels]


@dataclass
class ReachabilityResult:
    V: np.ndarray
    G: np.ndarray
    iterations: int
    counts: list = field(default_factory=list)  # (k, reachable components, reachable safe gridpoints)
    converged: bool = True

    def reachable(self, b: float) -> np.ndarray:
        """Unsafe gridpoints reachable with budget b."""
        return self.V <= b


def solve_reachability(scenario, max_iters: int = 100) -> ReachabilityResult:
    """Reachable set via alternating MFL solves and safe-component minima.

    ``scenario`` is a :class:`ScenarioConfig` or a ``(grid, axis)`` pair; only
    ``axis.B`` is read. Halts once the reachable safe set stops growing; with no unsafe
    gridpoints the first pass is final.
    """
    if isinstance(scenario, ScenarioConfig):
        grid, axis = rasterize_scenario(scenario)
    else:
        grid, axis = scenario
    B = axis.B
    labels, _ = safe_components(grid)
    G = np.where(grid.exits & np.isfinite(grid.q), 0.0, INF)
    V = np.full((grid.N, grid.N), INF)
    counts = []
    no_unsafe = not grid.unsafe.any()
    converged = False
    k = 0
    for k in range(1, max_iters + 1):
        reach = grid.safe & np.isfinite(G)
        V = mfl_value(grid, reach)
        Gn = propagate_safe_component_min(grid, V, B, labels)
        Gn = np.where(grid.safe, Gn, INF)
        # finite-cost exits always stay reachable
        Gn[grid.exits & np.isfinite(grid.q)] = 0.0
        comps = np.unique(labels[np.isfinite(Gn) & (labels > 0)]).size
        counts.append((k, comps, int(np.count_nonzero(np.isfinite(Gn) & grid.safe))))
        log.info("reach iter %d  components=%d  safe points=%d", *counts[-1])
        # V depends on g only through its finite set, so an unchanged set
        # means the next pass would reproduce V and g exactly
        same = np.array_equal(np.isfinite(Gn), np.isfinite(G))
        G = Gn
        if same or no_unsafe:
            converged = True
            break
    return ReachabilityResult(V, G, k, counts, converged)
