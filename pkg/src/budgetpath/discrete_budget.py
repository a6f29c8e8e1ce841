"""Budget-constrained shortest paths on graphs, with and without resets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph_core import (
    INF,
    BudgetLevels,
    DirectedGraph,
    ExpandedValueTable,
    GraphFormatError,
    build_expanded_graph,
    dijkstra,
    label_setting,
    ominus,
    solve_expanded,
)


@dataclass
class AuxiliaryNodeValues:
    """Node-indexed helpers used to restrict the budget-expanded search.

    U: cheapest primary cost; V: smallest budget that still reaches the
    target; Vt: budget spent along primary-optimal arcs; Ut: primary cost
    along budget-optimal arcs.
    """

    U: np.ndarray
    V: np.ndarray
    Vt: np.ndarray
    Ut: np.ndarray


def _restricted_label_setting(graph, keep_arc, cost_of, seeds, through) -> np.ndarray:
    """Dijkstra toward ``seeds`` using only arcs ``i -> j`` with ``keep_arc`` true.

    ``through`` limits which tails may be labelled (seeds are always fixed).
    """
    rev = [[] for _ in graph.nodes]
    for i, a in graph.all_arcs():
        if i in seeds or not through(i):
            continue
        if keep_arc(i, a):
            rev[a.head].append((i, cost_of(a)))
    return np.array(label_setting(graph.n_nodes, rev, seeds), dtype=float)


def compute_auxiliaries(
    graph: DirectedGraph,
    safe_values: dict[int, float] | None = None,
) -> AuxiliaryNodeValues:
    """U, V, Vt and Ut for ``graph``.

    Without ``safe_values`` everything is measured toward the target using the
    stored secondary costs (which must be nonnegative). With ``safe_values``
    (reset mode) the keys are the currently reachable safe nodes; they act as
    terminals with zero budget need and primary value ``safe_values[j]``,
    and only unsafe nodes are labelled.
    """
    t = graph.target
    U = np.array(dijkstra(graph), dtype=float)
    if safe_values is None:
        for i, a in graph.all_arcs():
            if a.secondary < 0:
                raise GraphFormatError("negative secondary cost outside reset mode")
        zero_seeds = {t: 0}
        prim_seeds = {t: 0}

        def through(i):
            return True
    else:
        zero_seeds = {t: 0, **{j: 0 for j in safe_values}}
        prim_seeds = {t: 0, **{j: float(v) for j, v in safe_values.items()}}
        unsafe = graph.unsafe

        def through(i):
            return i in unsafe

    V = _restricted_label_setting(
        graph, lambda i, a: True, lambda a: a.secondary, zero_seeds, through
    )
    Vt = _restricted_label_setting(
        graph,
        lambda i, a: a.primary + U[a.head] == U[i],
        lambda a: a.secondary,
        zero_seeds,
        through,
    )
    Ut = _restricted_label_setting(
        graph,
        lambda i, a: V[i] < INF and a.secondary + V[a.head] == V[i],
        lambda a: a.primary,
        prim_seeds,
        through,
    )
    return AuxiliaryNodeValues(U, V, Vt, Ut)


def _check_nonnegative(graph: DirectedGraph) -> bool:
    """True if every secondary cost is strictly positive; raises on negatives."""
    strict = True
    for i, a in graph.all_arcs():
        if a.secondary < 0:
            raise GraphFormatError(f"negative secondary cost on arc {i}->{a.head}")
        if a.secondary == 0:
            strict = False
    return strict


def solve_no_reset(graph: DirectedGraph, levels: BudgetLevels) -> ExpandedValueTable:
    """Budget-expanded values when spending never restores the budget.

    All costs positive: one sweep upward in ``b``. Zero costs present: the
    zero-cost arcs stay inside a slice, so each slice is a Dijkstra run seeded
    from the already finished lower slices.
    """
    explicit = _check_nonnegative(graph)
    B = levels.maximum
    n, t = graph.n_nodes, graph.target
    W = np.full((n, B + 1), INF)
    W[t, :] = 0
    rev_zero = [[] for _ in range(n)]
    for i, a in graph.all_arcs():
        if a.secondary == 0:
            rev_zero[a.head].append((i, a.primary))
    for b in levels.levels:
        seed = np.full(n, INF)
        seed[t] = 0
        for i in graph.nodes:
            if i == t:
                continue
            best = INF
            for a in graph.arcs(i):
                if 0 < a.secondary <= b:
                    cand = a.primary + W[a.head, b - a.secondary]
                    if cand < best:
                        best = cand
            seed[i] = best
        if explicit:
            W[:, b] = seed
            W[t, b] = 0
        else:
            seeds = {i: seed[i] for i in graph.nodes if seed[i] < INF}
            W[:, b] = label_setting(n, rev_zero, seeds)
    return ExpandedValueTable(W, graph.safe, t, reset=False)


def solve_reset_dijkstra(graph: DirectedGraph, levels: BudgetLevels) -> ExpandedValueTable:
    """Reset values by one label-setting pass over the whole expanded graph."""
    return solve_expanded(build_expanded_graph(graph, levels, reset=True))


@dataclass
class IterativeResult:
    table: ExpandedValueTable
    iterations: int
    history: list[np.ndarray]  # safe-node values after each Phase II


def solve_reset_iterative(graph: DirectedGraph, levels: BudgetLevels) -> IterativeResult:
    """Reset values by alternating an unsafe-slice sweep with a safe-only Dijkstra.

    Phase I freezes the safe values and fills unsafe nodes level by level,
    starting each node at its minimum feasible level. Phase II relabels safe
    nodes from the unsafe top slice. The loop stops once the safe values are
    stable, or once none of the safe nodes that moved can be entered from an
    unsafe node (then the next Phase I would reproduce the current one).
    """
    B = levels.maximum
    graph.check_labels(B, reset=True)
    n, t = graph.n_nodes, graph.target
    safe = sorted(graph.safe)
    unsafe = sorted(graph.unsafe)
    entered_from_unsafe = {a.head for i, a in graph.all_arcs() if i not in graph.safe}

    W = np.full((n, B + 1), INF)
    W[t, :] = 0
    history = []
    rev_safe = [[] for _ in range(n)]
    for i in safe:
        for a in graph.arcs(i):
            if a.head in graph.safe:
                rev_safe[a.head].append((i, a.primary))

    iterations = 0
    while True:
        iterations += 1
        reach = {j: W[j, B] for j in safe if W[j, B] < INF}
        aux = compute_auxiliaries(graph, reach)
        U, V, Ut = aux.U, aux.V, aux.Ut

        # Phase I
        for i in unsafe:
            W[i, :] = INF
        for b in range(1, B + 1):
            for i in unsafe:
                if b < V[i]:
                    continue
                if b == V[i]:
                    W[i, b] = Ut[i]
                elif W[i, b - 1] == U[i]:
                    W[i, b] = U[i]
                else:
                    best = INF
                    for a in graph.arcs(i):
                        if a.secondary <= b:
                            cand = a.primary + W[a.head, ominus(b, a.secondary, B)]
                            if cand < best:
                                best = cand
                    W[i, b] = best

        # Phase II
        seeds = {}
        for i in safe:
            best = INF
            for a in graph.arcs(i):
                if a.head not in graph.safe:
                    cand = a.primary + W[a.head, B]
                    if cand < best:
                        best = cand
            if best < INF:
                seeds[i] = best
        new = np.array(label_setting(n, rev_safe, seeds))
        old = W[safe, B].copy()
        for i in safe:
            W[i, :] = new[i]
        history.append(W[safe, B].copy())
        moved = [j for j, o in zip(safe, old) if o != W[j, B]]
        if not moved or not entered_from_unsafe.intersection(moved):
            break
    return IterativeResult(ExpandedValueTable(W, graph.safe, t, reset=True), iterations, history)


def solve_discrete(graph: DirectedGraph, budget: int, mode: str) -> ExpandedValueTable:
    levels = BudgetLevels(budget)
    if mode == "noreset":
        return solve_no_reset(graph, levels)
    if mode == "reset-dijkstra":
        return solve_reset_dijkstra(graph, levels)
    if mode == "reset-iterative":
        return solve_reset_iterative(graph, levels).table
    raise ValueError(f"unknown mode {mode!r}")
