"""Directed graphs with primary/secondary arc costs and budget-expanded copies.

Nodes are integers ``0..n_nodes-1``; one of them is the absorbing target.
Values use IEEE ``inf`` as the "unreachable" sentinel: it is totally
ordered and ``inf + c == inf`` for every finite ``c``, so label-setting
never sees an overflowed key.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

INF = math.inf


class GraphFormatError(ValueError):
    """Raised for malformed graph files or inconsistent safe/unsafe costs."""


def ominus(alpha: int, beta: int, budget: int) -> int:
    """Budget update ``alpha - beta`` capped at ``budget`` (excess is not stored)."""
    return min(alpha - beta, budget)


def fold_ominus(start: int, costs: Iterable[int], budget: int) -> list[int]:
    """Budgets along a path, folding :func:`ominus` left to right."""
    levels = [start]
    for c in costs:
        levels.append(ominus(levels[-1], c, budget))
    return levels


@dataclass(frozen=True)
class Arc:
    head: int
    primary: float
    secondary: int


@dataclass
class DirectedGraph:
    """Sparse digraph with a primary cost ``C >= 0`` and an integer secondary cost per arc."""

    n_nodes: int
    target: int
    safe: frozenset[int] = frozenset()
    _out: list[list[Arc]] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        if not 0 <= self.target < self.n_nodes:
            raise GraphFormatError(f"target {self.target} outside 0..{self.n_nodes - 1}")
        if not self._out:
            self._out = [[] for _ in range(self.n_nodes)]
        self.safe = frozenset(self.safe)
        if self.target in self.safe:
            self.safe = self.safe - {self.target}

    def add_arc(self, i: int, j: int, primary: float, secondary: int = 0) -> None:
        if i == self.target:
            raise GraphFormatError("the target is absorbing and cannot have outgoing arcs")
        if i == j:
            raise GraphFormatError(f"self-loop at node {i}")
        if primary < 0:
            raise GraphFormatError(f"negative primary cost on arc {i}->{j}")
        if any(a.head == j for a in self._out[i]):
            raise GraphFormatError(f"duplicate arc {i}->{j}")
        self._out[i].append(Arc(j, primary, int(secondary)))

    def arcs(self, i: int) -> list[Arc]:
        return self._out[i]

    def all_arcs(self) -> Iterable[tuple[int, Arc]]:
        for i, out in enumerate(self._out):
            for a in out:
                yield i, a

    @property
    def nodes(self) -> range:
        return range(self.n_nodes)

    @property
    def unsafe(self) -> frozenset[int]:
        return frozenset(i for i in self.nodes if i != self.target and i not in self.safe)

    @property
    def sparsity(self) -> int:
        """Largest out-degree (the bound kappa on neighbour-set sizes)."""
        return max((len(out) for out in self._out), default=0)

    def is_safe(self, i: int) -> bool:
        return i in self.safe

    def reversed_adjacency(self) -> list[list[tuple[int, Arc]]]:
        """``rev[j]`` lists ``(i, arc)`` for every arc ``i -> j``."""
        rev: list[list[tuple[int, Arc]]] = [[] for _ in range(self.n_nodes)]
        for i, a in self.all_arcs():
            rev[a.head].append((i, a))
        return rev

    def with_secondary(self, cost_of) -> "DirectedGraph":
        """Copy of the graph whose secondary costs are ``cost_of(i, arc)``."""
        g = DirectedGraph(self.n_nodes, self.target, self.safe)
        for i, a in self.all_arcs():
            g.add_arc(i, a.head, a.primary, cost_of(i, a))
        return g

    def labelled_costs(self, budget: int, reset: bool, unsafe_cost: int = 1) -> "DirectedGraph":
        """Secondary costs from the safe/unsafe labels.

        Unsafe tails pay ``unsafe_cost``; safe tails pay 0, or ``-budget`` in
        reset mode (every move out of a safe node restores the full budget).
        """
        safe_cost = -budget if reset else 0
        return self.with_secondary(lambda i, a: safe_cost if i in self.safe else unsafe_cost)

    def check_labels(self, budget: int, reset: bool) -> None:
        """Validate the safe/unsafe secondary-cost convention."""
        for i, a in self.all_arcs():
            if i in self.safe:
                want = -budget if reset else 0
                if a.secondary != want:
                    raise GraphFormatError(
                        f"safe arc {i}->{a.head} has secondary cost {a.secondary}, expected {want}"
                    )
            elif a.secondary < 1:
                raise GraphFormatError(
                    f"unsafe arc {i}->{a.head} has secondary cost {a.secondary} < 1"
                )


@dataclass(frozen=True)
class BudgetLevels:
    """Integer budget levels ``0..maximum``."""

    maximum: int

    def __post_init__(self) -> None:
        if self.maximum < 0 or int(self.maximum) != self.maximum:
            raise ValueError(f"budget must be a nonnegative integer, got {self.maximum}")

    @property
    def levels(self) -> range:
        return range(self.maximum + 1)

    def __len__(self) -> int:
        return self.maximum + 1


@dataclass
class ExpandedValueTable:
    """Values ``W[i, b]`` on (node, budget) pairs.

    In reset mode a safe node has a single meaningful value (at level ``B``),
    which :meth:`value` returns for every level.
    """

    values: np.ndarray
    safe: frozenset[int]
    target: int
    reset: bool = False

    @property
    def budget(self) -> int:
        return self.values.shape[1] - 1

    def value(self, i: int, b: int) -> float:
        if i == self.target:
            return 0.0
        if self.reset and i in self.safe:
            return float(self.values[i, self.budget])
        return float(self.values[i, b])

    def top(self) -> np.ndarray:
        return self.values[:, self.budget].copy()

    def is_monotone(self) -> bool:
        """True when every row is nonincreasing in the budget."""
        v = self.values
        # inf - inf is nan; compare instead of subtracting
        return bool(np.all(v[:, 1:] <= v[:, :-1]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExpandedValueTable):
            return NotImplemented
        return self.reset == other.reset and np.array_equal(self.values, other.values)

    def write(self, path: str | Path) -> None:
        """Emit ``node level value`` triples, ``inf`` for unreachable states."""
        with open(path, "w") as fh:
            for i in range(self.values.shape[0]):
                for b in range(self.values.shape[1]):
                    fh.write(f"{i} {b} {_fmt(self.value(i, b))}\n")


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf"
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


# --- label setting ---------------------------------------------------------


def label_setting(
    n: int,
    reverse: Sequence[Sequence[tuple[int, float]]],
    seeds: dict[int, float],
) -> list[float]:
    """Dijkstra toward a seed set on a reversed adjacency list.

    ``reverse[j]`` holds ``(i, cost)`` for arcs ``i -> j``; ``seeds`` gives
    fixed terminal values. Equal keys are popped lowest-index first.
    """
    dist = [INF] * n
    heap: list[tuple[float, int]] = []
    for s, v in seeds.items():
        if v < dist[s]:
            dist[s] = v
    for s in range(n):
        if dist[s] < INF:
            heap.append((dist[s], s))
    heapq.heapify(heap)
    done = [False] * n
    while heap:
        d, j = heapq.heappop(heap)
        if done[j] or d > dist[j]:
            continue
        done[j] = True
        for i, c in reverse[j]:
            if done[i]:
                continue
            nd = d + c
            if nd < dist[i]:
                dist[i] = nd
                heapq.heappush(heap, (nd, i))
    return dist


def dijkstra(graph: DirectedGraph, cost: str = "primary") -> list[float]:
    """Optimal cost-to-target ``U`` for every node (``inf`` if unreachable)."""
    rev: list[list[tuple[int, float]]] = [[] for _ in graph.nodes]
    for i, a in graph.all_arcs():
        c = a.primary if cost == "primary" else a.secondary
        if c < 0:
            raise ValueError(f"label setting needs nonnegative {cost} costs (arc {i}->{a.head})")
        rev[a.head].append((i, c))
    return label_setting(graph.n_nodes, rev, {graph.target: 0})


def bellman_ford(graph: DirectedGraph) -> list[float]:
    """Fixed point of the Bellman equation by plain relaxation (test oracle)."""
    u = [INF] * graph.n_nodes
    u[graph.target] = 0
    for _ in range(graph.n_nodes):
        changed = False
        for i, a in graph.all_arcs():
            cand = a.primary + u[a.head]
            if cand < u[i]:
                u[i] = cand
                changed = True
        if not changed:
            break
    return u


# --- expanded graph --------------------------------------------------------


@dataclass
class ExpandedGraph:
    """Budget-expanded graph with a single shared target node.

    No-reset ids are ``i*(B+1) + b``; reset mode packs safe nodes first
    (level ``B`` only), then unsafe nodes at levels ``1..B``.
    """

    base: DirectedGraph
    levels: BudgetLevels
    reset: bool
    states: list[tuple[int, int]]
    index: dict[tuple[int, int], int]
    reverse: list[list[tuple[int, float]]]
    target_id: int

    @property
    def n_states(self) -> int:
        return len(self.states)

    def n_arcs(self) -> int:
        return sum(len(r) for r in self.reverse)

    def id_of(self, node: int, b: int) -> int | None:
        if node == self.base.target:
            return self.target_id
        if self.reset and node in self.base.safe:
            b = self.levels.maximum
        return self.index.get((node, b))


def build_expanded_graph(
    graph: DirectedGraph, levels: BudgetLevels, reset: bool, labelled: bool = True
) -> ExpandedGraph:
    """Expand ``graph`` over budget levels.

    With ``labelled`` the secondary costs must follow the safe/unsafe
    convention; pass ``labelled=False`` for arbitrary integer costs (no-reset
    layout only).
    """
    B = levels.maximum
    if labelled:
        graph.check_labels(B, reset)
    elif reset:
        raise GraphFormatError("reset expansion requires the safe/unsafe cost convention")
    states: list[tuple[int, int]] = []
    if reset:
        for i in sorted(graph.safe):
            states.append((i, B))
        for i in sorted(graph.unsafe):
            states.extend((i, b) for b in range(1, B + 1))
    else:
        for i in graph.nodes:
            if i != graph.target:
                states.extend((i, b) for b in levels.levels)
    index = {s: k for k, s in enumerate(states)}
    target_id = len(states)
    states.append((graph.target, B))

    eg = ExpandedGraph(graph, levels, reset, states, index, [[] for _ in states], target_id)
    for k, (i, b) in enumerate(states[:-1]):
        for a in graph.arcs(i):
            if a.secondary > b:
                continue
            dest = eg.id_of(a.head, ominus(b, a.secondary, B))
            if dest is not None:
                eg.reverse[dest].append((k, a.primary))
    return eg


def solve_expanded(eg: ExpandedGraph) -> ExpandedValueTable:
    """Dijkstra on the whole expanded graph, folded back into a table."""
    dist = label_setting(eg.n_states, eg.reverse, {eg.target_id: 0})
    g = eg.base
    B = eg.levels.maximum
    values = np.full((g.n_nodes, B + 1), INF)
    values[g.target, :] = 0
    for k, (i, b) in enumerate(eg.states[:-1]):
        if eg.reset and i in g.safe:
            values[i, :] = dist[k]
        else:
            values[i, b] = dist[k]
    return ExpandedValueTable(values, g.safe, g.target, eg.reset)


# --- text format -----------------------------------------------------------


def read_graph(path: str | Path) -> tuple[DirectedGraph, int]:
    """Parse ``M target B`` / ``i j C c`` lines / final safe-node line.

    ``M`` counts the non-target nodes, so ids run over ``0..M``. The last
    line is always the safe list; ``-`` marks an empty one. Returns the graph
    and the budget from the header.
    """
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if len(lines) < 2:
        raise GraphFormatError("graph file needs a header and a safe-node line")
    head = lines[0].split()
    if len(head) != 3:
        raise GraphFormatError(f"header must be 'M target B', got {lines[0]!r}")
    m, target, budget = (int(t) for t in head)
    body = lines[1:-1]
    safe = parse_node_list(lines[-1])
    g = DirectedGraph(m + 1, target, frozenset(safe))
    for ln in body:
        parts = ln.split()
        if len(parts) != 4:
            raise GraphFormatError(f"arc line must be 'i j C c', got {ln!r}")
        i, j = int(parts[0]), int(parts[1])
        if not (0 <= i <= m and 0 <= j <= m):
            raise GraphFormatError(f"arc {i}->{j} references a node outside 0..{m}")
        g.add_arc(i, j, float(parts[2]), int(parts[3]))
    return g, budget


def parse_node_list(line: str) -> set[int]:
    toks = line.split()
    if toks == ["-"]:
        return set()
    try:
        return {int(t) for t in toks}
    except ValueError:
        raise GraphFormatError(f"bad node list {line!r}") from None


def format_node_list(nodes) -> str:
    return " ".join(str(s) for s in sorted(nodes)) or "-"


def write_graph(graph: DirectedGraph, budget: int, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{graph.n_nodes - 1} {graph.target} {budget}\n")
        for i, a in graph.all_arcs():
            fh.write(f"{i} {a.head} {_fmt(a.primary)} {a.secondary}\n")
        fh.write(format_node_list(graph.safe) + "\n")


def eight_node_example(budget: int = 3, reset: bool = False) -> DirectedGraph:
    """The eight-node chain with safe nodes 1, 2, 7 (0-based: 0, 1, 6), target 8.

    Primary costs are 1 along the chain and back-links, 4 on the two long
    unsafe hops and 7 on the long hop out of node 1.
    """
    g = DirectedGraph(9, 8, frozenset({0, 1, 6}))
    for i, j, c in [
        (0, 1, 1), (0, 5, 7),
        (1, 2, 1), (1, 0, 1),
        (2, 3, 1), (2, 1, 1), (2, 5, 4),
        (3, 4, 1), (3, 2, 1),
        (4, 5, 1), (4, 7, 4),
        (5, 6, 1),
        (6, 7, 1),
        (7, 8, 1),
    ]:
        g.add_arc(i, j, c, 0)
    return g.labelled_costs(budget, reset)
