"""Stochastic shortest paths: plain, budget-constrained and with budget resets.

Every solve goes through one core routine. It first removes the states that
cannot reach the goal with probability one (their expected cost is infinite,
because every step costs at least ``delta > 0``). Value iteration from zero
then runs on the remaining states only. Starting from zero keeps the iterates
monotone. Dropping the improper states up front avoids the failure mode of a
large finite ceiling, where a state that leaks into an improper region with
small probability gets a large but finite value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph_core import INF, BudgetLevels, DirectedGraph, ExpandedValueTable, ominus
from .graph_core import format_node_list, parse_node_list

PROB_TOL = 1e-12


class SSPFormatError(ValueError):
    pass


class NotConverged(RuntimeError):
    def __init__(self, residual: float, sweeps: int):
        super().__init__(f"value iteration stopped after {sweeps} sweeps, residual {residual:.3e}")
        self.residual = residual
        self.sweeps = sweeps


@dataclass
class Control:
    primary: float
    secondary: int
    succ: np.ndarray  # successor node ids
    prob: np.ndarray


@dataclass
class SSPModel:
    n_nodes: int
    target: int
    delta: float
    safe: frozenset = frozenset()
    controls: list[list[Control]] = field(default_factory=list)

    def __post_init__(self):
        if not self.controls:
            self.controls = [[] for _ in range(self.n_nodes)]
        self.safe = frozenset(self.safe) - {self.target}
        if not self.delta > 0:
            raise SSPFormatError("delta must be positive")

    def add_control(self, i: int, primary: float, secondary: int, succ, prob) -> None:
        if i == self.target:
            raise SSPFormatError("the target is absorbing; it takes no controls")
        succ = np.asarray(succ, dtype=np.int64)
        prob = np.asarray(prob, dtype=float)
        if succ.shape != prob.shape or succ.size == 0:
            raise SSPFormatError(f"control at node {i} needs matching successor/probability lists")
        if np.any(prob < 0) or abs(prob.sum() - 1.0) > PROB_TOL:
            raise SSPFormatError(f"transition probabilities at node {i} must sum to 1")
        if np.any(succ < 0) or np.any(succ >= self.n_nodes):
            raise SSPFormatError(f"control at node {i} references an unknown node")
        if primary < self.delta:
            raise SSPFormatError(f"primary cost {primary} at node {i} below delta {self.delta}")
        keep = prob > 0
        self.controls[i].append(Control(float(primary), int(secondary), succ[keep], prob[keep]))

    @property
    def unsafe(self) -> frozenset:
        return frozenset(i for i in range(self.n_nodes) if i != self.target and i not in self.safe)

    def secondary_costs(self) -> np.ndarray:
        return np.array([c.secondary for cs in self.controls for c in cs], dtype=np.int64)

    @classmethod
    def from_graph(cls, graph: DirectedGraph, delta: float | None = None) -> "SSPModel":
        """Deterministic model with one control per arc."""
        costs = [a.primary for _, a in graph.all_arcs()]
        m = cls(graph.n_nodes, graph.target, delta or min(costs, default=1.0), graph.safe)
        for i, a in graph.all_arcs():
            m.add_control(i, a.primary, a.secondary, [a.head], [1.0])
        return m


# --- core ------------------------------------------------------------------


@dataclass
class _System:
    """Controls of states ``0..n-1``; mass leaving the system is folded into ``const``."""

    n: int
    owner: np.ndarray  # state owning each control, nondecreasing
    const: np.ndarray  # primary cost + expected value of outside successors
    P: sp.csr_matrix  # control x state transitions inside the system
    tag: np.ndarray  # caller's label for each control (for policies)


def _build_system(n, rows) -> _System:
    """``rows`` yields ``(state, const, succ, prob, tag)`` grouped by state."""
    owner, const, tag = [], [], []
    ri, ci, vals = [], [], []
    for k, (s, c, succ, prob, tg) in enumerate(rows):
        owner.append(s)
        const.append(c)
        tag.append(tg)
        ri.extend([k] * len(succ))
        ci.extend(succ)
        vals.extend(prob)
    m = len(owner)
    P = sp.csr_matrix((vals, (ri, ci)), shape=(m, n))
    return _System(n, np.array(owner, dtype=np.int64), np.array(const, dtype=float), P,
                   np.array(tag, dtype=np.int64))


def _proper_states(sysm: _System) -> tuple[np.ndarray, np.ndarray]:
    """States that can leave the system with probability one, and usable controls."""
    n = sysm.n
    alive_ctrl = np.isfinite(sysm.const)
    X = np.ones(n, dtype=bool)
    Pc = sysm.P.tocsr()
    exits_all = np.asarray(Pc.sum(axis=1)).ravel() < 1 - 1e-15  # some mass leaves
    while True:
        # a control is usable if all its in-system successors stay in X
        outside = Pc @ (~X).astype(float) > 0
        usable = alive_ctrl & ~outside & X[sysm.owner]
        # backward reachability of "leave the system" through usable controls
        R = np.zeros(n, dtype=bool)
        R[sysm.owner[usable & exits_all]] = True
        Pu = Pc[usable]
        own_u = sysm.owner[usable]
        while True:
            hit = (Pu @ R.astype(float)) > 0
            newR = R.copy()
            newR[own_u[hit]] = True
            if np.array_equal(newR, R):
                break
            R = newR
        if np.array_equal(R, X):
            return X, usable
        X = R


def _value_iterate(sysm: _System, tol: float, max_sweeps: int):
    X, usable = _proper_states(sysm)
    n = sysm.n
    u = np.full(n, INF)
    if not X.any():
        return u, np.full(n, -1), [0.0]
    idx = np.flatnonzero(usable)
    owner = sysm.owner[idx]
    const = sysm.const[idx]
    P = sysm.P[idx][:, X]
    states = np.flatnonzero(X)
    # reindex owners into X-local ids; controls stay grouped by owner
    local = np.full(n, -1)
    local[states] = np.arange(states.size)
    lo = local[owner]
    starts = np.flatnonzero(np.r_[True, lo[1:] != lo[:-1]])
    heads = lo[starts]
    v = np.zeros(states.size)
    residuals = []
    for sweep in range(max_sweeps):
        q = const + P @ v
        nv = np.minimum.reduceat(q, starts)
        res = float(np.max(np.abs(nv - v[heads]))) if nv.size else 0.0
        v[heads] = nv
        residuals.append(res)
        if res <= tol:
            break
    else:
        raise NotConverged(residuals[-1], max_sweeps)
    q = const + P @ v
    best = np.full(states.size, -1)
    bestq = np.full(states.size, INF)
    for k in range(q.size):  # first minimiser per state
        s = lo[k]
        if q[k] < bestq[s] - 1e-15 * max(1.0, abs(q[k])):
            bestq[s] = q[k]
            best[s] = k
    u[states] = v
    policy = np.full(n, -1)
    policy[states] = sysm.tag[idx[best]]
    return u, policy, residuals


# --- plain SSP -------------------------------------------------------------


@dataclass
class SSPResult:
    values: np.ndarray
    policy: np.ndarray  # control index per node, -1 where none applies
    residuals: list[float]


def value_iteration(model: SSPModel, tol: float = 1e-12, max_sweeps: int = 1_000_000) -> SSPResult:
    """Expected cost-to-target and a greedy policy."""
    t = model.target
    ids = [i for i in range(model.n_nodes) if i != t]
    local = {i: k for k, i in enumerate(ids)}

    def rows():
        for i in ids:
            for a, c in enumerate(model.controls[i]):
                inside = c.succ != t
                yield (local[i], c.primary, [local[j] for j in c.succ[inside]], c.prob[inside], a)

    sysm = _build_system(len(ids), rows())
    v, pol, res = _value_iterate(sysm, tol, max_sweeps)
    values = np.zeros(model.n_nodes)
    policy = np.full(model.n_nodes, -1)
    values[ids] = v
    policy[ids] = pol
    return SSPResult(values, policy, res)


# --- budget-constrained ----------------------------------------------------


def _expected(W, succ, prob, levels_of) -> float:
    tot = 0.0
    for j, p in zip(succ, prob):
        w = W[j, levels_of]
        if w == INF:
            return INF
        tot += p * w
    return tot


def solve_budget_ssp(model: SSPModel, levels: BudgetLevels, tol: float = 1e-12,
                     max_sweeps: int = 1_000_000) -> ExpandedValueTable:
    """Expected cost over (node, budget) states; controls with ``c > b`` are barred.

    Positive secondary costs give one exact upward sweep; zero costs need an
    inner iteration per slice; negative costs couple all slices, so the whole
    expanded model is iterated at once.
    """
    c_all = model.secondary_costs()
    B = levels.maximum
    n, t = model.n_nodes, model.target
    W = np.full((n, B + 1), INF)
    W[t, :] = 0
    if c_all.size and c_all.min() < 0:
        return _solve_expanded_ssp(model, levels, tol, max_sweeps)
    ids = [i for i in range(n) if i != t]
    local = {i: k for k, i in enumerate(ids)}
    for b in levels.levels:

        def rows():
            for i in ids:
                for a, c in enumerate(model.controls[i]):
                    if c.secondary > b:
                        continue
                    if c.secondary > 0:
                        e = _expected(W, c.succ, c.prob, b - c.secondary)
                        yield (local[i], c.primary + e, [], [], a)
                    else:
                        inside = c.succ != t
                        yield (local[i], c.primary, [local[j] for j in c.succ[inside]],
                               c.prob[inside], a)

        sysm = _build_system(len(ids), rows())
        if sysm.P.nnz == 0:
            # explicit: one pass, no iteration
            col = np.full(len(ids), INF)
            np.minimum.at(col, sysm.owner, sysm.const)
            W[ids, b] = col
        else:
            v, _, _ = _value_iterate(sysm, tol, max_sweeps)
            W[ids, b] = v
    return ExpandedValueTable(W, model.safe, t, reset=False)


def _expanded_system(model, levels):
    B = levels.maximum
    t = model.target
    ids = [(i, b) for i in range(model.n_nodes) if i != t for b in levels.levels]
    local = {s: k for k, s in enumerate(ids)}

    def rows():
        for (i, b) in ids:
            for a, c in enumerate(model.controls[i]):
                if c.secondary > b:
                    continue
                nb = ominus(b, c.secondary, B)
                inside = c.succ != t
                yield (local[(i, b)], c.primary, [local[(j, nb)] for j in c.succ[inside]],
                       c.prob[inside], a)

    return _build_system(len(ids), rows()), local


def _solve_expanded_ssp(model, levels, tol, max_sweeps) -> ExpandedValueTable:
    """Iterate over every (node, level) pair at once."""
    B = levels.maximum
    n, t = model.n_nodes, model.target
    sysm, local = _expanded_system(model, levels)
    v, _, _ = _value_iterate(sysm, tol, max_sweeps)
    W = np.full((n, B + 1), INF)
    W[t, :] = 0
    for (i, b), k in local.items():
        W[i, b] = v[k]
    return ExpandedValueTable(W, model.safe, t, reset=False)


def check_reset_labels(model: SSPModel, budget: int) -> None:
    for i in range(model.n_nodes):
        for c in model.controls[i]:
            if i in model.safe and c.secondary != -budget:
                raise SSPFormatError(f"safe node {i} needs secondary cost {-budget}")
            if i not in model.safe and c.secondary < 1:
                raise SSPFormatError(f"unsafe node {i} needs secondary cost >= 1")


@dataclass
class ResetSSPResult:
    table: ExpandedValueTable
    iterations: int


def max_change(prev: np.ndarray, new: np.ndarray) -> float:
    fp, fn = np.isfinite(prev), np.isfinite(new)
    if np.any(fp != fn):
        return INF
    if not fn.any():
        return 0.0
    return float(np.max(np.abs(prev[fn] - new[fn])))


def solve_reset_ssp(model: SSPModel, levels: BudgetLevels, tol: float = 1e-12,
                    max_sweeps: int = 1_000_000, max_iters: int = 100_000) -> ResetSSPResult:
    """Alternate an unsafe-slice sweep (safe values frozen) with value iteration on safe nodes.

    Safe nodes that can reach the target with probability one start at 0, the
    rest stay at inf. Starting every safe node at inf would stall on models
    where a safe control reaches the target only by chance and otherwise
    falls back through unsafe nodes to itself; from below the iteration
    climbs to the same fixed point as the monolithic solve.
    """
    B = levels.maximum
    check_reset_labels(model, B)
    n, t = model.n_nodes, model.target
    safe = sorted(model.safe)
    unsafe = sorted(model.unsafe)
    W = np.full((n, B + 1), INF)
    W[t, :] = 0
    local = {i: k for k, i in enumerate(safe)}
    sysx, xid = _expanded_system(model, levels)
    proper, _ = _proper_states(sysx)
    feasible = {i for i in safe if proper[xid[(i, B)]]}
    for i in feasible:
        W[i, :] = 0.0

    def top(j, b):
        # safe nodes and the target ignore the level
        return B if (j in model.safe or j == t) else b

    for it in range(1, max_iters + 1):
        # Phase I
        for i in unsafe:
            W[i, :] = INF
        for b in range(1, B + 1):
            for i in unsafe:
                best = INF
                for c in model.controls[i]:
                    if c.secondary > b:
                        continue
                    nb = b - c.secondary
                    tot = c.primary
                    for j, p in zip(c.succ, c.prob):
                        w = W[j, top(j, nb)]
                        if w == INF:
                            tot = INF
                            break
                        tot += p * w
                    best = min(best, tot)
                W[i, b] = best

        # Phase II
        def rows():
            for i in safe:
                for a, c in enumerate(model.controls[i]):
                    const = c.primary if i in feasible else INF
                    succ, prob = [], []
                    for j, p in zip(c.succ, c.prob):
                        if j in model.safe:
                            succ.append(local[j])
                            prob.append(p)
                        elif W[j, B] == INF:
                            const = INF
                        else:
                            const += p * W[j, B]
                    yield (local[i], const, succ, prob, a)

        old = W[safe, B].copy()
        if safe:
            v, _, _ = _value_iterate(_build_system(len(safe), rows()), tol, max_sweeps)
            for k, i in enumerate(safe):
                W[i, :] = v[k]
        if max_change(old, W[safe, B]) <= tol:
            return ResetSSPResult(ExpandedValueTable(W, model.safe, t, reset=True), it)
    raise NotConverged(max_change(old, W[safe, B]), max_iters)


# --- text format -----------------------------------------------------------


def read_model(path: str | Path) -> tuple[SSPModel, int]:
    """Header ``M target delta B``; ``i a C c j1 p1 j2 p2 ...`` lines; final safe-node line."""
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if len(lines) < 2:
        raise SSPFormatError("model file needs a header and a safe-node line")
    head = lines[0].split()
    if len(head) != 4:
        raise SSPFormatError(f"header must be 'M target delta B', got {lines[0]!r}")
    m, target, delta, budget = int(head[0]), int(head[1]), float(head[2]), int(head[3])
    model = SSPModel(m + 1, target, delta, parse_node_list(lines[-1]))
    for ln in lines[1:-1]:
        p = ln.split()
        if len(p) < 6 or len(p) % 2:
            raise SSPFormatError(f"control line must be 'i a C c j1 p1 ...', got {ln!r}")
        i, C, c = int(p[0]), float(p[2]), int(p[3])
        succ = [int(x) for x in p[4::2]]
        prob = [float(x) for x in p[5::2]]
        model.add_control(i, C, c, succ, prob)
    return model, budget


def write_model(model: SSPModel, budget: int, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{model.n_nodes - 1} {model.target} {model.delta!r} {budget}\n")
        for i, cs in enumerate(model.controls):
            for a, c in enumerate(cs):
                pairs = " ".join(f"{j} {p!r}" for j, p in zip(c.succ, c.prob.tolist()))
                fh.write(f"{i} {a} {c.primary!r} {c.secondary} {pairs}\n")
        fh.write(format_node_list(model.safe) + "\n")


def simulate_policy(model: SSPModel, policy: np.ndarray, start: int, episodes: int,
                    rng: np.random.Generator, max_steps: int = 100_000) -> np.ndarray:
    """Sampled total costs of ``policy`` from ``start`` (Monte Carlo check)."""
    costs = np.empty(episodes)
    for e in range(episodes):
        i, tot = start, 0.0
        for _ in range(max_steps):
            if i == model.target:
                break
            c = model.controls[i][policy[i]]
            tot += c.primary
            if c.succ.size == 1:
                i = int(c.succ[0])
            else:
                k = np.searchsorted(np.cumsum(c.prob), rng.random(), side="right")
                i = int(c.succ[min(k, c.succ.size - 1)])
        else:
            tot = math.inf
        costs[e] = tot
    return costs
