"""Scenario catalog, exact solution for the slab test, error norms, drivers."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .budget_reset_solver import ResetSolution, extract_path, solve_budget_reset
from .grid_field import INF, ScenarioConfig, ScenarioError, region_mask, visible_from

log = logging.getLogger(__name__)

# --- slab test: S = {x <= 1/3} plus the boundary, target (1, 0), B = 1 -----

SLAB_X = 1.0 / 3.0
TARGET = (1.0, 0.0)
LY = math.sqrt(5.0) / 3.0  # |y| bound of the interface points within unit distance of the target
_GOLD = 0.5 * (math.sqrt(5.0) - 1.0)


def _safe_value_on_line(zy: float) -> float:
    """Cost to the target from (1/3, zy), a point on the slab face."""
    if abs(zy) <= LY:
        return math.hypot(TARGET[0] - SLAB_X, zy)
    return abs(zy) - LY + 1.0


def _golden_min(fun, lo, hi, tol=1e-12):
    c = hi - _GOLD * (hi - lo)
    d = lo + _GOLD * (hi - lo)
    fc, fd = fun(c), fun(d)
    while hi - lo > tol:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLD * (hi - lo)
            fc = fun(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLD * (hi - lo)
            fd = fun(d)
    return min(fc, fd, fun(lo), fun(hi))


def exact_solution(x: float, y: float, b: float) -> float:
    """Exact value for the slab test at (x, y) with budget b (ignored in the slab).

    Safe points go straight to the target when that segment crosses the
    usable part of the face, otherwise via the nearer end of it. Unsafe
    points go straight if the budget allows; otherwise they enter the slab at
    the best reachable face point, found by golden-section search (the
    objective is convex along the face).
    """
    tx, ty = TARGET
    if x <= SLAB_X + 1e-15:
        if x >= tx:
            return 0.0
        yc = y + (SLAB_X - x) * (ty - y) / (tx - x)
        if abs(yc) <= LY:
            return math.hypot(tx - x, ty - y)
        py = LY if y >= 0 else -LY
        return math.hypot(SLAB_X - x, py - y) + 1.0
    d = math.hypot(tx - x, ty - y)
    if d <= b:
        return d
    gap = x - SLAB_X
    if gap > b:
        return INF
    r = math.sqrt(max(b * b - gap * gap, 0.0))

    def cost(zy):
        return math.hypot(gap, zy - y) + _safe_value_on_line(zy)

    return _golden_min(cost, y - r, y + r)


def convergence_config(N: int, db: float | None = None) -> ScenarioConfig:
    """The slab scenario; by default the budget step equals the grid spacing."""
    h = 2.0 / (N - 1)
    return ScenarioConfig(
        name="convergence",
        N=N,
        B=1.0,
        safe=[{"halfplane": [1.0, 0.0, SLAB_X]}],
        target=[{"point": list(TARGET)}],
        db=h if db is None else db,
        starts=[[0.9, 0.9], [-0.5, 0.9], [0.6, -0.3], [0.7, 0.6]],
        note="exact solution known in closed form",
    )


def lattice_oracle(n: int, nb: int):
    """Brute-force cross-check: Dijkstra on a budget-expanded lattice.

    Gridpoints of an ``n x n`` lattice with a 16-neighbour stencil; unsafe
    gridpoints are copied over ``nb`` budget levels of size ``1/(nb-1)``, and a
    move charges ``ceil(length/step)`` levels if its tail is unsafe. Returns
    ``(safe_values, unsafe_values)`` with shapes ``(n, n)`` and ``(nb, n, n)``.
    """
    h = 2.0 / (n - 1)
    step = 1.0 / (nb - 1)
    xs = np.linspace(-1, 1, n)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    safe = X <= SLAB_X + 1e-12
    bnd = np.zeros_like(safe)
    bnd[0, :] = bnd[-1, :] = bnd[:, 0] = bnd[:, -1] = True
    ti, tj = int(round((TARGET[0] + 1) / h)), int(round((TARGET[1] + 1) / h))
    wall = bnd.copy()
    wall[ti, tj] = False
    # node ids: safe gridpoints, unsafe (level, point) pairs, and the target
    sid = -np.ones((n, n), dtype=np.int64)
    sm = safe & ~wall
    sid[sm] = np.arange(sm.sum())
    um = ~safe & ~wall
    um[ti, tj] = False
    nu = int(um.sum())
    uid = -np.ones((n, n), dtype=np.int64)
    uid[um] = np.arange(nu)
    n_safe = int(sm.sum())
    tgt = n_safe + nu * nb
    total = tgt + 1

    offs = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2)]
    offs = offs + [(-a, -b) for a, b in offs]
    rows, cols, wts = [], [], []
    I, J = np.nonzero(~wall)
    for di, dj in offs:
        P, Q = I + di, J + dj
        ok = (P >= 0) & (Q >= 0) & (P < n) & (Q < n)
        a_i, a_j, b_i, b_j = I[ok], J[ok], P[ok], Q[ok]
        ok2 = ~wall[b_i, b_j]
        a_i, a_j, b_i, b_j = a_i[ok2], a_j[ok2], b_i[ok2], b_j[ok2]
        L = h * math.hypot(di, dj)
        need = math.ceil(L / step - 1e-9)
        head_t = (b_i == ti) & (b_j == tj)
        tail_safe = safe[a_i, a_j]
        head_safe = safe[b_i, b_j] & ~head_t
        # tails in the slab: head level is the top one
        m = tail_safe
        src = sid[a_i[m], a_j[m]]
        hs = head_safe[m]
        ht = head_t[m]
        dst = np.where(ht, tgt, np.where(hs, sid[b_i[m], b_j[m]],
                                          n_safe + (nb - 1) * nu + uid[b_i[m], b_j[m]]))
        rows.append(src); cols.append(dst); wts.append(np.full(src.size, L))
        # unsafe tails, every level with enough budget
        m = ~tail_safe & ~((a_i == ti) & (a_j == tj))
        for lv in range(need, nb):
            src = n_safe + lv * nu + uid[a_i[m], a_j[m]]
            hs = head_safe[m]
            ht = head_t[m]
            dst = np.where(ht, tgt, np.where(hs, sid[b_i[m], b_j[m]],
                                              n_safe + (lv - need) * nu + uid[b_i[m], b_j[m]]))
            rows.append(src); cols.append(dst); wts.append(np.full(src.size, L))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    w = np.concatenate(wts)
    G = sp.csr_matrix((w, (c, r)), shape=(total, total))  # reversed: search from the target
    dist = csgraph.dijkstra(G, directed=True, indices=tgt)
    safe_vals = np.full((n, n), INF)
    safe_vals[sm] = dist[sid[sm]]
    safe_vals[ti, tj] = 0.0
    unsafe_vals = np.full((nb, n, n), INF)
    for lv in range(nb):
        unsafe_vals[lv][um] = dist[n_safe + lv * nu + uid[um]]
    return safe_vals, unsafe_vals


# --- error norms -----------------------------------------------------------


@dataclass
class ErrorReport:
    N: int
    L1: float
    Linf_3h: float
    Linf_01: float
    mismatched: int  # extended gridpoints where exactly one of the two values is infinite
    seconds: float
    iterations: int

    def row(self) -> str:
        return (f"{self.N:5d}  L1={self.L1:.4f}  Linf(3h)={self.Linf_3h:.4f}  "
                f"Linf(0.1)={self.Linf_01:.4f}  mismatched={self.mismatched}  "
                f"iters={self.iterations}  {self.seconds:.1f}s")


def exact_fields(N: int, levels: np.ndarray):
    """Exact W2 (safe gridpoints) and W1 (all gridpoints, every level)."""
    xs = np.linspace(-1, 1, N)
    W2 = np.full((N, N), INF)
    W1 = np.full((levels.size, N, N), INF)
    for i, x in enumerate(xs):
        for j, y in enumerate(xs):
            if x <= SLAB_X + 1e-12:
                W2[i, j] = exact_solution(x, y, 1.0)
            else:
                for k, b in enumerate(levels):
                    W1[k, i, j] = exact_solution(x, y, b)
    return W2, W1


def error_norms(sol_W1, sol_W2, grid, levels, eps_list=(None, 0.1)):
    """L1 over the extended domain and banded sup-norms.

    Interior gridpoints only (boundary gridpoints hold fixed exit data),
    budget levels above zero. Unsafe gridpoints contribute on every level,
    and so do safe ones since their value is the same at every budget. The sup-norm
    skips points within ``eps`` of the jump set ``|x - T| = b`` in the unsafe
    set; ``None`` in ``eps_list`` stands for ``3h``.
    """
    N, h = grid.N, grid.h
    db = levels[1] - levels[0]
    eW2, eW1 = exact_fields(N, levels)
    interior = ~grid.boundary
    X, Y = grid.mesh()
    dT = np.hypot(X - TARGET[0], Y - TARGET[1])
    safe = grid.safe & interior
    uns = grid.unsafe & interior

    num = np.where(grid.safe[None], sol_W2[None], sol_W1)
    ex = np.where(grid.safe[None], eW2[None], eW1)
    mask = (safe | uns)[None] & np.ones((levels.size, 1, 1), dtype=bool)
    mask[levels <= 0] = False  # the extended domain starts above b = 0
    fin_n, fin_e = np.isfinite(num), np.isfinite(ex)
    both = mask & fin_n & fin_e
    err = np.zeros_like(num)
    err[both] = np.abs(num[both] - ex[both])
    mismatched = int(np.count_nonzero(mask & (fin_n != fin_e)))
    L1 = float(h * h * db * err.sum())
    sups = []
    for eps in eps_list:
        e = 3 * h if eps is None else eps
        band = uns[None] & (np.abs(dT[None] - levels[:, None, None]) < e)
        keep = both & ~band
        sups.append(float(err[keep].max()) if keep.any() else 0.0)
    return L1, sups, mismatched


def run_convergence_test(sizes, ntheta: int = 64, tol: float = 1e-8, max_iters: int = 100,
                         out_dir=None) -> list[ErrorReport]:
    reports = []
    for N in sizes:
        cfg = convergence_config(N)
        t0 = time.perf_counter()
        sol = solve_budget_reset(cfg, ntheta=ntheta, tol=tol, max_iters=max_iters)
        secs = time.perf_counter() - t0
        L1, (l3h, l01), mism = error_norms(sol.W1, sol.W2, sol.grid, sol.axis.levels)
        rep = ErrorReport(N, L1, l3h, l01, mism, secs, sol.iterations)
        log.info("%s", rep.row())
        reports.append(rep)
        if out_dir is not None:
            from .grid_field import write_field
            d = Path(out_dir)
            d.mkdir(parents=True, exist_ok=True)
            write_field(sol.W2, d / f"convergence_N{N}_w2.txt", sol.axis.B)
            write_field(sol.W1, d / f"convergence_N{N}_w1.txt", sol.axis.B)
    return reports


# --- catalog ---------------------------------------------------------------

BLOCK_CENTRES = [(-0.5, -0.5), (0.0, -0.5), (0.5, -0.5), (0.5, 0.0),
                 (0.5, 0.5), (0.0, 0.5), (-0.5, 0.5), (-0.5, 0.0)]


def _square(cx, cy, side):
    r = side / 2
    return [cx - r, cx + r, cy - r, cy + r]


def eight_block_config(N: int = 300) -> ScenarioConfig:
    blocks = [_square(cx, cy, 0.4) for cx, cy in BLOCK_CENTRES]
    corridors = []
    for a, b in zip(blocks[:-1], blocks[1:]):
        corridors.append({"rect": [min(a[0], b[0]), max(a[1], b[1]),
                                   min(a[2], b[2]), max(a[3], b[3])], "value": 10.0})
    return ScenarioConfig(
        name="eight-block",
        N=N,
        B=1.5,
        safe=[{"rect": r} for r in blocks],
        target=[{"point": [-0.5, -0.5]}],
        speed={"default": 0.1, "regions": [{"where": "safe", "value": 10.0}] + corridors},
        starts=[[-0.5, 0.0], [0.0, 0.8]],
        note="reconstruction: block layout and corridor extents inferred from the figure description",
    )


ISLANDS = [[-0.9, -0.5, -0.9, 0.1], [-0.3, 0.1, -0.2, 0.6], [0.3, 0.6, -0.8, -0.1],
           [0.45, 0.7, 0.12, 0.4]]
ISLAND_TARGET = [-0.7, -0.4]
ISLAND_START = [0.8, 0.5]


def islands_config(N: int = 200, B: float = 0.3, variant: str = "plain") -> ScenarioConfig:
    cfg = ScenarioConfig(
        name=f"islands-{variant}",
        N=N,
        B=B,
        safe=[{"rect": r} for r in ISLANDS],
        target=[{"point": ISLAND_TARGET}],
        starts=[ISLAND_START],
        note="reconstruction: island rectangles chosen to form a reachability chain",
    )
    if variant == "slow-safe":
        cfg.speed = {"default": 1.0, "regions": [{"where": "safe", "value": 0.3}]}
    elif variant == "sinusoid":
        cfg.speed = {"formula": "sinusoid"}
    elif variant != "plain":
        raise ScenarioError(f"unknown islands variant {variant!r}")
    return cfg


VIS_OBSTACLES = [
    {"rect": [0.33, 0.65, -0.2, 0.15]},
    {"rect": [-0.2, 0.15, 0.33, 0.65]},
    {"rect": _square(-0.35, -0.35, 0.3)},
    {"rect": _square(-0.6, 0.6, 0.12)},
]


def visibility_config(N: int = 200, B: float = 0.3) -> ScenarioConfig:
    return ScenarioConfig(
        name="visibility",
        N=N,
        B=B,
        obstacles=VIS_OBSTACLES,
        observer=[0.8, 0.8],
        target=[{"rect": [-0.45, -0.35, 0.05, 0.15]}],
        starts=[[0.1, -0.4]],
        note="reconstruction: occluder positions estimated from the figure",
    )


def catalog(name: str, N: int | None = None, B: float | None = None) -> list[ScenarioConfig]:
    """Built-in scenarios; some names expand into several budget variants."""
    kw = {} if N is None else {"N": N}
    if name == "convergence":
        return [convergence_config(N or 121)]
    if name == "eight-block":
        return [eight_block_config(**kw)]
    if name == "islands-slow-safe":
        return [islands_config(B=B or 0.4, variant="slow-safe", **kw)]
    if name == "islands-sinusoid":
        return [islands_config(B=B or 0.4, variant="sinusoid", **kw)]
    if name == "islands-B":
        bs = [B] if B else [0.3, 0.4, 0.5]
        return [islands_config(B=b, **kw) for b in bs]
    if name == "visibility":
        bs = [B] if B else [0.15, 0.3, 0.6]
        return [visibility_config(B=b, **kw) for b in bs]
    raise ScenarioError(f"unknown scenario {name!r}")


SCENARIO_NAMES = ["convergence", "eight-block", "islands-slow-safe", "islands-sinusoid",
                  "islands-B", "visibility"]


# --- independent path replay -----------------------------------------------


def _exact_masks(cfg: ScenarioConfig, P: np.ndarray):
    X, Y = P[:, 0][:, None], P[:, 1][:, None]
    safe = np.zeros(X.shape, dtype=bool)
    for r in cfg.safe:
        if "point" in r:
            continue
        safe |= region_mask(r, X, Y)
    if cfg.observer is not None:
        safe |= ~visible_from(cfg.observer, cfg.obstacles, X, Y)
    on_bnd = (np.abs(np.abs(X) - 1) < 1e-12) | (np.abs(np.abs(Y) - 1) < 1e-12)
    return (safe | on_bnd).ravel()


def _exact_field(spec, cfg, P, safe):
    X, Y = P[:, 0], P[:, 1]
    out = np.full(X.shape, float(spec.get("default", 1.0)))
    if spec.get("formula") == "sinusoid":
        out = 1.0 - 0.5 * np.sin(5 * np.pi * X) * np.sin(5 * np.pi * Y)
    for r in spec.get("regions", []):
        w = r.get("where")
        m = safe if w == "safe" else (~safe if w == "unsafe" else region_mask(r, X, Y))
        out[m] = float(r["value"])
    return out


def replay_budget(cfg: ScenarioConfig, points: np.ndarray, substeps: int = 8):
    """Budget along a polyline using only the scenario geometry.

    Each segment is cut into ``substeps`` pieces; a piece drains the budget
    by ``length / f * Khat`` when its midpoint is unsafe, and the budget is
    restored whenever a sample point is safe. Returns the lowest budget seen
    and the largest spend between two visits to the safe set.
    """
    xy = np.asarray(points)[:, :2]
    a = xy[:-1]
    d = xy[1:] - a
    s = (np.arange(substeps) + 0.5) / substeps
    mids = (a[:, None, :] + s[None, :, None] * d[:, None, :]).reshape(-1, 2)
    lens = np.repeat(np.hypot(d[:, 0], d[:, 1]) / substeps, substeps)
    safe = _exact_masks(cfg, mids)
    f = _exact_field(cfg.speed, cfg, mids, safe)
    kh = _exact_field(cfg.budget_rate, cfg, mids, safe)
    beta, low, spent, worst = cfg.B, cfg.B, 0.0, 0.0
    for k in range(mids.shape[0]):
        if safe[k]:
            beta, spent = cfg.B, 0.0
            continue
        use = lens[k] / f[k] * kh[k]
        beta -= use
        spent += use
        low = min(low, beta)
        worst = max(worst, spent)
    return low, worst


def path_crosses_obstacle(cfg: ScenarioConfig, points: np.ndarray, substeps: int = 8) -> bool:
    xy = np.asarray(points)[:, :2]
    d = xy[1:] - xy[:-1]
    s = np.linspace(0, 1, substeps + 1)
    pts = (xy[:-1, None, :] + s[None, :, None] * d[:, None, :]).reshape(-1, 2)
    X, Y = pts[:, 0], pts[:, 1]
    hit = np.zeros(X.shape, dtype=bool)
    for r in cfg.obstacles:
        hit |= region_mask(r, X, Y)
    return bool(hit.any())


# --- drivers ---------------------------------------------------------------


@dataclass
class ScenarioBundle:
    config: ScenarioConfig
    solution: ResetSolution
    paths: list
    contour_levels: list
    report: ErrorReport | None = None


def contour_levels_for(cfg: ScenarioConfig, W2: np.ndarray, count: int = 12) -> list[float]:
    fin = W2[np.isfinite(W2) & (W2 > 0)]
    if fin.size == 0:
        return []
    lo, hi = float(fin.min()), float(fin.max())
    if cfg.name == "eight-block":
        return list(np.geomspace(max(lo, 1e-3), hi, count))
    return list(np.linspace(lo, hi, count + 2)[1:-1])


def run_scenario(cfg: ScenarioConfig, ntheta: int | None = None, tol: float | None = None,
                 max_iters: int | None = None, with_report: bool = False) -> ScenarioBundle:
    sol = solve_budget_reset(cfg, ntheta=ntheta, tol=tol, max_iters=max_iters)
    paths = []
    for st in cfg.starts:
        try:
            paths.append(extract_path(sol, st))
        except Exception as exc:  # noqa: BLE001 -- report and continue with the other starts
            log.warning("path from %s failed: %s", st, exc)
            paths.append(None)
    report = None
    if with_report:
        if cfg.name != "convergence":
            raise ScenarioError("error reports need the closed-form scenario")
        L1, (l3h, l01), mism = error_norms(sol.W1, sol.W2, sol.grid, sol.axis.levels)
        secs = sum(r.seconds for r in sol.log)
        report = ErrorReport(cfg.N, L1, l3h, l01, mism, secs, sol.iterations)
    return ScenarioBundle(cfg, sol, paths, contour_levels_for(cfg, sol.W2), report)
