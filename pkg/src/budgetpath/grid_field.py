"""Uniform grids on [-1, 1]^2: scenario geometry, field storage, sampling, I/O.

Arrays are indexed ``[i, j]`` with ``x = -1 + i*h`` and ``y = -1 + j*h``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from skimage import measure

INF = math.inf
SAFE, UNSAFE, OBSTACLE = 0, 1, 2
_EPS = 1e-12


class ScenarioError(ValueError):
    pass


# --- geometry --------------------------------------------------------------


def region_mask(region: dict, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Closed point-in-region test for one primitive.

    ``{"rect": [x0, x1, y0, y1]}``, ``{"circle": [cx, cy, r]}``,
    ``{"halfplane": [a, b, c]}`` (``a x + b y <= c``), ``{"point": [x, y]}``
    (the nearest gridpoint, resolved by the caller) and ``{"boundary": true}``.
    """
    if "rect" in region:
        x0, x1, y0, y1 = region["rect"]
        return (X >= x0 - _EPS) & (X <= x1 + _EPS) & (Y >= y0 - _EPS) & (Y <= y1 + _EPS)
    if "circle" in region:
        cx, cy, r = region["circle"]
        return (X - cx) ** 2 + (Y - cy) ** 2 <= r * r + _EPS
    if "halfplane" in region:
        a, b, c = region["halfplane"]
        return a * X + b * Y <= c + _EPS
    if "boundary" in region:
        m = np.zeros(X.shape, dtype=bool)
        m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
        return m
    if "point" in region:
        m = np.zeros(X.shape, dtype=bool)
        m[nearest_index(X.shape[0], *region["point"])] = True
        return m
    raise ScenarioError(f"unknown region {region!r}")


def union_mask(regions, X, Y) -> np.ndarray:
    m = np.zeros(X.shape, dtype=bool)
    for r in regions:
        m |= region_mask(r, X, Y)
    return m


def _segment_hits_rect(ox, oy, X, Y, rect) -> np.ndarray:
    """Does the open segment from (ox, oy) to each (X, Y) meet the closed box?

    Slab clipping on the parameter interval (eps, 1 - eps).
    """
    x0, x1, y0, y1 = rect
    dx, dy = X - ox, Y - oy
    lo = np.full(X.shape, 1e-9)
    hi = np.full(X.shape, 1 - 1e-9)
    for d, o, a, b in ((dx, ox, x0, x1), (dy, oy, y0, y1)):
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (a - o) / d
            t2 = (b - o) / d
        par = np.abs(d) < 1e-15
        inside = (o >= a) & (o <= b)
        tmin = np.where(par, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
        tmax = np.where(par, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
        lo = np.maximum(lo, tmin)
        hi = np.minimum(hi, tmax)
    return lo <= hi


def _segment_hits_circle(ox, oy, X, Y, circ) -> np.ndarray:
    cx, cy, r = circ
    dx, dy = X - ox, Y - oy
    L2 = dx * dx + dy * dy
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.clip(((cx - ox) * dx + (cy - oy) * dy) / L2, 1e-9, 1 - 1e-9)
    t = np.where(L2 > 0, t, 0.0)
    px, py = ox + t * dx, oy + t * dy
    return (px - cx) ** 2 + (py - cy) ** 2 <= r * r


def visible_from(observer, obstacles, X, Y) -> np.ndarray:
    """True where the open segment observer -> point crosses no obstacle."""
    ox, oy = observer
    blocked = np.zeros(X.shape, dtype=bool)
    for r in obstacles:
        if "rect" in r:
            blocked |= _segment_hits_rect(ox, oy, X, Y, r["rect"])
        elif "circle" in r:
            blocked |= _segment_hits_circle(ox, oy, X, Y, r["circle"])
        else:
            raise ScenarioError(f"occluders must be rectangles or circles, got {r!r}")
    return ~blocked


# --- configuration ---------------------------------------------------------


@dataclass
class ScenarioConfig:
    """Scenario description; serialises to JSON.

    ``speed``/``cost``/``budget_rate`` are ``{"default": v, "regions": [...]}``
    where each entry is a region with a ``value``; a region may also be
    ``{"where": "safe"}`` or ``{"where": "unsafe"}``. ``speed`` additionally
    accepts ``{"formula": "sinusoid"}``.
    """

    name: str
    N: int
    B: float
    safe: list = field(default_factory=list)
    obstacles: list = field(default_factory=list)
    target: list = field(default_factory=list)
    observer: list | None = None
    speed: dict = field(default_factory=lambda: {"default": 1.0})
    cost: dict = field(default_factory=lambda: {"default": 1.0})
    budget_rate: dict = field(default_factory=lambda: {"default": 1.0})
    exit_cost: float = INF  # q on boundary gridpoints that are not targets
    db: float | None = None
    ntheta: int = 64
    tol: float = 1e-8
    max_iters: int = 100
    starts: list = field(default_factory=list)
    note: str = ""

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["exit_cost"] = _num_out(self.exit_cost)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if "exit_cost" in d:
            d["exit_cost"] = _num_in(d["exit_cost"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ScenarioError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replace(self, **kw) -> "ScenarioConfig":
        d = self.to_dict()
        d.update(kw)
        return ScenarioConfig.from_dict(d)


def _num_out(v):
    return "inf" if v == INF else v


def _num_in(v):
    return INF if v in ("inf", "Infinity") else float(v)


# --- grid ------------------------------------------------------------------


@dataclass
class BudgetAxis:
    B: float
    db: float

    @property
    def Nb(self) -> int:
        return int(round(self.B / self.db)) + 1

    @property
    def levels(self) -> np.ndarray:
        return np.arange(self.Nb) * self.db

    @classmethod
    def default(cls, B: float, h: float) -> "BudgetAxis":
        """Step close to ``0.8 h`` that divides ``B`` exactly."""
        n = max(1, math.floor(B / (0.8 * h) + 0.5))
        return cls(B, B / n)

    @classmethod
    def with_step(cls, B: float, step: float) -> "BudgetAxis":
        n = max(1, math.floor(B / step + 0.5))
        return cls(B, B / n)


@dataclass
class Grid2D:
    N: int
    cls: np.ndarray  # SAFE / UNSAFE / OBSTACLE
    boundary: np.ndarray
    target: np.ndarray
    f: np.ndarray
    K: np.ndarray
    Khat: np.ndarray
    q: np.ndarray  # exit cost on exit gridpoints, inf elsewhere

    @property
    def h(self) -> float:
        return 2.0 / (self.N - 1)

    @property
    def coords(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.N)

    def mesh(self):
        x = self.coords
        return np.meshgrid(x, x, indexing="ij")

    @property
    def safe(self) -> np.ndarray:
        return self.cls == SAFE

    @property
    def unsafe(self) -> np.ndarray:
        return self.cls == UNSAFE

    @property
    def obstacle(self) -> np.ndarray:
        return self.cls == OBSTACLE

    @property
    def exits(self) -> np.ndarray:
        """Fixed-data gridpoints: the domain boundary plus the targets."""
        return (self.boundary | self.target) & ~self.obstacle

    @property
    def F1(self) -> float:
        return float(self.f[~self.obstacle].min())

    @property
    def F2(self) -> float:
        return float(self.f[~self.obstacle].max())

    @property
    def K1(self) -> float:
        return float(self.K[~self.obstacle].min())

    @property
    def Khat1(self) -> float:
        u = self.unsafe
        return float(self.Khat[u].min()) if u.any() else 1.0

    def gamma_unsafe(self) -> np.ndarray:
        """Unsafe gridpoints with a 4-neighbour in the safe set."""
        s = self.safe
        nb = np.zeros_like(s)
        nb[1:, :] |= s[:-1, :]
        nb[:-1, :] |= s[1:, :]
        nb[:, 1:] |= s[:, :-1]
        nb[:, :-1] |= s[:, 1:]
        return self.unsafe & nb

    def index_of(self, x: float, y: float) -> tuple[int, int]:
        return nearest_index(self.N, x, y)


def nearest_index(N: int, x: float, y: float) -> tuple[int, int]:
    h = 2.0 / (N - 1)
    i = int(round((x + 1) / h))
    j = int(round((y + 1) / h))
    return min(max(i, 0), N - 1), min(max(j, 0), N - 1)


def _field_from_spec(spec: dict, X, Y, safe) -> np.ndarray:
    out = np.full(X.shape, float(spec.get("default", 1.0)))
    formula = spec.get("formula")
    if formula == "sinusoid":
        out = 1.0 - 0.5 * np.sin(5 * np.pi * X) * np.sin(5 * np.pi * Y)
    elif formula is not None:
        raise ScenarioError(f"unknown formula {formula!r}")
    for r in spec.get("regions", []):
        where = r.get("where")
        if where == "safe":
            m = safe
        elif where == "unsafe":
            m = ~safe
        else:
            m = region_mask(r, X, Y)
        out[m] = float(r["value"])
    return out


def rasterize_scenario(cfg: ScenarioConfig) -> tuple[Grid2D, BudgetAxis]:
    N = int(cfg.N)
    if N < 3:
        raise ScenarioError("need at least 3 gridpoints per side")
    x = np.linspace(-1.0, 1.0, N)
    X, Y = np.meshgrid(x, x, indexing="ij")
    bnd = np.zeros((N, N), dtype=bool)
    bnd[0, :] = bnd[-1, :] = bnd[:, 0] = bnd[:, -1] = True

    if cfg.observer is not None:
        safe = ~visible_from(cfg.observer, cfg.obstacles, X, Y)
        safe |= union_mask(cfg.safe, X, Y)
    else:
        safe = union_mask(cfg.safe, X, Y)
    safe |= bnd
    obst = union_mask(cfg.obstacles, X, Y) & ~bnd
    if cfg.observer is not None and obst[nearest_index(N, *cfg.observer)]:
        raise ScenarioError("observer sits inside an obstacle")

    target = union_mask(cfg.target, X, Y) & ~obst
    if not target.any():
        raise ScenarioError("empty target set")
    if not np.all(safe[target]):
        raise ScenarioError("target must lie in the safe set")

    cls = np.where(safe, SAFE, UNSAFE).astype(np.int8)
    cls[obst] = OBSTACLE
    f = _field_from_spec(cfg.speed, X, Y, safe)
    K = _field_from_spec(cfg.cost, X, Y, safe)
    Khat = _field_from_spec(cfg.budget_rate, X, Y, safe)
    live = ~obst
    if np.any(f[live] <= 0) or np.any(K[live] <= 0) or np.any(Khat[live & ~safe] <= 0):
        raise ScenarioError("speed, cost and budget rate must be positive off obstacles")
    q = np.full((N, N), INF)
    q[bnd] = cfg.exit_cost
    q[target] = 0.0
    grid = Grid2D(N, cls, bnd, target, f, K, Khat, q)
    axis = BudgetAxis.default(cfg.B, grid.h) if cfg.db is None else BudgetAxis.with_step(cfg.B, cfg.db)
    return grid, axis


def compute_visibility_mask(grid: Grid2D, obstacles: list, observer) -> np.ndarray:
    """Safe (shadowed) mask for ``observer``; obstacle gridpoints are excluded."""
    X, Y = grid.mesh()
    obst = union_mask(obstacles, X, Y)
    return ~visible_from(observer, obstacles, X, Y) & ~obst


# --- interpolation ---------------------------------------------------------


def bilinear_sample(field: np.ndarray, x: float, y: float, safe=None, top=None) -> float:
    """Bilinear value at ``(x, y)`` with infinity-aware weights.

    With ``safe`` and ``top`` given, corners in ``safe`` read ``top`` instead of
    ``field`` (mixed sampling at the safe/unsafe interface). Raises
    ``ValueError`` outside the grid hull.
    """
    n = field.shape[0]
    h = 2.0 / (n - 1)
    gx, gy = (x + 1) / h, (y + 1) / h
    if gx < -1e-12 or gy < -1e-12 or gx > n - 1 + 1e-12 or gy > n - 1 + 1e-12:
        raise ValueError(f"point ({x}, {y}) outside the grid")
    i = min(max(int(math.floor(gx)), 0), n - 2)
    j = min(max(int(math.floor(gy)), 0), n - 2)
    g1 = min(max(gx - i, 0.0), 1.0)
    g2 = min(max(gy - j, 0.0), 1.0)
    g1 = 0.0 if g1 < 1e-10 else (1.0 if g1 > 1 - 1e-10 else g1)
    g2 = 0.0 if g2 < 1e-10 else (1.0 if g2 > 1 - 1e-10 else g2)

    def val(a, b):
        if safe is not None and safe[a, b]:
            return top[a, b]
        return field[a, b]

    corners = ((i, j, (1 - g1) * (1 - g2)), (i + 1, j, g1 * (1 - g2)),
               (i + 1, j + 1, g1 * g2), (i, j + 1, (1 - g1) * g2))
    total = 0.0
    for a, b, w in corners:
        if w == 0.0:
            continue
        v = val(a, b)
        if v == INF:
            return INF
        total += w * v
    return total


# --- field I/O -------------------------------------------------------------


class FieldFormatError(ValueError):
    pass


def _tok(v: float) -> str:
    if v == INF:
        return "inf"
    return "%.17g" % v


def write_field(field: np.ndarray, path, B: float = 0.0) -> None:
    """``N h B Nb`` header, then values row-major (slice by slice for 3-D)."""
    arr = np.asarray(field, dtype=float)
    if arr.ndim == 2:
        arr3 = arr[None]
    elif arr.ndim == 3:
        arr3 = arr
    else:
        raise FieldFormatError("fields are N x N or Nb x N x N")
    nb, n, m = arr3.shape
    if n != m:
        raise FieldFormatError("fields must be square")
    h = 2.0 / (n - 1)
    with open(path, "w") as fh:
        fh.write(f"{n} {_tok(h)} {_tok(B)} {nb if arr.ndim == 3 else 0}\n")
        for sl in arr3:
            for row in sl:
                fh.write(" ".join(_tok(v) for v in row) + "\n")


def read_field(path) -> tuple[np.ndarray, float]:
    """Inverse of :func:`write_field`; returns the array and ``B``."""
    text = Path(path).read_text().split("\n", 1)
    head = text[0].split()
    if len(head) != 4:
        raise FieldFormatError(f"bad header {text[0]!r}")
    n, B, nb = int(head[0]), float(head[2]), int(head[3])
    vals = np.array([float(t) for t in (text[1].split() if len(text) > 1 else [])])
    shape = (nb, n, n) if nb > 0 else (n, n)
    if vals.size != int(np.prod(shape)):
        raise FieldFormatError(f"expected {int(np.prod(shape))} values, found {vals.size}")
    return vals.reshape(shape), B


# --- contours --------------------------------------------------------------


def extract_contour(field: np.ndarray, level: float) -> list[np.ndarray]:
    """Marching-squares polylines ``(k, 2)`` in ``(x, y)`` coordinates.

    Cells with an infinite corner are skipped.
    """
    if not math.isfinite(level):
        raise ValueError("contour level must be finite")
    arr = np.asarray(field, dtype=float)
    finite = np.isfinite(arr)
    if not finite.any():
        return []
    filled = np.where(finite, arr, 0.0)
    h = 2.0 / (arr.shape[0] - 1)
    lines = measure.find_contours(filled, level, mask=finite)
    return [np.column_stack([-1 + c[:, 0] * h, -1 + c[:, 1] * h]) for c in lines if len(c) > 1]


def write_contours(polylines: list, path) -> None:
    """CSV rows ``polyline_id,x,y``."""
    with open(path, "w") as fh:
        fh.write("polyline_id,x,y\n")
        for pid, line in enumerate(polylines):
            for x, y in line:
                fh.write(f"{pid},{float(x)!r},{float(y)!r}\n")
