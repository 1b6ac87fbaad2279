"""Planar point patterns: PPP sampling, thinning, nearest-neighbour queries.

Voronoi cells are never built. Cell membership is decided by nearest-neighbour
queries against a uniform grid index, and uniform sampling inside a cell is
done by rejection against that membership test.

Distances are compared as squared distances computed with the same
expression everywhere, so the grid index and a linear scan agree bit for bit.
Ties are broken toward the lower point index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

LINEAR_SCAN_BELOW = 64
DEFAULT_MAX_ATTEMPTS = 10**6


class InsufficientPointsError(ValueError):
    """Raised when a query needs more points than the pattern holds."""


class SamplingError(RuntimeError):
    """Rejection sampling ran out of attempts."""

    def __init__(self, cell_index, attempts, message=None):
        self.cell_index = cell_index
        self.attempts = attempts
        super().__init__(
            message
            or f"no sample accepted in cell {cell_index} after {attempts} attempts"
        )


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Window:
    """A disk or axis-aligned square observation region.

    ``size`` is the radius of a disk or the half-width of a square.
    """

    shape: str
    center: Point2
    size: float

    def __post_init__(self):
        if self.shape not in ("disk", "square"):
            raise ValueError(f"unknown window shape {self.shape!r}")
        center = Point2(float(self.center[0]), float(self.center[1]))
        if not (math.isfinite(center.x) and math.isfinite(center.y)):
            raise ValueError("window center must be finite")
        object.__setattr__(self, "center", center)
        size = float(self.size)
        if not (math.isfinite(size) and size > 0):
            raise ValueError(f"window size must be positive and finite, got {self.size}")
        object.__setattr__(self, "size", size)

    @classmethod
    def disk(cls, radius: float, center=(0.0, 0.0)) -> "Window":
        return cls("disk", Point2(*center), radius)

    @classmethod
    def square(cls, halfwidth: float, center=(0.0, 0.0)) -> "Window":
        return cls("square", Point2(*center), halfwidth)

    @property
    def area(self) -> float:
        if self.shape == "disk":
            return math.pi * self.size**2
        return (2.0 * self.size) ** 2

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the bounding box."""
        cx, cy = self.center
        return cx - self.size, cy - self.size, cx + self.size, cy + self.size

    def contains(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        dx = xy[:, 0] - self.center.x
        dy = xy[:, 1] - self.center.y
        if self.shape == "disk":
            return dx * dx + dy * dy <= self.size * self.size
        return (np.abs(dx) <= self.size) & (np.abs(dy) <= self.size)

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` i.i.d. uniform points, returned as an (n, 2) array."""
        if self.shape == "disk":
            u = rng.random((n, 2))
            rad = self.size * np.sqrt(u[:, 0])
            theta = 2.0 * np.pi * u[:, 1]
            out = np.empty((n, 2))
            out[:, 0] = self.center.x + rad * np.cos(theta)
            out[:, 1] = self.center.y + rad * np.sin(theta)
            return out
        u = rng.random((n, 2))
        return np.asarray(self.center) + self.size * (2.0 * u - 1.0)


def _squared_distances(points: np.ndarray, qx, qy):
    dx = points[..., 0] - qx
    dy = points[..., 1] - qy
    return dx * dx + dy * dy


class GridIndex:
    """Uniform-grid nearest-neighbour index over a fixed set of points.

    Points are bucketed into square cells and stored contiguously per cell
    (CSR layout). A query scans Chebyshev rings of cells around the query's
    cell and stops once the k-th best squared distance cannot be beaten by
    any unscanned cell. All queries in a batch advance ring by ring together.
    """

    def __init__(self, points: np.ndarray, cell_size: float):
        self.points = points
        n = len(points)
        self.cell_size = float(cell_size)
        lo = points.min(axis=0)
        hi = points.max(axis=0)
        self.origin = lo
        self.shape = (
            np.maximum(np.floor((hi - lo) / self.cell_size).astype(np.int64) + 1, 1)
        )
        cx, cy = self._cell_of(points)
        flat = cx * self.shape[1] + cy
        self.order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=int(self.shape[0] * self.shape[1]))
        self.start = np.zeros(len(counts) + 1, dtype=np.int64)
        np.cumsum(counts, out=self.start[1:])
        self.max_occupancy = int(counts.max()) if n else 0
        self.sorted_points = points[self.order]

    def _cell_of(self, xy):
        c = np.floor((xy - self.origin) / self.cell_size).astype(np.int64)
        return c[:, 0], c[:, 1]

    def query(self, queries: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Return (indices, squared distances), each of shape (m, k)."""
        q = np.asarray(queries, dtype=float).reshape(-1, 2)
        m = len(q)
        best_d = np.full((m, k), np.inf)
        best_i = np.full((m, k), np.iinfo(np.int64).max, dtype=np.int64)
        qcx, qcy = self._cell_of(q)
        # queries outside the grid's bounding box start from the nearest cell
        qcx_c = np.clip(qcx, 0, self.shape[0] - 1)
        qcy_c = np.clip(qcy, 0, self.shape[1] - 1)
        outside = np.maximum(np.abs(qcx - qcx_c), np.abs(qcy - qcy_c))
        active = np.arange(m)
        max_ring = int(max(self.shape)) + 1
        ring = 0
        while active.size and ring <= max_ring:
            for dx, dy in _ring_offsets(ring):
                cx = qcx_c[active] + dx
                cy = qcy_c[active] + dy
                ok = (cx >= 0) & (cx < self.shape[0]) & (cy >= 0) & (cy < self.shape[1])
                if not ok.any():
                    continue
                rows = active[ok]
                flat = cx[ok] * self.shape[1] + cy[ok]
                s = self.start[flat]
                e = self.start[flat + 1]
                for j in range(int((e - s).max(initial=0))):
                    has = s + j < e
                    if not has.any():
                        break
                    r = rows[has]
                    slot = s[has] + j
                    cand_i = self.order[slot]
                    p = self.sorted_points[slot]
                    dxq = p[:, 0] - q[r, 0]
                    dyq = p[:, 1] - q[r, 1]
                    cand_d = dxq * dxq + dyq * dyq
                    _insert(best_d, best_i, r, cand_d, cand_i)
            # unscanned cells are at least (ring - outside) cells away
            reach = (ring - outside[active]) * self.cell_size
            reach = np.where(reach > 0, reach, 0.0)
            done = best_d[active, k - 1] < reach * reach
            active = active[~done]
            ring += 1
        return best_i, best_d


def _ring_offsets(ring: int):
    if ring == 0:
        return [(0, 0)]
    out = []
    for d in range(-ring, ring + 1):
        out.append((d, -ring))
        out.append((d, ring))
    for d in range(-ring + 1, ring):
        out.append((-ring, d))
        out.append((ring, d))
    return out


def _better(d, i, bd, bi):
    return (d < bd) | ((d == bd) & (i < bi))


def _insert(best_d, best_i, rows, cand_d, cand_i):
    """Insert candidates into per-row sorted top-k lists (k is 1 or 2)."""
    k = best_d.shape[1]
    # a point already present for a row is never offered twice: each point
    # lives in exactly one cell and each cell is visited once per query
    if k == 1:
        b = _better(cand_d, cand_i, best_d[rows, 0], best_i[rows, 0])
        best_d[rows[b], 0] = cand_d[b]
        best_i[rows[b], 0] = cand_i[b]
        return
    b0 = _better(cand_d, cand_i, best_d[rows, 0], best_i[rows, 0])
    b1 = ~b0 & _better(cand_d, cand_i, best_d[rows, 1], best_i[rows, 1])
    r0 = rows[b0]
    best_d[r0, 1] = best_d[r0, 0]
    best_i[r0, 1] = best_i[r0, 0]
    best_d[r0, 0] = cand_d[b0]
    best_i[r0, 0] = cand_i[b0]
    r1 = rows[b1]
    best_d[r1, 1] = cand_d[b1]
    best_i[r1, 1] = cand_i[b1]


def _linear_scan(points: np.ndarray, queries: np.ndarray, k: int):
    q = np.asarray(queries, dtype=float).reshape(-1, 2)
    d = _squared_distances(points[None, :, :], q[:, 0:1], q[:, 1:2])
    # argsort with a stable kind keeps the lower index first among ties
    idx = np.argsort(d, axis=1, kind="stable")[:, :k]
    return idx, np.take_along_axis(d, idx, axis=1)


@dataclass(frozen=True, eq=False)
class PointPattern:
    """An immutable finite point set inside a window.

    ``points`` is an (n, 2) float array in generation order.
    """

    points: np.ndarray
    window: Window
    intensity_used: float

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        if len(pts) and not np.all(self.window.contains(pts)):
            raise ValueError("every point must lie inside the window")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @classmethod
    def _trusted(cls, points: np.ndarray, window: Window, intensity: float) -> "PointPattern":
        # skip validation for patterns produced by this module
        obj = object.__new__(cls)
        points.flags.writeable = False
        object.__setattr__(obj, "points", points)
        object.__setattr__(obj, "window", window)
        object.__setattr__(obj, "intensity_used", float(intensity))
        return obj

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, i) -> Point2:
        x, y = self.points[i]
        return Point2(float(x), float(y))

    def subset(self, indices) -> "PointPattern":
        indices = np.asarray(indices, dtype=np.int64)
        return PointPattern._trusted(
            self.points[indices].copy(), self.window, self.intensity_used
        )

    @cached_property
    def index(self) -> GridIndex | None:
        """Grid index, or None when a linear scan is cheaper."""
        if len(self.points) < LINEAR_SCAN_BELOW:
            return None
        density = self.intensity_used if self.intensity_used > 0 else len(self) / self.window.area
        return GridIndex(self.points, 1.0 / math.sqrt(density))

    def nearest(self, queries, k: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Indices and squared distances of the k nearest points per query."""
        if len(self.points) < k:
            raise InsufficientPointsError(
                f"need at least {k} point(s), pattern has {len(self.points)}"
            )
        if self.index is None:
            return _linear_scan(self.points, queries, k)
        return self.index.query(queries, k)


def _check_probability(p):
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"probability must lie in [0, 1], got {p}")


def sample_ppp(lam: float, window: Window, rng: np.random.Generator) -> PointPattern:
    """Sample a homogeneous Poisson point process of intensity ``lam`` on ``window``."""
    if not (lam > 0 and math.isfinite(lam)):
        raise ValueError(f"intensity must be positive, got {lam}")
    n = rng.poisson(lam * window.area)
    return PointPattern._trusted(window.sample_uniform(rng, n), window, lam)


def nearest_two(pattern: PointPattern, origin=(0.0, 0.0)) -> tuple[int, float, int, float]:
    """Closest and second-closest points to ``origin``.

    Returns ``(index1, r1, index2, r2)``.
    """
    idx, d2 = pattern.nearest(np.asarray(origin, dtype=float), k=2)
    return int(idx[0, 0]), math.sqrt(d2[0, 0]), int(idx[0, 1]), math.sqrt(d2[0, 1])


def retention_mask(n: int, p: float, rng: np.random.Generator, keep_index=None) -> np.ndarray:
    """Independent Bernoulli(p) retention flags, with ``keep_index`` forced on.

    One uniform is drawn per point, including the kept one, so the draws for
    the other points do not depend on which point is exempt.
    """
    _check_probability(p)
    mask = rng.random(n) < p
    if keep_index is not None:
        mask[keep_index] = True
    return mask


def conditional_thin(
    pattern: PointPattern, keep_index: int, p: float, rng: np.random.Generator
) -> PointPattern:
    """Thin every point except ``keep_index`` independently with retention ``p``."""
    _check_probability(p)
    n = len(pattern)
    if not (0 <= keep_index < n):
        raise IndexError(f"keep_index {keep_index} out of range for {n} points")
    mask = retention_mask(n, p, rng, keep_index)
    return pattern.subset(np.flatnonzero(mask))


def thin(pattern: PointPattern, p: float, rng: np.random.Generator) -> tuple[PointPattern, np.ndarray]:
    """Independent p-thinning; also returns the input indices of retained points."""
    mask = retention_mask(len(pattern), p, rng)
    kept = np.flatnonzero(mask)
    return pattern.subset(kept), kept


def cell_owner(pattern: PointPattern, query) -> int:
    """Index of the point whose Voronoi cell contains ``query``."""
    if len(pattern) == 0:
        raise InsufficientPointsError("cell_owner on an empty pattern")
    idx, _ = pattern.nearest(np.asarray(query, dtype=float), k=1)
    return int(idx[0, 0])


def cell_owners(pattern: PointPattern, queries) -> np.ndarray:
    """Vectorised :func:`cell_owner` for an (m, 2) array of queries."""
    if len(pattern) == 0:
        raise InsufficientPointsError("cell_owners on an empty pattern")
    idx, _ = pattern.nearest(queries, k=1)
    return idx[:, 0]


def _proposal_batch(pattern: PointPattern, remaining: int) -> int:
    return int(min(remaining, max(256, 4 * len(pattern))))


def sample_uniform_in_cell(
    pattern: PointPattern,
    cell_index: int,
    rng: np.random.Generator,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> Point2:
    """Uniform point in the Voronoi cell of ``cell_index`` clipped to the window.

    Proposals are uniform on the window and accepted when their owner is
    ``cell_index``. They are drawn in batches; the attempt count is the
    position of the first accepted proposal.
    """
    n = len(pattern)
    if n == 0:
        raise InsufficientPointsError("cannot sample a cell of an empty pattern")
    if not (0 <= cell_index < n):
        raise IndexError(f"cell_index {cell_index} out of range for {n} points")
    used = 0
    while used < max_attempts:
        batch = _proposal_batch(pattern, max_attempts - used)
        prop = pattern.window.sample_uniform(rng, batch)
        hits = np.flatnonzero(cell_owners(pattern, prop) == cell_index)
        if hits.size:
            x, y = prop[hits[0]]
            return Point2(float(x), float(y))
        used += batch
    raise SamplingError(cell_index, used)


def sample_uniform_in_cells(
    pattern: PointPattern,
    cell_indices,
    per_cell: int,
    rng: np.random.Generator,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> tuple[np.ndarray, np.ndarray]:
    """Place ``per_cell`` uniform points in each of several Voronoi cells.

    A single proposal stream is shared: every uniform proposal on the window
    is offered to the cell that owns it, and each cell keeps its first
    ``per_cell`` proposals. The points kept by a cell are i.i.d. uniform on
    that cell, exactly as if it ran its own rejection sampler.

    Returns ``(points, owners)`` with points grouped by cell in the order of
    ``cell_indices``. Raises :class:`SamplingError` for the first unfilled
    cell once ``max_attempts * per_cell`` proposals have been used.
    """
    cells = np.asarray(cell_indices, dtype=np.int64)
    n = len(pattern)
    if cells.size == 0:
        return np.empty((0, 2)), np.empty(0, dtype=np.int64)
    if n == 0:
        raise InsufficientPointsError("cannot sample cells of an empty pattern")
    if per_cell < 1:
        raise ValueError("per_cell must be at least 1")
    if cells.min() < 0 or cells.max() >= n:
        raise IndexError("cell index out of range")
    if np.unique(cells).size != cells.size:
        raise ValueError("cell indices must be distinct")
    wanted = np.zeros(n, dtype=bool)
    wanted[cells] = True
    filled = np.zeros(n, dtype=np.int64)
    out = np.empty((n, per_cell, 2))
    budget = max_attempts * per_cell
    used = 0
    pending = cells.size
    while pending:
        if used >= budget:
            stuck = cells[filled[cells] < per_cell]
            raise SamplingError(
                int(stuck[0]), used,
                f"{stuck.size} cell(s) unfilled after {used} proposals, first is cell {int(stuck[0])}",
            )
        batch = _proposal_batch(pattern, budget - used)
        prop = pattern.window.sample_uniform(rng, batch)
        owners = cell_owners(pattern, prop)
        keep = np.flatnonzero(wanted[owners])
        if keep.size:
            own = owners[keep]
            # rank of each proposal among same-owner proposals in this batch
            order = np.argsort(own, kind="stable")
            own_sorted = own[order]
            first = np.searchsorted(own_sorted, own_sorted, side="left")
            rank = np.empty_like(order)
            rank[order] = np.arange(order.size) - first
            slot = filled[own] + rank
            take = slot < per_cell
            out[own[take], slot[take]] = prop[keep[take]]
            np.add.at(filled, own[take], 1)
            done = wanted & (filled >= per_cell)
            pending = int(np.count_nonzero(done[cells] == False))  # noqa: E712
        used += batch
    pts = out[cells].reshape(-1, 2)
    owners = np.repeat(cells, per_cell)
    return pts, owners
