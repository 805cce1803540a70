"""Point-set geometry for a two-color hard-core gas.

Configurations are finite point sets in R^d, optionally carrying spins in
{-1, +1}.  Two points interact when their Euclidean distance is strictly
below twice the hard-core radius ``a``; chains of interacting points form
clusters.  Windows are closed balls or axis-aligned closed boxes.

Conventions fixed here and relied on everywhere else:

* interaction is strict: ``|x - y| < 2a`` bonds, ``|x - y| == 2a`` does not;
* window membership is closed (boundary points belong to the window);
* the 2a-halo of a window (every point within distance <= 2a of it) is
  treated as closed, so a cluster at distance exactly 2a still counts as
  "near" the window;
* cluster labels are the smallest point index in the cluster, which makes
  decompositions deterministic and order-independent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from numpy.typing import NDArray


# ---------------------------------------------------------------------------
# windows


def _unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) == 0:
            raise ValueError("ball center must have at least one coordinate")
        if not (self.radius > 0.0):
            raise ValueError("ball radius must be positive")

    @property
    def dimension(self) -> int:
        return len(self.center)

    def volume(self) -> float:
        return _unit_ball_volume(self.dimension) * self.radius ** self.dimension

    def contains(self, points: NDArray[np.float64]) -> NDArray[np.bool_]:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        c = np.asarray(self.center)
        return np.sum((pts - c) ** 2, axis=1) <= self.radius**2

    def distance(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        """Distance from each point to the ball (0 inside)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        c = np.asarray(self.center)
        d = np.sqrt(np.sum((pts - c) ** 2, axis=1)) - self.radius
        return np.maximum(d, 0.0)

    def bounding_box(self) -> "Box":
        c = np.asarray(self.center)
        return Box(tuple(c - self.radius), tuple(c + self.radius))


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "lower", tuple(float(x) for x in self.lower))
        object.__setattr__(self, "upper", tuple(float(x) for x in self.upper))
        if len(self.lower) != len(self.upper) or len(self.lower) == 0:
            raise ValueError("box corners must have equal positive dimension")
        if any(u <= l for l, u in zip(self.lower, self.upper)):
            raise ValueError("box must have positive extent in every coordinate")

    @property
    def dimension(self) -> int:
        return len(self.lower)

    def volume(self) -> float:
        return float(np.prod(np.asarray(self.upper) - np.asarray(self.lower)))

    def contains(self, points: NDArray[np.float64]) -> NDArray[np.bool_]:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def distance(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        gap = np.maximum(np.maximum(lo - pts, pts - hi), 0.0)
        return np.sqrt(np.sum(gap**2, axis=1))

    def bounding_box(self) -> "Box":
        return self

    def shrink(self, margin: float) -> "Box":
        lo = np.asarray(self.lower) + margin
        hi = np.asarray(self.upper) - margin
        if np.any(hi <= lo):
            raise ValueError("box too small to shrink by this margin")
        return Box(tuple(lo), tuple(hi))

    def expand(self, margin: float) -> "Box":
        lo = np.asarray(self.lower) - margin
        hi = np.asarray(self.upper) + margin
        return Box(tuple(lo), tuple(hi))


Window = Union[Ball, Box]


@dataclass(frozen=True)
class Complement:
    """Everything outside a window.  Used as a connectivity target."""

    window: Window

    @property
    def dimension(self) -> int:
        return self.window.dimension

    def contains(self, points: NDArray[np.float64]) -> NDArray[np.bool_]:
        return ~self.window.contains(points)


Region = Union[Ball, Box, Complement]


def window_distance(a: Window, b: Window) -> float:
    """Set distance between two windows."""
    if isinstance(a, Ball) and isinstance(b, Ball):
        gap = math.dist(a.center, b.center) - a.radius - b.radius
        return max(gap, 0.0)
    if isinstance(a, Ball):
        center_gap = float(b.distance(np.asarray([a.center]))[0])
        return max(center_gap - a.radius, 0.0)
    if isinstance(b, Ball):
        return window_distance(b, a)
    lo1, hi1 = np.asarray(a.lower), np.asarray(a.upper)
    lo2, hi2 = np.asarray(b.lower), np.asarray(b.upper)
    gap = np.maximum(np.maximum(lo2 - hi1, lo1 - hi2), 0.0)
    return float(np.sqrt(np.sum(gap**2)))


def window_contains_window(outer: Window, inner: Window) -> bool:
    """True when every point of `inner` lies in `outer` (closed)."""
    if isinstance(inner, Ball):
        if isinstance(outer, Ball):
            return math.dist(outer.center, inner.center) + inner.radius <= outer.radius + 1e-12
        lo = np.asarray(outer.lower)
        hi = np.asarray(outer.upper)
        c = np.asarray(inner.center)
        return bool(np.all(c - inner.radius >= lo - 1e-12) and np.all(c + inner.radius <= hi + 1e-12))
    corners_lo = np.asarray(inner.lower)
    corners_hi = np.asarray(inner.upper)
    if isinstance(outer, Box):
        return bool(
            np.all(corners_lo >= np.asarray(outer.lower) - 1e-12)
            and np.all(corners_hi <= np.asarray(outer.upper) + 1e-12)
        )
    # box inside ball: check all corners
    d = len(inner.lower)
    idx = np.arange(2**d)
    bits = (idx[:, None] >> np.arange(d)) & 1
    corners = np.where(bits == 1, corners_hi, corners_lo)
    return bool(np.all(outer.contains(corners)))


def dilated_volume_bound(window: Window, margin: float) -> float:
    """Upper bound for the volume of the margin-dilation of a window.

    Exact for balls.  For boxes the bounding-hull product is used, which
    over-estimates the true dilation volume, so packing bounds built on it
    stay valid.
    """
    if isinstance(window, Ball):
        d = window.dimension
        return _unit_ball_volume(d) * (window.radius + margin) ** d
    lo = np.asarray(window.lower)
    hi = np.asarray(window.upper)
    return float(np.prod(hi - lo + 2.0 * margin))


def cluster_count_bound(window: Window, a: float) -> float:
    """Bound on how many distinct clusters can intersect a window.

    Distinct clusters keep their points >= 2a apart, so radius-a balls around
    one in-window point per cluster are disjoint and live in the 2a-dilation.
    """
    d = window.dimension
    return dilated_volume_bound(window, 2.0 * a) / (_unit_ball_volume(d) * a**d)


# ---------------------------------------------------------------------------
# configurations

SPIN_SYMBOL = {1: "+", -1: "-"}
SYMBOL_SPIN = {"+": 1, "-": -1}


@dataclass
class GreyConfiguration:
    """Finite point set without colors."""

    points: NDArray[np.float64]

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError("points must be an (n, d) array")
        self.points = pts

    @classmethod
    def empty(cls, dimension: int) -> "GreyConfiguration":
        return cls(np.zeros((0, dimension), dtype=np.float64))

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.points.shape[1])


@dataclass
class ColoredConfiguration:
    """Finite point set with spins in {-1, +1}."""

    points: NDArray[np.float64]
    spins: NDArray[np.int8]

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        sp = np.asarray(self.spins, dtype=np.int8)
        if pts.ndim != 2:
            raise ValueError("points must be an (n, d) array")
        if sp.shape != (pts.shape[0],):
            raise ValueError("spins must align with points")
        if sp.size and not np.all(np.isin(sp, (-1, 1))):
            raise ValueError("spins must be -1 or +1")
        self.points = pts
        self.spins = sp

    @classmethod
    def empty(cls, dimension: int) -> "ColoredConfiguration":
        return cls(np.zeros((0, dimension), dtype=np.float64), np.zeros(0, dtype=np.int8))

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.points.shape[1])

    def grey(self) -> GreyConfiguration:
        return GreyConfiguration(self.points)


Configuration = Union[GreyConfiguration, ColoredConfiguration]


def merge_points(*configs: Configuration) -> NDArray[np.float64]:
    arrays = [c.points for c in configs if c.n > 0]
    if not arrays:
        d = configs[0].dimension if configs else 1
        return np.zeros((0, d), dtype=np.float64)
    return np.concatenate(arrays, axis=0)


# ---------------------------------------------------------------------------
# cluster decomposition


class _UnionFind:
    """Union-find with path compression; root chosen as the smaller index."""

    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return
        if ri > rj:
            ri, rj = rj, ri
        self.parent[rj] = ri


@dataclass
class ClusterDecomposition:
    """Partition of a point set into interaction clusters.

    `labels[i]` is the smallest point index in the cluster of point i.
    `cluster_ids` lists the distinct labels in increasing order.
    """

    points: NDArray[np.float64]
    labels: NDArray[np.intp]
    cluster_ids: NDArray[np.intp] = field(init=False)

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.intp)
        self.cluster_ids = np.unique(self.labels)

    @property
    def n_clusters(self) -> int:
        return int(self.cluster_ids.size)

    def members(self, cluster_id: int) -> NDArray[np.intp]:
        return np.flatnonzero(self.labels == cluster_id)

    def sizes(self) -> NDArray[np.intp]:
        """Cluster sizes aligned with `cluster_ids`."""
        if self.labels.size == 0:
            return np.zeros(0, dtype=np.intp)
        order = np.searchsorted(self.cluster_ids, self.labels)
        return np.bincount(order, minlength=self.cluster_ids.size).astype(np.intp)

    def spin_sums(self, spins: NDArray[np.int8]) -> NDArray[np.int64]:
        """Per-cluster spin sums aligned with `cluster_ids`."""
        if self.labels.size == 0:
            return np.zeros(0, dtype=np.int64)
        order = np.searchsorted(self.cluster_ids, self.labels)
        return np.bincount(order, weights=spins, minlength=self.cluster_ids.size).astype(np.int64)


def _grid_cells(points: NDArray[np.float64], cell: float) -> dict[tuple[int, ...], list[int]]:
    keys = np.floor(points / cell).astype(np.int64)
    cells: dict[tuple[int, ...], list[int]] = {}
    for i, key in enumerate(map(tuple, keys)):
        cells.setdefault(key, []).append(i)
    return cells


def cluster_decompose(config: Configuration, a: float) -> ClusterDecomposition:
    """Partition a configuration into clusters (strict 2a interaction).

    Grid hashing with cell side 2a keeps candidate pairs local; the bond test
    itself is exact.
    """
    if a <= 0.0:
        raise ValueError("hard-core radius must be positive")
    pts = config.points if isinstance(config, (GreyConfiguration, ColoredConfiguration)) else np.asarray(config, dtype=np.float64)
    n = pts.shape[0]
    if n == 0:
        return ClusterDecomposition(pts, np.zeros(0, dtype=np.intp))
    reach = 2.0 * a
    cells = _grid_cells(pts, reach)
    uf = _UnionFind(n)
    d = pts.shape[1]
    offsets = np.stack(np.meshgrid(*([np.arange(-1, 2)] * d), indexing="ij"), axis=-1).reshape(-1, d)
    reach_sq = reach * reach
    for key, idx in cells.items():
        base = np.asarray(key)
        for off in offsets:
            nb = tuple(base + off)
            if nb < key:
                continue  # each unordered cell pair handled once
            other = cells.get(nb)
            if other is None:
                continue
            if nb == key:
                arr = pts[idx]
                diff = arr[:, None, :] - arr[None, :, :]
                close = np.sum(diff * diff, axis=-1) < reach_sq
                ii, jj = np.nonzero(np.triu(close, k=1))
                for x, y in zip(ii, jj):
                    uf.union(idx[x], idx[y])
            else:
                arr_a = pts[idx]
                arr_b = pts[other]
                diff = arr_a[:, None, :] - arr_b[None, :, :]
                close = np.sum(diff * diff, axis=-1) < reach_sq
                ii, jj = np.nonzero(close)
                for x, y in zip(ii, jj):
                    uf.union(idx[x], other[y])
    labels = np.fromiter((uf.find(i) for i in range(n)), dtype=np.intp, count=n)
    return ClusterDecomposition(pts, labels)


def cluster_decompose_dense(config: Configuration, a: float) -> ClusterDecomposition:
    """Quadratic reference decomposition via boolean transitive closure.

    Oracle for `cluster_decompose`; intended for n <= a few hundred.
    """
    pts = config.points if isinstance(config, (GreyConfiguration, ColoredConfiguration)) else np.asarray(config, dtype=np.float64)
    n = pts.shape[0]
    if n == 0:
        return ClusterDecomposition(pts, np.zeros(0, dtype=np.intp))
    diff = pts[:, None, :] - pts[None, :, :]
    adj = np.sum(diff * diff, axis=-1) < (2.0 * a) ** 2
    np.fill_diagonal(adj, True)
    reach = adj
    while True:
        nxt = reach @ reach
        if np.array_equal(nxt, reach):
            break
        reach = nxt
    labels = np.array([int(np.flatnonzero(row)[0]) for row in reach], dtype=np.intp)
    return ClusterDecomposition(pts, labels)


def classify_clusters(
    decomp: ClusterDecomposition, window: Window, a: float
) -> tuple[NDArray[np.intp], NDArray[np.intp]]:
    """Split cluster ids into (inner, outer) relative to a window.

    A cluster is inner when it is not contained in the complement of the
    2a-halo of the window, i.e. when some point sits within distance <= 2a
    of the window (closed halo).
    """
    inner, outer = [], []
    for cid in decomp.cluster_ids:
        pts = decomp.points[decomp.members(cid)]
        if np.min(window.distance(pts)) <= 2.0 * a:
            inner.append(cid)
        else:
            outer.append(cid)
    return np.asarray(inner, dtype=np.intp), np.asarray(outer, dtype=np.intp)


def touches_horizon(
    decomp: ClusterDecomposition, ambient: Box, a: float, shell: float | None = None
) -> NDArray[np.bool_]:
    """Per-cluster flag (aligned with cluster_ids): reaches the ambient rim.

    A cluster touches the horizon proxy when one of its points lies within
    `shell` (default 2a) of the ambient box boundary.  Finite stand-in for
    connectivity to infinity.
    """
    width = 2.0 * a if shell is None else shell
    try:
        core = ambient.shrink(width)
    except ValueError:
        return np.ones(decomp.n_clusters, dtype=bool)
    inside = core.contains(decomp.points) & ambient.contains(decomp.points)
    out = np.zeros(decomp.n_clusters, dtype=bool)
    for k, cid in enumerate(decomp.cluster_ids):
        m = decomp.members(cid)
        out[k] = bool(np.any(~inside[m]))
    return out


def set_distance(a_operand, b_operand) -> float:
    """Distance between two sets (windows or point arrays/configurations)."""

    def as_points(op):
        if isinstance(op, (GreyConfiguration, ColoredConfiguration)):
            return op.points
        if isinstance(op, np.ndarray):
            return np.atleast_2d(op)
        return None

    pa, pb = as_points(a_operand), as_points(b_operand)
    if pa is not None and pa.shape[0] == 0:
        raise ValueError("empty set has no distance")
    if pb is not None and pb.shape[0] == 0:
        raise ValueError("empty set has no distance")
    if pa is not None and pb is not None:
        diff = pa[:, None, :] - pb[None, :, :]
        return float(np.sqrt(np.min(np.sum(diff * diff, axis=-1))))
    if pa is not None:
        return float(np.min(b_operand.distance(pa)))
    if pb is not None:
        return float(np.min(a_operand.distance(pb)))
    return window_distance(a_operand, b_operand)


def connects(config: Configuration, a: float, source: Region, target: Region) -> bool:
    """True when one cluster of the configuration meets both regions."""
    if config.n == 0:
        return False
    decomp = cluster_decompose(config, a)
    in_src = source.contains(config.points)
    in_tgt = target.contains(config.points)
    for cid in decomp.cluster_ids:
        m = decomp.members(cid)
        if np.any(in_src[m]) and np.any(in_tgt[m]):
            return True
    return False


# ---------------------------------------------------------------------------
# serialization

def config_to_text(config: Configuration) -> str:
    """One line per point: coordinates, then the spin symbol if colored."""
    lines = []
    colored = isinstance(config, ColoredConfiguration)
    for i in range(config.n):
        coords = " ".join(repr(float(x)) for x in config.points[i])
        if colored:
            coords += " " + SPIN_SYMBOL[int(config.spins[i])]
        lines.append(coords)
    return "\n".join(lines) + ("\n" if lines else "")


def config_from_text(text: str, dimension: int | None = None) -> Configuration:
    """Parse the per-point text format; colored iff a trailing +/- column exists."""
    rows: list[list[float]] = []
    spins: list[int] = []
    colored: bool | None = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split()
        has_spin = tokens[-1] in SYMBOL_SPIN
        if colored is None:
            colored = has_spin
        elif colored != has_spin:
            raise ValueError(f"line {ln}: mixed colored and grey records")
        if has_spin:
            spins.append(SYMBOL_SPIN[tokens[-1]])
            tokens = tokens[:-1]
        try:
            rows.append([float(t) for t in tokens])
        except ValueError as exc:
            raise ValueError(f"line {ln}: bad coordinate ({exc})") from None
    if not rows:
        d = dimension if dimension is not None else 1
        return GreyConfiguration.empty(d) if not colored else ColoredConfiguration.empty(d)
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError("inconsistent coordinate count across lines")
    d = widths.pop()
    if dimension is not None and d != dimension:
        raise ValueError(f"expected dimension {dimension}, found {d}")
    pts = np.asarray(rows, dtype=np.float64)
    if colored:
        return ColoredConfiguration(pts, np.asarray(spins, dtype=np.int8))
    return GreyConfiguration(pts)


def config_to_json(config: Configuration) -> str:
    payload = {
        "dimension": config.dimension,
        "points": [[float(x) for x in row] for row in config.points],
        "spins": (
            [SPIN_SYMBOL[int(s)] for s in config.spins]
            if isinstance(config, ColoredConfiguration)
            else None
        ),
    }
    return json.dumps(payload)


def config_from_json(text: str) -> Configuration:
    payload = json.loads(text)
    d = int(payload["dimension"])
    pts = np.asarray(payload["points"], dtype=np.float64).reshape(-1, d)
    spins = payload.get("spins")
    if spins is None:
        return GreyConfiguration(pts)
    return ColoredConfiguration(pts, np.asarray([SYMBOL_SPIN[s] for s in spins], dtype=np.int8))
