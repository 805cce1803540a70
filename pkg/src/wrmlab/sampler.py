"""Samplers: Poisson point process, exact and MCMC gas samplers, spin flips.

Every accepted gas sample is checked against the hard constraint (no
opposite colors strictly within 2a), including against its boundary
condition.  The check is a hard assertion, not a warning.

Randomness flows through `RngStream`, a (seed, stream-path) pair mapping to
a PCG64 generator via numpy SeedSequence spawn keys.  Equal streams produce
bit-identical outputs; sibling streams are independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np
from numpy.typing import NDArray

from .geometry import (
    Ball,
    Box,
    ColoredConfiguration,
    GreyConfiguration,
    Window,
    cluster_decompose,
)
from .model import ModelParams

CONSTRAINT_VIOLATION = "hard-core constraint violated in accepted sample"


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream addressed by (seed, path of child ids)."""

    seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "path", tuple(int(p) for p in self.path))

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(seq))


class BoundaryKind(Enum):
    ALL_PLUS = "all_plus"
    ALL_MINUS = "all_minus"
    EMPTY = "empty"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary condition outside the sampling window.

    ALL_PLUS / ALL_MINUS are materialized as a dense colored grid (spacing
    a/2) filling the shell of width `shell` (default 2a) around the window;
    EXPLICIT carries a fixed colored configuration.
    """

    kind: BoundaryKind
    config: ColoredConfiguration | None = None

    def __post_init__(self) -> None:
        if self.kind is BoundaryKind.EXPLICIT and self.config is None:
            raise ValueError("explicit boundary condition needs a configuration")

    @classmethod
    def all_plus(cls) -> "BoundaryCondition":
        return cls(BoundaryKind.ALL_PLUS)

    @classmethod
    def all_minus(cls) -> "BoundaryCondition":
        return cls(BoundaryKind.ALL_MINUS)

    @classmethod
    def empty(cls) -> "BoundaryCondition":
        return cls(BoundaryKind.EMPTY)

    @classmethod
    def explicit(cls, config: ColoredConfiguration) -> "BoundaryCondition":
        return cls(BoundaryKind.EXPLICIT, config)


def _shell_grid(window: Window, spacing: float, shell: float) -> NDArray[np.float64]:
    """Lattice points x with 0 < dist(x, window) <= shell, pitch `spacing`."""
    bbox = window.bounding_box().expand(shell + spacing)
    axes = [
        np.arange(lo, hi + spacing / 2.0, spacing)
        for lo, hi in zip(bbox.lower, bbox.upper)
    ]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    dist = window.distance(mesh)
    keep = (dist > 0.0) & (dist <= shell)
    return mesh[keep]


def materialize_boundary(
    window: Window,
    bc: BoundaryCondition,
    params: ModelParams,
    spacing: float | None = None,
    shell: float | None = None,
) -> ColoredConfiguration:
    """Concrete colored configuration for a boundary condition."""
    if bc.kind is BoundaryKind.EMPTY:
        return ColoredConfiguration.empty(window.dimension)
    if bc.kind is BoundaryKind.EXPLICIT:
        assert bc.config is not None
        if bc.config.n and np.any(window.distance(bc.config.points) == 0.0):
            raise ValueError("explicit boundary condition intersects the window")
        return bc.config
    pitch = params.a / 2.0 if spacing is None else spacing
    width = 2.0 * params.a if shell is None else shell
    pts = _shell_grid(window, pitch, width)
    spin = 1 if bc.kind is BoundaryKind.ALL_PLUS else -1
    return ColoredConfiguration(pts, np.full(pts.shape[0], spin, dtype=np.int8))


# ---------------------------------------------------------------------------
# Poisson sampling


def sample_point_uniform(window: Window, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
    if isinstance(window, Box):
        lo = np.asarray(window.lower)
        hi = np.asarray(window.upper)
        return rng.uniform(lo, hi, size=(size, len(window.lower)))
    d = window.dimension
    direction = rng.normal(size=(size, d))
    norms = np.linalg.norm(direction, axis=1, keepdims=True)
    # a standard normal vector is never exactly zero in double precision
    direction /= norms
    radii = window.radius * rng.uniform(size=(size, 1)) ** (1.0 / d)
    return np.asarray(window.center) + direction * radii


def sample_ppp(window: Window, intensity: float, rng: np.random.Generator) -> GreyConfiguration:
    """Homogeneous Poisson point process restricted to a window."""
    if intensity < 0.0:
        raise ValueError("intensity must be nonnegative")
    n = rng.poisson(intensity * window.volume())
    return GreyConfiguration(sample_point_uniform(window, rng, int(n)))


# ---------------------------------------------------------------------------
# hard-core constraint


def constraint_ok(
    config: ColoredConfiguration,
    a: float,
    fixed: ColoredConfiguration | None = None,
) -> bool:
    """True when no opposite-color pair sits strictly within 2a.

    Checks config against itself and against `fixed` (boundary).  `fixed` is
    assumed self-consistent (its own pairs are not re-checked).
    """
    reach_sq = (2.0 * a) ** 2
    pts, sp = config.points, config.spins
    if config.n >= 2:
        from scipy.spatial import cKDTree

        tree = cKDTree(pts)
        pairs = tree.query_pairs(2.0 * a, output_type="ndarray")
        if pairs.size:
            i, j = pairs[:, 0], pairs[:, 1]
            d2 = np.sum((pts[i] - pts[j]) ** 2, axis=1)
            bad = (d2 < reach_sq) & (sp[i] != sp[j])
            if np.any(bad):
                return False
    if fixed is not None and fixed.n and config.n:
        from scipy.spatial import cKDTree

        tree_f = cKDTree(fixed.points)
        for i in range(config.n):
            idx = tree_f.query_ball_point(pts[i], 2.0 * a)
            if not idx:
                continue
            d2 = np.sum((fixed.points[idx] - pts[i]) ** 2, axis=1)
            opp = fixed.spins[idx] != sp[i]
            if np.any(opp & (d2 < reach_sq)):
                return False
    return True


def color_weight_grey(
    grey: GreyConfiguration,
    params: ModelParams,
    boundary: ColoredConfiguration | None = None,
) -> float:
    """Log-probability that i.i.d. colors (P(+) = u+) respect the constraint.

    Factorizes over clusters of the grey points merged with the boundary:
    each free cluster contributes u+^k + u-^k over its k free points, a
    cluster forced by boundary colors keeps only the compatible term, and a
    cluster whose boundary part carries both colors contributes -inf.
    """
    lu_plus = math.log(params.u_plus)
    lu_minus = math.log(params.u_minus)
    n_free = grey.n
    if boundary is None or boundary.n == 0:
        merged = grey.points
        b_spins = np.zeros(0, dtype=np.int8)
    else:
        merged = np.concatenate([grey.points, boundary.points], axis=0)
        b_spins = boundary.spins
    if merged.shape[0] == 0:
        return 0.0
    decomp = cluster_decompose(GreyConfiguration(merged), params.a)
    total = 0.0
    for cid in decomp.cluster_ids:
        m = decomp.members(cid)
        k = int(np.sum(m < n_free))
        forced = b_spins[m[m >= n_free] - n_free]
        has_plus = bool(np.any(forced == 1))
        has_minus = bool(np.any(forced == -1))
        if has_plus and has_minus:
            return -math.inf
        if has_plus:
            total += k * lu_plus
        elif has_minus:
            total += k * lu_minus
        else:
            total += float(np.logaddexp(k * lu_plus, k * lu_minus))
    return total


# ---------------------------------------------------------------------------
# exact sampler (rejection)


def sample_wrm_exact(
    window: Window,
    params: ModelParams,
    bc: BoundaryCondition,
    rng: np.random.Generator,
    max_attempts: int = 1_000_000,
) -> ColoredConfiguration:
    """Exact draw by rejection.

    Grey points come from a PPP with the total intensity, colors are i.i.d.
    with P(+) = u+, and the draw is accepted iff the hard constraint holds
    against itself and the boundary.
    """
    fixed = materialize_boundary(window, bc, params)
    if fixed.n and not constraint_ok(fixed, params.a):
        raise ValueError("boundary condition violates the hard-core constraint")
    attempts = 0
    while attempts < max_attempts:
        attempts += 1
        grey = sample_ppp(window, params.total_intensity, rng)
        u_plus = params.u_plus if params.total_intensity > 0.0 else 0.5
        spins = np.where(
            rng.uniform(size=grey.n) < u_plus, 1, -1
        ).astype(np.int8)
        candidate = ColoredConfiguration(grey.points, spins)
        # the acceptance test is itself the hard constraint assertion
        if constraint_ok(candidate, params.a, fixed):
            return candidate
    rate = 0.0 if attempts == 0 else 1.0 / attempts
    raise RuntimeError(
        f"rejection cap exceeded after {max_attempts} attempts "
        f"(observed acceptance rate {rate:.3g}); shrink the window or intensity"
    )


# ---------------------------------------------------------------------------
# MCMC sampler


class _CellGrid:
    """Mutable spatial hash (cell side 2a) over free and fixed points."""

    def __init__(self, a: float, dim: int) -> None:
        self.cell = 2.0 * a
        self.dim = dim
        self.cells: dict[tuple[int, ...], set[int]] = {}
        self._offsets = [
            tuple(off)
            for off in np.stack(
                np.meshgrid(*([np.arange(-1, 2)] * dim), indexing="ij"), axis=-1
            ).reshape(-1, dim)
        ]

    def key(self, x: NDArray[np.float64]) -> tuple[int, ...]:
        return tuple(int(math.floor(v / self.cell)) for v in x)

    def insert(self, idx: int, x: NDArray[np.float64]) -> None:
        self.cells.setdefault(self.key(x), set()).add(idx)

    def remove(self, idx: int, x: NDArray[np.float64]) -> None:
        key = self.key(x)
        self.cells[key].discard(idx)
        if not self.cells[key]:
            del self.cells[key]

    def neighbor_candidates(self, x: NDArray[np.float64]) -> Iterator[int]:
        base = self.key(x)
        for off in self._offsets:
            bucket = self.cells.get(tuple(b + o for b, o in zip(base, off)))
            if bucket:
                yield from bucket


@dataclass
class _ChainState:
    points: list[NDArray[np.float64]]
    spins: list[int]
    alive: list[bool]
    grid: _CellGrid
    n_fixed: int  # indices < n_fixed are boundary points, never touched

    def live_free_indices(self) -> list[int]:
        return [i for i in range(self.n_fixed, len(self.points)) if self.alive[i]]


@dataclass
class McmcDiagnostics:
    proposals: int = 0
    accepted_birth: int = 0
    accepted_death: int = 0
    accepted_flip: int = 0


def _neighbors_within(
    state: _ChainState, x: NDArray[np.float64], reach_sq: float, skip: int | None = None
) -> list[int]:
    out = []
    for j in state.grid.neighbor_candidates(x):
        if j == skip or not state.alive[j]:
            continue
        diff = state.points[j] - x
        if float(diff @ diff) < reach_sq:
            out.append(j)
    return out


def _cluster_of(state: _ChainState, start: int, reach_sq: float) -> list[int]:
    seen = {start}
    stack = [start]
    while stack:
        i = stack.pop()
        for j in _neighbors_within(state, state.points[i], reach_sq, skip=i):
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return sorted(seen)


def sample_wrm_mcmc(
    window: Window,
    params: ModelParams,
    bc: BoundaryCondition,
    rng: np.random.Generator,
    n_samples: int,
    burn_in: int = 100_000,
    thinning: int = 1_000,
    move_weights: tuple[float, float, float] = (0.4, 0.4, 0.2),
    initial: ColoredConfiguration | None = None,
    diagnostics: McmcDiagnostics | None = None,
) -> list[ColoredConfiguration]:
    """Birth / death / cluster-flip Metropolis chain for the constrained gas.

    One sweep is one proposed move.  Birth proposes a uniform location with a
    color drawn from (u+, u-); the color proposal cancels against the colored
    activity, so the acceptance ratio against the unit Poisson reference is
    (lambda_plus + lambda_minus) |window| / (n + 1) on constraint-free moves.
    Death mirrors it.  The flip move picks a live free point, walks its whole
    cluster, and flips it with probability min(1, alpha^(-s |C|)); clusters
    pinned by boundary points never flip.  In the symmetric free-boundary
    case flips always accept.
    """
    fixed = materialize_boundary(window, bc, params)
    if fixed.n and not constraint_ok(fixed, params.a):
        raise ValueError("boundary condition violates the hard-core constraint")
    reach_sq = (2.0 * params.a) ** 2
    dim = window.dimension
    state = _ChainState([], [], [], _CellGrid(params.a, dim), fixed.n)
    for i in range(fixed.n):
        state.points.append(np.array(fixed.points[i], dtype=np.float64))
        state.spins.append(int(fixed.spins[i]))
        state.alive.append(True)
        state.grid.insert(i, state.points[i])
    if initial is not None:
        if not constraint_ok(initial, params.a, fixed):
            raise ValueError("initial state violates the hard-core constraint")
        for i in range(initial.n):
            idx = len(state.points)
            state.points.append(np.array(initial.points[i], dtype=np.float64))
            state.spins.append(int(initial.spins[i]))
            state.alive.append(True)
            state.grid.insert(idx, state.points[idx])

    diag = diagnostics if diagnostics is not None else McmcDiagnostics()
    volume = window.volume()
    total = params.total_intensity
    # symmetric zero-activity degenerates to the empty gas; ratio undefined then
    log_alpha = 0.0 if params.is_symmetric else params.log_alpha
    u_plus = params.u_plus if total > 0.0 else 0.5
    w_birth, w_death, w_flip = move_weights
    w_sum = w_birth + w_death + w_flip
    p_birth = w_birth / w_sum
    p_death = w_death / w_sum
    free: list[int] = state.live_free_indices()

    def n_free() -> int:
        return len(free)

    def one_move() -> None:
        diag.proposals += 1
        u = rng.uniform()
        if u < p_birth:
            if total == 0.0:
                return
            x = sample_point_uniform(window, rng, 1)[0]
            spin = 1 if rng.uniform() < u_plus else -1
            for j in _neighbors_within(state, x, reach_sq):
                if state.spins[j] != spin:
                    return  # constraint kills the proposal
            log_acc = math.log(total * volume) - math.log(n_free() + 1)
            if log_acc >= 0.0 or rng.uniform() < math.exp(log_acc):
                idx = len(state.points)
                state.points.append(x)
                state.spins.append(spin)
                state.alive.append(True)
                state.grid.insert(idx, x)
                free.append(idx)
                diag.accepted_birth += 1
        elif u < p_birth + p_death:
            if not free:
                return
            pos = int(rng.integers(len(free)))
            idx = free[pos]
            log_acc = math.inf if total == 0.0 else math.log(n_free()) - math.log(total * volume)
            if log_acc >= 0.0 or rng.uniform() < math.exp(log_acc):
                state.alive[idx] = False
                state.grid.remove(idx, state.points[idx])
                free[pos] = free[-1]
                free.pop()
                diag.accepted_death += 1
        else:
            if not free:
                return
            idx = free[int(rng.integers(len(free)))]
            cluster = _cluster_of(state, idx, reach_sq)
            if any(j < state.n_fixed for j in cluster):
                return  # boundary-pinned clusters cannot flip
            spin = state.spins[idx]
            log_acc = -spin * len(cluster) * log_alpha
            if log_acc >= 0.0 or rng.uniform() < math.exp(log_acc):
                for j in cluster:
                    state.spins[j] = -state.spins[j]
                diag.accepted_flip += 1

    for _ in range(burn_in):
        one_move()
    out: list[ColoredConfiguration] = []
    for _ in range(n_samples):
        for _ in range(thinning):
            one_move()
        live = free
        pts = np.asarray([state.points[i] for i in sorted(live)], dtype=np.float64).reshape(-1, dim)
        sp = np.asarray([state.spins[i] for i in sorted(live)], dtype=np.int8)
        sample = ColoredConfiguration(pts, sp)
        assert constraint_ok(sample, params.a, fixed), CONSTRAINT_VIOLATION
        out.append(sample)
    return out


def evolve_spinflip(
    config: ColoredConfiguration, t: float, rng: np.random.Generator
) -> ColoredConfiguration:
    """Run independent spin flips for time t; positions are untouched."""
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    p_change = 0.5 if math.isinf(t) else 0.5 * (1.0 - math.exp(-2.0 * t))
    flips = rng.uniform(size=config.n) < p_change
    new_spins = np.where(flips, -config.spins, config.spins).astype(np.int8)
    return ColoredConfiguration(config.points.copy(), new_spins)
