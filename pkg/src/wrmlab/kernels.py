"""Monte Carlo evaluation of cluster-weighted conditional kernels.

All four kernel flavors integrate a Poisson point process at the minority
activity over the window and reweight each draw by a product of per-cluster
factors.  Clusters are taken in the merged configuration (draw plus
conditioning); which factor a cluster contributes depends on the flavor:

* ``finite``: two conditioning layers.  The switch layer (already
  spin-flipped, inside the surrounding region) feeds the cluster switch
  weight rho; the constraint layer (original colors, outside the region)
  forces the start color of its cluster.  Factor
  alpha^(n_w) [if not forced minus] + rho [if not forced plus],
  with n_w the number of drawn points in the cluster.
* ``infinity``: one switch layer; clusters touching the horizon proxy keep
  only the started-plus branch: factor alpha^(n_w), colors pinned to the
  started-plus flip kernel.  Finite clusters: alpha^(n_w) + rho.
* ``free``: like ``infinity`` but horizon clusters are dropped from every
  product (factor 1); their drawn points get uniform colors in the color
  layer, the normalization a dropped factor leaves behind.
* ``pinned``: symmetric model only; finite clusters contribute 1 + rho,
  horizon clusters weight 1 with colors pinned to the chosen sign.

Estimates are self-normalized importance ratios with delta-method standard
errors.  Families of conditionings are evaluated on shared draws (common
random numbers), and pairwise differences use an expm1-stable form so that
exponentially small boundary influences survive in double precision.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .geometry import (
    Box,
    ColoredConfiguration,
    GreyConfiguration,
    Window,
    cluster_count_bound,
    cluster_decompose,
)
from .model import ModelParams, flip_kernel
from .sampler import sample_point_uniform

CONDITIONING_INCONSISTENT = "conditioning inconsistent"
PINNED_NEEDS_SYMMETRY = "γ^± defined for the symmetric model"
ESS_FLOOR = 100.0


class KernelMode(Enum):
    FINITE = "finite"
    INFINITY = "infinity"
    FREE = "free"
    PINNED = "pinned"


class ObservableKind(Enum):
    INDICATOR_EMPTY = "indicator_empty"
    INDICATOR_ALL_PLUS = "indicator_all_plus"
    POINT_COUNT = "point_count"
    WINDOW_MAGNETIZATION = "window_magnetization"
    CONSTANT_ONE = "constant_one"


_GREY_KINDS = {
    ObservableKind.INDICATOR_EMPTY,
    ObservableKind.POINT_COUNT,
    ObservableKind.CONSTANT_ONE,
}


@dataclass(frozen=True)
class Observable:
    """Built-in observable: a kind plus an optional target window.

    Without a target window the kernel window itself is used.  grey_only is
    derived from the kind.  window_magnetization of an empty draw is 0 by
    convention (the model-level magnetization errors on empty input instead).
    """

    kind: ObservableKind
    window: Window | None = None
    grey_only: bool = field(init=False, default=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "grey_only", self.kind in _GREY_KINDS)

    def sup_norm(self) -> float | None:
        if self.kind is ObservableKind.POINT_COUNT:
            return None
        return 1.0


@dataclass(frozen=True)
class ClusterWeightTerm:
    """Per-cluster weight record for one explicit merged configuration."""

    points_in_window: int
    constraint: str  # "forced_plus" | "forced_minus" | "unconstrained" | "conflict"
    log_switch: float
    infinite: bool


@dataclass
class KernelEstimate:
    value: float
    std_error: float
    n_samples: int
    ess: float
    max_log_weight: float
    min_log_weight: float
    notes: tuple[str, ...] = ()


@dataclass
class PairedDifference:
    """Difference of two estimates computed on shared draws."""

    value: float
    std_error: float
    first: float
    second: float


# ---------------------------------------------------------------------------
# conditioning preparation


@dataclass
class _Prepared:
    """Per-variant digest of a conditioning relative to the window.

    Weight factors are kept raw (activity power times emission products per
    start-color branch) rather than normalized per cluster: in the
    finite-cluster flavor a draw decides which clusters are dropped, so
    per-cluster constants do not cancel between draws.
    """

    n_near: int
    alpha_count: NDArray[np.int64]    # (n_near,) conditioning points in the cluster
    emis_plus: NDArray[np.float64]    # sum of log p_t(+, s) over switch members
    emis_minus: NDArray[np.float64]   # sum of log p_t(-, s) over switch members
    forced: NDArray[np.int8]          # 0 none, +1 plus, -1 minus, 2 conflict
    horizon: NDArray[np.bool_]        # horizon-proxy flag per cluster
    contact_points: NDArray[np.float64]   # cond points strictly within 2a of window
    contact_rows: NDArray[np.intp]        # map contact point -> near-cluster row
    member_rows_of_near: list[NDArray[np.intp]]  # cond-point indices per near cluster
    all_points: NDArray[np.float64]
    all_spins: NDArray[np.int8]
    all_is_switch_layer: NDArray[np.bool_]


def _prepare_conditioning(
    window: Window,
    params: ModelParams,
    switch_layer: ColoredConfiguration | None,
    constraint_layer: ColoredConfiguration | None,
    ambient: Box | None,
    horizon_shell: float | None,
    mode: KernelMode,
) -> _Prepared:
    d = window.dimension
    sw = switch_layer if switch_layer is not None else ColoredConfiguration.empty(d)
    cz = constraint_layer if constraint_layer is not None else ColoredConfiguration.empty(d)
    if mode is not KernelMode.FINITE and cz.n:
        raise ValueError("constraint layer applies to the finite-volume kernel only")
    pts = np.concatenate([sw.points, cz.points], axis=0) if (sw.n + cz.n) else np.zeros((0, d))
    spins = np.concatenate([sw.spins, cz.spins], axis=0) if (sw.n + cz.n) else np.zeros(0, dtype=np.int8)
    is_switch = np.concatenate([
        np.ones(sw.n, dtype=bool),
        np.zeros(cz.n, dtype=bool),
    ]) if (sw.n + cz.n) else np.zeros(0, dtype=bool)

    if np.any(window.contains(pts)):
        raise ValueError(CONDITIONING_INCONSISTENT + ": conditioning points inside the window")

    decomp = cluster_decompose(GreyConfiguration(pts), params.a)
    reach = 2.0 * params.a
    near_rows: list[NDArray[np.intp]] = []
    alpha_count_list: list[int] = []
    emis_plus_list: list[float] = []
    emis_minus_list: list[float] = []
    forced_list: list[int] = []
    horizon_list: list[bool] = []
    lpp = math.log(flip_kernel(params.t, 1, 1))
    lpm = math.log(flip_kernel(params.t, 1, -1))

    horizon_pt = np.zeros(pts.shape[0], dtype=bool)
    if mode in (KernelMode.INFINITY, KernelMode.FREE, KernelMode.PINNED):
        if ambient is None:
            raise ValueError("horizon-aware kernels need an ambient box")
        width = 2.0 * params.a if horizon_shell is None else horizon_shell
        try:
            core = ambient.shrink(width)
            horizon_pt = ~(core.contains(pts) & ambient.contains(pts)) if pts.size else horizon_pt
        except ValueError:
            horizon_pt = np.ones(pts.shape[0], dtype=bool)

    for cid in decomp.cluster_ids:
        m = decomp.members(cid)
        dist = float(np.min(window.distance(pts[m])))
        if dist > reach:
            continue  # belongs to the outside product, cancels in the ratio
        sw_mask = is_switch[m]
        sw_spins = spins[m][sw_mask]
        n_sw_plus = int(np.sum(sw_spins == 1))
        n_sw_minus = int(sw_spins.size) - n_sw_plus
        cz_spins = spins[m][~sw_mask]
        has_p = bool(np.any(cz_spins == 1))
        has_m = bool(np.any(cz_spins == -1))
        forced = 2 if (has_p and has_m) else (1 if has_p else (-1 if has_m else 0))
        near_rows.append(m)
        alpha_count_list.append(int(m.size))
        emis_plus_list.append(n_sw_plus * lpp + n_sw_minus * lpm)
        emis_minus_list.append(n_sw_plus * lpm + n_sw_minus * lpp)
        forced_list.append(forced)
        horizon_list.append(bool(np.any(horizon_pt[m])))

    n_near = len(near_rows)
    contact_pts = []
    contact_rows = []
    for row, m in enumerate(near_rows):
        dists = window.distance(pts[m])
        close = m[dists < reach]  # strict: only these can bond to a draw
        for idx in close:
            contact_pts.append(pts[idx])
            contact_rows.append(row)
    return _Prepared(
        n_near=n_near,
        alpha_count=np.asarray(alpha_count_list, dtype=np.int64),
        emis_plus=np.asarray(emis_plus_list, dtype=np.float64),
        emis_minus=np.asarray(emis_minus_list, dtype=np.float64),
        forced=np.asarray(forced_list, dtype=np.int8),
        horizon=np.asarray(horizon_list, dtype=bool),
        contact_points=np.asarray(contact_pts, dtype=np.float64).reshape(-1, d),
        contact_rows=np.asarray(contact_rows, dtype=np.intp),
        member_rows_of_near=near_rows,
        all_points=pts,
        all_spins=spins,
        all_is_switch_layer=is_switch,
    )


# ---------------------------------------------------------------------------
# per-chunk weight computation

_BIG = np.iinfo(np.int32).max


def _connected_labels(adj: NDArray[np.bool_]) -> NDArray[np.int32]:
    """Min-label propagation over (M, K, K) adjacency with self-loops."""
    m, k, _ = adj.shape
    labels = np.broadcast_to(np.arange(k, dtype=np.int32), (m, k)).copy()
    if k == 0:
        return labels
    while True:
        cand = np.where(adj, labels[:, None, :], _BIG).min(axis=2).astype(np.int32)
        new = np.minimum(labels, cand)
        if np.array_equal(new, labels):
            return labels
        labels = new


@dataclass
class _SlotStats:
    """Per-(draw, label-slot) cluster statistics for one chunk."""

    active: NDArray[np.bool_]        # (M, K)
    has_cond: NDArray[np.bool_]
    n_w: NDArray[np.int64]           # drawn points per slot
    cond_count: NDArray[np.float64]  # conditioning points per slot
    emis_plus: NDArray[np.float64]   # summed started-plus log emissions
    emis_minus: NDArray[np.float64]
    forced_plus: NDArray[np.bool_]
    forced_minus: NDArray[np.bool_]
    horizon: NDArray[np.bool_]
    point_slot: NDArray[np.int32]    # (M, k) slot of each drawn point
    onehot_samples: NDArray[np.bool_]  # (M, k, K)


def _chunk_slots(pts: NDArray[np.float64], prep: _Prepared, params: ModelParams) -> _SlotStats:
    m_rows, k, d = pts.shape
    nc = prep.n_near
    reach_sq = (2.0 * params.a) ** 2
    total = k + nc
    adj = np.zeros((m_rows, total, total), dtype=bool)
    idx = np.arange(total)
    adj[:, idx, idx] = True
    if k:
        diff = pts[:, :, None, :] - pts[:, None, :, :]
        adj[:, :k, :k] |= np.einsum("mijd,mijd->mij", diff, diff) < reach_sq
    if k and prep.contact_points.shape[0]:
        dc = pts[:, :, None, :] - prep.contact_points[None, None, :, :]
        hit = np.einsum("mijd,mijd->mij", dc, dc) < reach_sq  # (M, k, n_contact)
        contact = np.zeros((m_rows, k, nc), dtype=bool)
        for row in range(nc):
            sel = prep.contact_rows == row
            if np.any(sel):
                contact[:, :, row] = hit[:, :, sel].any(axis=2)
        adj[:, :k, k:] |= contact
        adj[:, k:, :k] |= contact.transpose(0, 2, 1)
    labels = _connected_labels(adj)
    slots = np.arange(total, dtype=np.int32)
    onehot = labels[:, :, None] == slots[None, None, :]  # (M, total, K=total)
    onehot_samples = onehot[:, :k, :]
    onehot_cond = onehot[:, k:, :]
    n_w = onehot_samples.sum(axis=1).astype(np.int64)
    if nc:
        oc = onehot_cond.astype(np.float64)
        cond_count = np.einsum("mns,n->ms", oc, prep.alpha_count.astype(np.float64))
        emis_plus = np.einsum("mns,n->ms", oc, prep.emis_plus)
        emis_minus = np.einsum("mns,n->ms", oc, prep.emis_minus)
        forced_plus = (onehot_cond & ((prep.forced == 1) | (prep.forced == 2))[None, :, None]).any(axis=1)
        forced_minus = (onehot_cond & ((prep.forced == -1) | (prep.forced == 2))[None, :, None]).any(axis=1)
        horizon = (onehot_cond & prep.horizon[None, :, None]).any(axis=1)
        has_cond = onehot_cond.any(axis=1)
    else:
        cond_count = np.zeros((m_rows, total))
        emis_plus = np.zeros((m_rows, total))
        emis_minus = np.zeros((m_rows, total))
        forced_plus = np.zeros((m_rows, total), dtype=bool)
        forced_minus = np.zeros((m_rows, total), dtype=bool)
        horizon = np.zeros((m_rows, total), dtype=bool)
        has_cond = np.zeros((m_rows, total), dtype=bool)
    active = onehot.any(axis=1)
    point_slot = labels[:, :k]
    return _SlotStats(
        active=active,
        has_cond=has_cond,
        n_w=n_w,
        cond_count=cond_count,
        emis_plus=emis_plus,
        emis_minus=emis_minus,
        forced_plus=forced_plus,
        forced_minus=forced_minus,
        horizon=horizon,
        point_slot=point_slot,
        onehot_samples=onehot_samples,
    )


def _slot_branch_logweights(
    stats: _SlotStats, log_alpha: float
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Raw started-plus / started-minus branch log weights per slot."""
    lw_plus = (stats.n_w + stats.cond_count) * log_alpha + stats.emis_plus
    lw_minus = stats.emis_minus.copy()
    return lw_plus, lw_minus


def _slot_log_factors(
    stats: _SlotStats, mode: KernelMode, log_alpha: float, pinned_sign: int
) -> NDArray[np.float64]:
    """Per-slot log weight factor; inactive slots get 0."""
    lw_plus, lw_minus = _slot_branch_logweights(stats, log_alpha)
    neg_inf = -np.inf
    with np.errstate(invalid="ignore"):
        both = np.logaddexp(lw_plus, lw_minus)
        if mode is KernelMode.FINITE:
            factor = np.logaddexp(
                np.where(stats.forced_minus, neg_inf, lw_plus),
                np.where(stats.forced_plus, neg_inf, lw_minus),
            )
        elif mode is KernelMode.INFINITY:
            factor = np.where(stats.horizon, lw_plus, both)
        elif mode is KernelMode.FREE:
            # dropped clusters leave no factor at all
            factor = np.where(stats.horizon, 0.0, both)
        else:  # PINNED: symmetric model
            pinned_branch = lw_plus if pinned_sign > 0 else lw_minus
            factor = np.where(stats.horizon, pinned_branch, both)
    return np.where(stats.active, factor, 0.0)


def _slot_start_logweights(
    stats: _SlotStats, mode: KernelMode, log_alpha: float, pinned_sign: int
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.bool_]]:
    """Start-color mixture log weights (plus, minus) and a uniform-color mask."""
    lw_plus, lw_minus = _slot_branch_logweights(stats, log_alpha)
    neg_inf = -np.inf
    uniform = np.zeros_like(stats.horizon)
    if mode is KernelMode.FINITE:
        lw_plus = np.where(stats.forced_minus, neg_inf, lw_plus)
        lw_minus = np.where(stats.forced_plus, neg_inf, lw_minus)
    elif mode is KernelMode.INFINITY:
        lw_minus = np.where(stats.horizon, neg_inf, lw_minus)
    elif mode is KernelMode.FREE:
        uniform = stats.horizon
    else:  # PINNED
        if pinned_sign > 0:
            lw_minus = np.where(stats.horizon, neg_inf, lw_minus)
        else:
            lw_plus = np.where(stats.horizon, neg_inf, lw_plus)
    return lw_plus, lw_minus, uniform


def _chunk_observable(
    obs: Observable,
    window: Window,
    pts: NDArray[np.float64],
    stats: _SlotStats,
    mode: KernelMode,
    params: ModelParams,
    pinned_sign: int,
) -> NDArray[np.float64]:
    m_rows, k, d = pts.shape
    target = obs.window if obs.window is not None else window
    if obs.kind is ObservableKind.CONSTANT_ONE:
        return np.ones(m_rows)
    in_t = (
        target.contains(pts.reshape(-1, d)).reshape(m_rows, k)
        if k
        else np.zeros((m_rows, 0), dtype=bool)
    )
    if obs.kind is ObservableKind.INDICATOR_EMPTY:
        return (~in_t.any(axis=1)).astype(np.float64)
    if obs.kind is ObservableKind.POINT_COUNT:
        return in_t.sum(axis=1).astype(np.float64)

    lw_plus, lw_minus, uniform = _slot_start_logweights(stats, mode, params.log_alpha, pinned_sign)
    lpp = math.log(flip_kernel(params.t, 1, 1))
    lmp = math.log(flip_kernel(params.t, -1, 1))
    with np.errstate(invalid="ignore"):
        norm = np.logaddexp(lw_plus, lw_minus)
    if obs.kind is ObservableKind.INDICATOR_ALL_PLUS:
        c_t = (stats.onehot_samples & in_t[:, :, None]).sum(axis=1).astype(np.float64)
        with np.errstate(invalid="ignore"):
            lp = np.logaddexp(lw_plus + c_t * lpp, lw_minus + c_t * lmp) - norm
        lp = np.where(uniform, c_t * math.log(0.5), lp)
        lp = np.where(stats.active & (c_t > 0) & np.isfinite(norm) | (uniform & (c_t > 0)), lp, 0.0)
        return np.exp(lp.sum(axis=1))
    # window magnetization
    with np.errstate(invalid="ignore"):
        lp_point = np.logaddexp(lw_plus + lpp, lw_minus + lmp) - norm
    p_plus_slot = np.exp(lp_point)
    p_plus_slot = np.where(uniform, 0.5, p_plus_slot)
    p_plus_slot = np.where(np.isfinite(norm) | uniform, p_plus_slot, 0.5)
    if k == 0:
        return np.zeros(m_rows)
    p_pt = np.take_along_axis(p_plus_slot, stats.point_slot.astype(np.intp), axis=1)
    contrib = np.where(in_t, 2.0 * p_pt - 1.0, 0.0).sum(axis=1)
    cnt = in_t.sum(axis=1)
    return np.where(cnt > 0, contrib / np.maximum(cnt, 1), 0.0)


# ---------------------------------------------------------------------------
# family evaluation


@dataclass
class _FamilyResult:
    log_weights: NDArray[np.float64]      # (n_variants, budget)
    f_values: NDArray[np.float64]         # (n_variants, n_observables, budget)


def _evaluate_family_raw(
    mode: KernelMode,
    observables: Sequence[Observable],
    window: Window,
    preps: Sequence[_Prepared],
    params: ModelParams,
    budget: int,
    rng: np.random.Generator,
    pinned_sign: int = 1,
    proposal_intensity: float | None = None,
    max_chunk_scalars: int = 6_000_000,
) -> _FamilyResult:
    """Draws come from PPP(proposal) with an exact per-count log correction;
    the default proposal is the minority activity the weights are defined
    against.  A heavier proposal rescues the effective sample size when the
    conditioning makes the majority branch dominate."""
    if budget < 1:
        raise ValueError("budget must be positive")
    n_var = len(preps)
    n_obs = len(observables)
    d = window.dimension
    prop = params.lambda_minus if proposal_intensity is None else float(proposal_intensity)
    if prop <= 0.0:
        raise ValueError("proposal intensity must be positive")
    log_prop_corr = math.log(params.lambda_minus / prop)
    counts = rng.poisson(prop * window.volume(), size=budget)
    bound = cluster_count_bound(window, params.a) + 1e-9
    logw = np.zeros((n_var, budget))
    fvals = np.zeros((n_var, n_obs, budget))
    # empty draws share one deterministic evaluation per variant
    empty_pts = np.zeros((1, 0, d))
    zero_rows = np.flatnonzero(counts == 0)
    for v, prep in enumerate(preps):
        stats = _chunk_slots(empty_pts, prep, params)
        factors = _slot_log_factors(stats, mode, params.log_alpha, pinned_sign)
        logw[v, zero_rows] = factors.sum(axis=1)[0]
        for o, obs in enumerate(observables):
            fvals[v, o, zero_rows] = _chunk_observable(
                obs, window, empty_pts, stats, mode, params, pinned_sign
            )[0]
    max_nc = max((p.n_near for p in preps), default=0)
    for k in np.unique(counts):
        k = int(k)
        if k == 0:
            continue
        rows = np.flatnonzero(counts == k)
        node_count = k + max_nc
        chunk_rows = max(1, min(rows.size, max_chunk_scalars // max(node_count * node_count, 1)))
        for start in range(0, rows.size, chunk_rows):
            sel = rows[start : start + chunk_rows]
            pts = sample_point_uniform(window, rng, sel.size * k).reshape(sel.size, k, d)
            for v, prep in enumerate(preps):
                stats = _chunk_slots(pts, prep, params)
                n_clusters_drawn = (stats.n_w >= 1).sum(axis=1)
                assert int(n_clusters_drawn.max(initial=0)) <= bound, (
                    "cluster-count packing bound violated"
                )
                factors = _slot_log_factors(stats, mode, params.log_alpha, pinned_sign)
                logw[v, sel] = factors.sum(axis=1)
                for o, obs in enumerate(observables):
                    fvals[v, o, sel] = _chunk_observable(
                        obs, window, pts, stats, mode, params, pinned_sign
                    )
    if log_prop_corr != 0.0:
        logw += counts * log_prop_corr
    bad = np.isnan(logw) | np.isposinf(logw)
    if np.any(bad):
        raise AssertionError("kernel weights must be finite or zero in the log domain")
    return _FamilyResult(log_weights=logw, f_values=fvals)


def _finalize_estimate(
    logw: NDArray[np.float64], f: NDArray[np.float64], obs: Observable
) -> KernelEstimate:
    top = float(np.max(logw))
    if top == -math.inf:
        raise ValueError(CONDITIONING_INCONSISTENT)
    u = np.exp(logw - top)
    s = float(np.sum(u))
    value = float(np.sum(u * f) / s)
    wn = u / s
    se = float(np.sqrt(np.sum((wn * (f - value)) ** 2)))
    ess = float(s * s / np.sum(u * u))
    notes: list[str] = []
    if ess < ESS_FLOOR:
        msg = f"effective sample size {ess:.1f} below {ESS_FLOOR:.0f}; estimate unreliable"
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        notes.append(msg)
    sup = obs.sup_norm()
    if sup is not None and abs(value) > sup + 3.0 * se:
        notes.append("estimate exceeds observable sup-norm beyond 3 standard errors")
    return KernelEstimate(
        value=value,
        std_error=se,
        n_samples=int(logw.size),
        ess=ess,
        max_log_weight=float(np.max(logw)),
        min_log_weight=float(np.min(logw)),
        notes=tuple(notes),
    )


def _paired_difference(
    logw0: NDArray[np.float64],
    f0: NDArray[np.float64],
    logw1: NDArray[np.float64],
    f1: NDArray[np.float64],
) -> PairedDifference:
    """Difference estimate (first minus second) on shared draws.

    Each side is first normalized by its own peak log weight; the estimator
    is exactly invariant under per-side constant shifts, and the shift
    removes any draw-independent offset between the conditionings.  The
    stable path then writes the second weight as w0 (1 + eps) with
    eps = expm1(shifted dlog), which collapses to exact cancellation when
    the two conditionings agree on a draw, and the denominator is taken as
    the shifted mass ratio s1/s0, which cannot underflow.  Falls back to the
    naive difference when weights are structurally different (zero against
    nonzero, or a shifted ratio beyond the exp range).
    """
    top0 = float(np.max(logw0))
    top1 = float(np.max(logw1))
    if top0 == -np.inf or top1 == -np.inf:
        raise ValueError(CONDITIONING_INCONSISTENT)
    u0 = np.exp(logw0 - top0)
    u1 = np.exp(logw1 - top1)
    s0 = float(np.sum(u0))
    s1 = float(np.sum(u1))
    if s0 <= 0.0 or s1 <= 0.0:
        raise ValueError(CONDITIONING_INCONSISTENT)
    r0 = float(np.sum(u0 * f0) / s0)
    r1 = float(np.sum(u1 * f1) / s1)
    with np.errstate(invalid="ignore"):
        dlog = (logw1 - top1) - (logw0 - top0)
    # expm1(-inf) is exactly -1, so draws killed by the second conditioning
    # stay on the stable path; only zero-vs-huge weight mismatches fall back.
    structural = ((logw0 == -np.inf) & (logw1 > -np.inf)) | (dlog > 700.0)
    wn0 = u0 / s0
    wn1 = u1 / s1
    if np.any(structural):
        delta = r0 - r1
        phi = wn0 * (f0 - r0) - wn1 * (f1 - r1)
        se = float(np.sqrt(np.sum(phi * phi)))
        return PairedDifference(value=delta, std_error=se, first=r0, second=r1)
    eps = np.where((logw0 == -np.inf) & (logw1 == -np.inf), 0.0, np.expm1(dlog))
    df = f1 - f0
    eps_bar = float(np.sum(wn0 * eps))
    den = s1 / s0
    delta = float((np.sum(wn0 * eps * (r0 - f0)) - np.sum(wn0 * (1.0 + eps) * df)) / den)
    f1_centered = (f0 + df) - (r0 - delta)
    phi = wn0 * (-df - delta - ((eps - eps_bar) / den) * f1_centered)
    se = float(np.sqrt(np.sum(phi * phi)))
    return PairedDifference(value=delta, std_error=se, first=r0, second=r1)


@dataclass
class FamilyEstimate:
    """Estimates for several conditionings on shared draws."""

    estimates: list[KernelEstimate]
    differences: dict[tuple[int, int], PairedDifference]


def eval_kernel_family(
    mode: KernelMode | str,
    observable: Observable,
    window: Window,
    conditionings: Sequence[ColoredConfiguration],
    params: ModelParams,
    budget: int,
    rng: np.random.Generator,
    ambient: Box | None = None,
    horizon_shell: float | None = None,
    pinned_sign: int = 1,
    constraint_layers: Sequence[ColoredConfiguration | None] | None = None,
    pairs: Sequence[tuple[int, int]] | None = None,
    proposal_intensity: float | None = None,
) -> FamilyEstimate:
    """Evaluate one observable under several conditionings on shared draws.

    `conditionings` are switch-layer configurations; in finite mode an
    aligned sequence of constraint layers may be given.  `pairs` selects
    which paired differences to compute (default: every variant against the
    first).  `proposal_intensity` replaces the default PPP draw rate; the
    weights absorb the change exactly, so only variance moves.
    """
    kmode = KernelMode(mode) if not isinstance(mode, KernelMode) else mode
    if kmode is KernelMode.PINNED and not params.is_symmetric:
        raise ValueError(PINNED_NEEDS_SYMMETRY)
    if pinned_sign not in (-1, 1):
        raise ValueError("pinned sign must be -1 or +1")
    cls = constraint_layers if constraint_layers is not None else [None] * len(conditionings)
    if len(cls) != len(conditionings):
        raise ValueError("constraint layers must align with conditionings")
    preps = [
        _prepare_conditioning(window, params, sw, cz, ambient, horizon_shell, kmode)
        for sw, cz in zip(conditionings, cls)
    ]
    raw = _evaluate_family_raw(
        kmode, [observable], window, preps, params, budget, rng, pinned_sign,
        proposal_intensity=proposal_intensity,
    )
    estimates = [
        _finalize_estimate(raw.log_weights[v], raw.f_values[v, 0], observable)
        for v in range(len(preps))
    ]
    wanted = list(pairs) if pairs is not None else [(0, v) for v in range(1, len(preps))]
    diffs = {
        (i, j): _paired_difference(
            raw.log_weights[i], raw.f_values[i, 0], raw.log_weights[j], raw.f_values[j, 0]
        )
        for i, j in wanted
    }
    return FamilyEstimate(estimates=estimates, differences=diffs)


# ---------------------------------------------------------------------------
# public single-conditioning evaluators


def eval_kernel_finite_volume(
    observable: Observable,
    window: Window,
    cond_inside: ColoredConfiguration | None,
    cond_outside: ColoredConfiguration | None,
    params: ModelParams,
    budget: int,
    rng: np.random.Generator,
) -> KernelEstimate:
    """Finite-volume conditional kernel on a window.

    `cond_inside` is the switch layer (spin-flipped colors, surrounding
    region); `cond_outside` is the constraint layer (original colors beyond
    it), which forces start colors of the clusters it meets.
    """
    fam = eval_kernel_family(
        KernelMode.FINITE,
        observable,
        window,
        [cond_inside if cond_inside is not None else ColoredConfiguration.empty(window.dimension)],
        params,
        budget,
        rng,
        constraint_layers=[cond_outside],
    )
    return fam.estimates[0]


def eval_gamma_infinity(
    observable: Observable,
    window: Window,
    conditioning: ColoredConfiguration,
    params: ModelParams,
    ambient: Box,
    budget: int,
    rng: np.random.Generator,
    horizon_shell: float | None = None,
) -> KernelEstimate:
    """Infinite-volume kernel: horizon clusters keep the started-plus branch."""
    fam = eval_kernel_family(
        KernelMode.INFINITY,
        observable,
        window,
        [conditioning],
        params,
        budget,
        rng,
        ambient=ambient,
        horizon_shell=horizon_shell,
    )
    return fam.estimates[0]


def eval_gamma_f(
    observable: Observable,
    window: Window,
    conditioning: ColoredConfiguration,
    params: ModelParams,
    ambient: Box,
    budget: int,
    rng: np.random.Generator,
    horizon_shell: float | None = None,
) -> KernelEstimate:
    """Finite-cluster kernel: horizon clusters drop out of every product."""
    fam = eval_kernel_family(
        KernelMode.FREE,
        observable,
        window,
        [conditioning],
        params,
        budget,
        rng,
        ambient=ambient,
        horizon_shell=horizon_shell,
    )
    return fam.estimates[0]


def eval_gamma_pm(
    sign: int,
    observable: Observable,
    window: Window,
    conditioning: ColoredConfiguration,
    params: ModelParams,
    ambient: Box,
    budget: int,
    rng: np.random.Generator,
    horizon_shell: float | None = None,
) -> KernelEstimate:
    """Symmetric two-sided kernel with horizon clusters pinned to one sign."""
    fam = eval_kernel_family(
        KernelMode.PINNED,
        observable,
        window,
        [conditioning],
        params,
        budget,
        rng,
        ambient=ambient,
        horizon_shell=horizon_shell,
        pinned_sign=sign,
    )
    return fam.estimates[0]


# ---------------------------------------------------------------------------
# explicit-configuration helpers (weight terms, color mixture)


def cluster_weight_terms(
    draw: GreyConfiguration,
    window: Window,
    params: ModelParams,
    cond_inside: ColoredConfiguration | None = None,
    cond_outside: ColoredConfiguration | None = None,
    ambient: Box | None = None,
    mode: KernelMode | str = KernelMode.FINITE,
    horizon_shell: float | None = None,
) -> list[ClusterWeightTerm]:
    """Per-cluster weight records for one explicit draw (diagnostics/tests)."""
    kmode = KernelMode(mode) if not isinstance(mode, KernelMode) else mode
    prep = _prepare_conditioning(
        window, params, cond_inside, cond_outside, ambient, horizon_shell, kmode
    )
    pts = draw.points.reshape(1, draw.n, draw.dimension)
    stats = _chunk_slots(pts, prep, params)
    terms: list[ClusterWeightTerm] = []
    for slot in range(stats.active.shape[1]):
        if not stats.active[0, slot]:
            continue
        fp = bool(stats.forced_plus[0, slot])
        fm = bool(stats.forced_minus[0, slot])
        constraint = (
            "conflict" if (fp and fm) else "forced_plus" if fp else "forced_minus" if fm else "unconstrained"
        )
        log_switch = float(
            stats.emis_minus[0, slot]
            - stats.emis_plus[0, slot]
            - stats.cond_count[0, slot] * params.log_alpha
        )
        terms.append(
            ClusterWeightTerm(
                points_in_window=int(stats.n_w[0, slot]),
                constraint=constraint,
                log_switch=log_switch,
                infinite=bool(stats.horizon[0, slot]),
            )
        )
    return terms


def log_weight_of_draw(
    draw: GreyConfiguration,
    window: Window,
    params: ModelParams,
    cond_inside: ColoredConfiguration | None = None,
    cond_outside: ColoredConfiguration | None = None,
    ambient: Box | None = None,
    mode: KernelMode | str = KernelMode.FINITE,
    pinned_sign: int = 1,
    horizon_shell: float | None = None,
) -> float:
    """Total log weight of one explicit draw under a kernel flavor."""
    kmode = KernelMode(mode) if not isinstance(mode, KernelMode) else mode
    prep = _prepare_conditioning(
        window, params, cond_inside, cond_outside, ambient, horizon_shell, kmode
    )
    pts = draw.points.reshape(1, draw.n, draw.dimension)
    stats = _chunk_slots(pts, prep, params)
    factors = _slot_log_factors(stats, kmode, params.log_alpha, pinned_sign)
    return float(factors.sum(axis=1)[0])


@dataclass
class _MixtureCluster:
    members: NDArray[np.intp]   # indices into the draw
    lw_plus: float
    lw_minus: float
    pinned: int | None          # +1/-1 started color, None for mixtures
    uniform: bool               # dropped-factor cluster: i.i.d. fair colors


@dataclass
class NuColorMixture:
    """Exact per-cluster color mixture of a draw given its conditioning.

    Each cluster picks a start color with the stored log weights, then colors
    its drawn points i.i.d. with the time-t flip kernel from that start.
    """

    clusters: list[_MixtureCluster]
    n_points: int
    t: float

    def log_prob(self, spins: NDArray[np.int8]) -> float:
        sp = np.asarray(spins)
        if sp.shape != (self.n_points,):
            raise ValueError("spins must align with the draw")
        lpp = math.log(flip_kernel(self.t, 1, 1))
        lpm = math.log(flip_kernel(self.t, 1, -1))
        total = 0.0
        for cl in self.clusters:
            n_plus = int(np.sum(sp[cl.members] == 1))
            n_minus = cl.members.size - n_plus
            if cl.uniform:
                total += cl.members.size * math.log(0.5)
                continue
            emit_plus = n_plus * lpp + n_minus * lpm
            emit_minus = n_plus * lpm + n_minus * lpp  # symmetric kernel
            if cl.pinned is not None:
                total += emit_plus if cl.pinned == 1 else emit_minus
                continue
            norm = np.logaddexp(cl.lw_plus, cl.lw_minus)
            if norm == -math.inf:
                raise ValueError(CONDITIONING_INCONSISTENT)
            total += float(np.logaddexp(cl.lw_plus + emit_plus, cl.lw_minus + emit_minus) - norm)
        return total

    def sample(self, rng: np.random.Generator) -> NDArray[np.int8]:
        spins = np.zeros(self.n_points, dtype=np.int8)
        p_same = flip_kernel(self.t, 1, 1)
        for cl in self.clusters:
            if cl.uniform:
                spins[cl.members] = np.where(rng.uniform(size=cl.members.size) < 0.5, 1, -1)
                continue
            if cl.pinned is not None:
                start = cl.pinned
            else:
                norm = np.logaddexp(cl.lw_plus, cl.lw_minus)
                if norm == -math.inf:
                    raise ValueError(CONDITIONING_INCONSISTENT)
                p_plus = math.exp(cl.lw_plus - norm)
                start = 1 if rng.uniform() < p_plus else -1
            same = rng.uniform(size=cl.members.size) < p_same
            spins[cl.members] = np.where(same, start, -start)
        return spins.astype(np.int8)

    def marginal_plus(self) -> NDArray[np.float64]:
        out = np.zeros(self.n_points)
        p_pp = flip_kernel(self.t, 1, 1)
        p_mp = flip_kernel(self.t, -1, 1)
        for cl in self.clusters:
            if cl.uniform:
                out[cl.members] = 0.5
                continue
            if cl.pinned is not None:
                out[cl.members] = p_pp if cl.pinned == 1 else p_mp
                continue
            norm = np.logaddexp(cl.lw_plus, cl.lw_minus)
            if norm == -math.inf:
                raise ValueError(CONDITIONING_INCONSISTENT)
            w_plus = math.exp(cl.lw_plus - norm)
            out[cl.members] = w_plus * p_pp + (1.0 - w_plus) * p_mp
        return out


def eval_nu_color_kernel(
    draw: GreyConfiguration,
    window: Window,
    params: ModelParams,
    cond_inside: ColoredConfiguration | None = None,
    cond_outside: ColoredConfiguration | None = None,
    ambient: Box | None = None,
    mode: KernelMode | str = KernelMode.FINITE,
    pinned_sign: int = 1,
    horizon_shell: float | None = None,
) -> NuColorMixture:
    """Exact color law of an explicit draw under a kernel flavor."""
    kmode = KernelMode(mode) if not isinstance(mode, KernelMode) else mode
    if kmode is KernelMode.PINNED and not params.is_symmetric:
        raise ValueError(PINNED_NEEDS_SYMMETRY)
    prep = _prepare_conditioning(
        window, params, cond_inside, cond_outside, ambient, horizon_shell, kmode
    )
    pts = draw.points.reshape(1, draw.n, draw.dimension)
    stats = _chunk_slots(pts, prep, params)
    lw_plus, lw_minus, uniform = _slot_start_logweights(
        stats, kmode, params.log_alpha, pinned_sign
    )
    clusters: list[_MixtureCluster] = []
    for slot in range(stats.active.shape[1]):
        members = np.flatnonzero(stats.point_slot[0] == slot)
        if members.size == 0:
            continue
        if uniform[0, slot]:
            clusters.append(_MixtureCluster(members, 0.0, 0.0, None, True))
            continue
        pinned: int | None = None
        if kmode is KernelMode.INFINITY and stats.horizon[0, slot]:
            pinned = 1
        elif kmode is KernelMode.PINNED and stats.horizon[0, slot]:
            pinned = pinned_sign
        lwp = float(lw_plus[0, slot])
        lwm = float(lw_minus[0, slot])
        if pinned is None and lwp == -math.inf and lwm == -math.inf:
            raise ValueError(CONDITIONING_INCONSISTENT)
        clusters.append(_MixtureCluster(members, lwp, lwm, pinned, False))
    return NuColorMixture(clusters=clusters, n_points=draw.n, t=params.t)
