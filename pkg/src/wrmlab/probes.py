"""Quasilocality and percolation probes built on the kernel engine.

Every probe emits a table of (control, estimate, std_error, bound, verdict)
rows sorted by the control parameter, plus free-form details.  Verdicts are
one-sided: a row is "violated" only when the measurement breaches its bound
by more than three combined standard errors, "inconclusive" when the data
cannot resolve the comparison, "consistent" otherwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .geometry import (
    Ball,
    Box,
    ColoredConfiguration,
    Complement,
    GreyConfiguration,
    Window,
    connects,
)
from .kernels import KernelMode, Observable, ObservableKind, eval_kernel_family
from .model import (
    IntensityClass,
    ModelParams,
    RegimeCase,
    classify_regime,
    decay_length,
    flip_kernel,
    g_of_m,
    phase_cell,
)
from .sampler import BoundaryCondition, RngStream, sample_ppp, sample_wrm_mcmc

VERDICT_CONSISTENT = "consistent"
VERDICT_VIOLATED = "violated"
VERDICT_INCONCLUSIVE = "inconclusive"

JITTER_LIMIT_ERROR = "channel jitter must stay below a quarter core radius"
CHANNEL_BOND_ERROR = "channel spacing must keep consecutive sites bonded"

_CSV_HEADER = "control,estimate,std_error,bound,verdict"


# ---------------------------------------------------------------------------
# channel construction


@dataclass(frozen=True)
class ChannelSpec:
    """Deterministic chain of conditioning sites marching away from a window.

    ``one_arm`` lays sites along the first axis, the head ``head_gap`` past
    the window edge and consecutive gaps of ``spacing``.  ``two_arm`` mirrors
    the arm on the opposite side and can close the far ends with a circular
    connector arc meshed into chords of length ``arc_mesh``.  ``jitter``
    displaces sites without breaking chain bonds (transversally in dimension
    two and higher, axially in dimension one).  ``n_points`` overrides the
    per-arm count derived from ``length``.
    """

    kind: str = "one_arm"
    length: float = 10.0
    spacing: float = 0.5
    head_gap: float = 0.1
    jitter: float = 0.0
    connect_arc: bool = False
    arc_mesh: float | None = None
    n_points: int | None = None


def _window_center(window: Window) -> NDArray[np.float64]:
    if isinstance(window, Ball):
        return np.asarray(window.center, dtype=np.float64)
    return (np.asarray(window.lower) + np.asarray(window.upper)) / 2.0


def _window_axis_extent(window: Window) -> float:
    """Half-extent of the window along the first axis."""
    if isinstance(window, Ball):
        return float(window.radius)
    return float(window.upper[0] - window.lower[0]) / 2.0


def _validate_channel_geometry(spacing: float, jitter: float, a: float) -> None:
    if spacing <= 0.0:
        raise ValueError("channel spacing must be positive")
    if jitter < 0.0:
        raise ValueError("channel jitter must be nonnegative")
    if jitter >= a / 4.0:
        raise ValueError(JITTER_LIMIT_ERROR)
    # worst-case gap after jitter on both endpoints
    if math.hypot(spacing, 2.0 * jitter) >= 2.0 * a - 1e-12:
        raise ValueError(CHANNEL_BOND_ERROR)


def _arm_sites(
    center: NDArray[np.float64],
    start: float,
    sign: int,
    spacing: float,
    count: int,
    jitter: float,
    rng: np.random.Generator,
) -> NDArray[np.float64]:
    """Sites along the first axis at center + sign*(start + j*spacing)."""
    d = center.size
    pts = np.tile(center, (count, 1))
    axial = start + spacing * np.arange(count)
    pts[:, 0] += sign * axial
    if jitter > 0.0 and count > 0:
        if d == 1:
            pts[:, 0] += rng.uniform(-jitter, jitter, size=count)
        else:
            pts[:, 1:] += rng.uniform(-jitter, jitter, size=(count, d - 1))
    return pts


def _arc_sites(
    center: NDArray[np.float64],
    radius: float,
    mesh: float,
    jitter: float,
    rng: np.random.Generator,
) -> NDArray[np.float64]:
    """Half-circle connector in the first two axes, endpoints excluded."""
    if center.size < 2:
        raise ValueError("connector arc needs dimension 2 or higher")
    if mesh <= 0.0 or mesh >= 2.0 * radius:
        raise ValueError("connector mesh must fit the arc")
    dtheta = 2.0 * math.asin(mesh / (2.0 * radius))
    n_arc = max(1, math.ceil(math.pi / dtheta) - 1)
    theta = (np.arange(1, n_arc + 1) * math.pi) / (n_arc + 1)
    r = np.full(n_arc, radius)
    if jitter > 0.0:
        r = r + rng.uniform(-jitter, jitter, size=n_arc)
    pts = np.tile(center, (n_arc, 1))
    pts[:, 0] += r * np.cos(theta)
    pts[:, 1] += r * np.sin(theta)
    return pts


def build_channel(
    spec: ChannelSpec,
    window: Window,
    a: float,
    rng: np.random.Generator,
) -> GreyConfiguration:
    """Materialize a channel around a window; sites come back arm-major,
    ordered outward along each arm, connector arc last."""
    _validate_channel_geometry(spec.spacing, spec.jitter, a)
    if spec.kind not in ("one_arm", "two_arm"):
        raise ValueError("channel kind must be one_arm or two_arm")
    center = _window_center(window)
    start = _window_axis_extent(window) + spec.head_gap
    if spec.n_points is not None:
        count = int(spec.n_points)
    else:
        if spec.length <= 0.0:
            raise ValueError("channel length must be positive")
        count = int(math.floor(spec.length / spec.spacing)) + 1
    if count < 1:
        raise ValueError("channel needs at least one site")
    parts = [_arm_sites(center, start, +1, spec.spacing, count, spec.jitter, rng)]
    if spec.kind == "two_arm":
        parts.append(_arm_sites(center, start, -1, spec.spacing, count, spec.jitter, rng))
        if spec.connect_arc:
            radius = start + spec.spacing * (count - 1)
            mesh = spec.arc_mesh if spec.arc_mesh is not None else a / 2.0
            parts.append(_arc_sites(center, radius, mesh, spec.jitter, rng))
    elif spec.connect_arc:
        raise ValueError("connector arc needs two arms")
    return GreyConfiguration(np.vstack(parts))


# ---------------------------------------------------------------------------
# report plumbing


@dataclass
class ProbeRow:
    control: float
    estimate: float
    std_error: float
    bound: float
    verdict: str


@dataclass
class ProbeReport:
    probe: str
    params: dict
    rows: list[ProbeRow]
    details: dict
    verdict: str

    def to_csv(self) -> str:
        lines = [_CSV_HEADER]
        for r in self.rows:
            lines.append(
                ",".join(
                    [_fmt(r.control), _fmt(r.estimate), _fmt(r.std_error), _fmt(r.bound), r.verdict]
                )
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {
            "probe": self.probe,
            "params": _jsonable(self.params),
            "rows": [_jsonable(asdict(r)) for r in self.rows],
            "details": _jsonable(self.details),
            "verdict": self.verdict,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def write(self, path: str) -> None:
        text = self.to_csv() if path.endswith(".csv") else self.to_json()
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and (math.isinf(obj) or math.isnan(obj)):
        return repr(obj)
    return obj


def _worst(verdicts) -> str:
    pool = list(verdicts)
    if VERDICT_VIOLATED in pool:
        return VERDICT_VIOLATED
    if VERDICT_INCONCLUSIVE in pool:
        return VERDICT_INCONCLUSIVE
    return VERDICT_CONSISTENT


def _weighted_line_fit(
    x: Sequence[float], y: Sequence[float], sigma: Sequence[float]
) -> tuple[float, float, float]:
    """Weighted least squares line; returns (slope, slope_se, intercept)."""
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    sv = np.maximum(np.asarray(sigma, dtype=np.float64), 1e-300)
    w = 1.0 / (sv * sv)
    s = float(np.sum(w))
    sx = float(np.sum(w * xv))
    sy = float(np.sum(w * yv))
    sxx = float(np.sum(w * xv * xv))
    sxy = float(np.sum(w * xv * yv))
    det = s * sxx - sx * sx
    if det <= 0.0:
        raise ValueError("line fit needs at least two distinct abscissae")
    slope = (s * sxy - sx * sy) / det
    intercept = (sxx * sy - sx * sxy) / det
    slope_se = math.sqrt(s / det)
    return slope, slope_se, intercept


def _colored(points: NDArray[np.float64], spins: NDArray[np.int8]) -> ColoredConfiguration:
    return ColoredConfiguration(np.asarray(points, dtype=np.float64), np.asarray(spins, dtype=np.int8))


# ---------------------------------------------------------------------------
# influence decay through a channel (quasilocal regime)


def probe_decay(
    params: ModelParams,
    stream: RngStream,
    budget: int = 400_000,
    distances: Sequence[float] | None = None,
    window: Ball | None = None,
    spacing: float | None = None,
    head_gap: float | None = None,
    jitter: float | None = None,
) -> ProbeReport:
    """Exponential decay of far-conditioning influence in the decaying regime.

    A bonded chain runs from the window outward; at chain distance D a closed
    ring of extra sites is either appended (colored all plus or all minus) or
    left out.  The paired difference between ring and no-ring conditionings
    must fall at least as fast as three quarters of the predicted rate.  The
    plus-against-minus difference doubles as a null check.
    """
    if params.dimension != 2:
        raise ValueError("decay probe is built for dimension 2")
    if classify_regime(params) is not RegimeCase.POSITIVE:
        raise ValueError("decay probe needs the everywhere-positive switch regime")
    a = params.a
    rate_floor = 0.75 / decay_length(params)
    window = window if window is not None else Ball((0.0, 0.0), a)
    spacing = spacing if spacing is not None else 1.9 * a
    head_gap = head_gap if head_gap is not None else 0.5 * a
    jitter = jitter if jitter is not None else a / 8.0
    _validate_channel_geometry(spacing, jitter, a)
    distances = tuple(distances) if distances is not None else tuple(a * k for k in (2, 4, 6, 8, 10, 12))
    distances = tuple(sorted(distances))
    center = _window_center(window)
    r0 = _window_axis_extent(window) + head_gap
    obs = Observable(ObservableKind.INDICATOR_EMPTY)

    results = []
    zero_gap = 0.0
    zero_sigma = 0.0
    for i, dist in enumerate(distances):
        gen = stream.child(i).generator()
        count = int(math.floor(dist / spacing)) + 1
        arm = _arm_sites(center, r0, +1, spacing, count, jitter, gen)
        radius = r0 + spacing * (count - 1)
        chord = min(spacing, 2.0 * radius * 0.999)
        n_ring = max(3, math.ceil(math.pi / math.asin(chord / (2.0 * radius))))
        theta = (np.arange(n_ring) + 0.5) * (2.0 * math.pi / n_ring)
        ring = np.tile(center, (n_ring, 1))
        rr = np.full(n_ring, radius)
        if jitter > 0.0:
            rr = rr + gen.uniform(-jitter, jitter, size=n_ring)
        ring[:, 0] += rr * np.cos(theta)
        ring[:, 1] += rr * np.sin(theta)

        arm_spins = np.ones(count, dtype=np.int8)
        both = np.vstack([arm, ring])
        v_plus = _colored(both, np.concatenate([arm_spins, np.ones(n_ring, dtype=np.int8)]))
        v_minus = _colored(both, np.concatenate([arm_spins, -np.ones(n_ring, dtype=np.int8)]))
        v_none = _colored(arm, arm_spins)
        fam = eval_kernel_family(
            KernelMode.FINITE,
            obs,
            window,
            [v_plus, v_minus, v_none],
            params,
            budget,
            gen,
            pairs=[(0, 1), (2, 0)],
            proposal_intensity=params.lambda_plus,
        )
        null = fam.differences[(0, 1)]
        zero_gap = max(zero_gap, abs(null.value))
        zero_sigma = max(zero_sigma, null.std_error)
        signal = fam.differences[(2, 0)]
        results.append((float(dist), signal.value, signal.std_error))

    anchor_d, anchor_v, anchor_se = results[0]
    anchor = abs(anchor_v)
    rows = []
    for dist, value, se in results:
        if dist == anchor_d:
            bound = anchor
            verdict = VERDICT_CONSISTENT if anchor > 3.0 * anchor_se else VERDICT_INCONCLUSIVE
        else:
            shrink = math.exp(-rate_floor * (dist - anchor_d))
            bound = anchor * shrink
            comb = math.sqrt(se * se + (shrink * anchor_se) ** 2)
            verdict = VERDICT_VIOLATED if abs(value) > bound + 3.0 * comb else VERDICT_CONSISTENT
        rows.append(ProbeRow(dist, value, se, bound, verdict))

    fit_x = [d for d, v, se in results if abs(v) > 3.0 * se]
    fit_y = [math.log(abs(v)) for d, v, se in results if abs(v) > 3.0 * se]
    fit_s = [se / abs(v) for d, v, se in results if abs(v) > 3.0 * se]
    details: dict = {
        "decay_length": decay_length(params),
        "rate_floor": rate_floor,
        "null_gap_max": zero_gap,
        "null_sigma_max": zero_sigma,
        "null_verdict": VERDICT_VIOLATED if zero_gap > 3.0 * zero_sigma else VERDICT_CONSISTENT,
    }
    if len(fit_x) >= 2:
        slope, slope_se, _ = _weighted_line_fit(fit_x, fit_y, fit_s)
        rate = -slope
        details["fit_rate"] = rate
        details["fit_rate_se"] = slope_se
        details["fit_verdict"] = (
            VERDICT_VIOLATED if rate + 3.0 * slope_se < rate_floor else VERDICT_CONSISTENT
        )
    else:
        details["fit_verdict"] = VERDICT_INCONCLUSIVE
    verdict = _worst([r.verdict for r in rows] + [details["fit_verdict"], details["null_verdict"]])
    return ProbeReport(
        probe="decay",
        params={
            "a": a,
            "lambda_plus": params.lambda_plus,
            "lambda_minus": params.lambda_minus,
            "t": params.t,
            "budget": budget,
            "spacing": spacing,
            "head_gap": head_gap,
            "jitter": jitter,
        },
        rows=rows,
        details=details,
        verdict=verdict,
    )


# ---------------------------------------------------------------------------
# color discontinuity along a chain (dimension one)


def _color_chain_bound(
    params: ModelParams, mu: float, k_inner: int, k_ext: int
) -> float:
    """Closed-form gap for the merged-chain caricature.

    With the whole window plus chain fused into a single component, the
    all-minus chain and the plus-extended chain pin the component's start
    color in opposite directions; the gap of the observable between the two
    conditionings is explicit in the two start-weight ratios.
    """
    g_plus = g_of_m(1.0, params)
    g_minus = g_of_m(-1.0, params)
    log_r_minus = (k_inner + k_ext) * g_minus
    log_r_plus = k_inner * g_minus + k_ext * g_plus
    r_minus = math.exp(min(log_r_minus, 700.0))
    r_plus = math.exp(min(log_r_plus, 700.0))
    if params.is_symmetric:
        lpp = flip_kernel(params.t, 1, 1)
        lmp = flip_kernel(params.t, -1, 1)
        gap = math.exp(-mu) * (math.exp(mu * lpp) - math.exp(mu * lmp))
        q_plus = r_plus / (1.0 + r_plus)
        q_minus = r_minus / (1.0 + r_minus)
        return (q_plus - q_minus) * gap
    c = mu * (params.alpha - 1.0)
    ec = math.exp(c)

    def phi(r: float) -> float:
        return (r + 1.0) / (r * ec + 1.0)

    return math.exp(-mu) * (phi(r_minus) - phi(r_plus))


def probe_color_discontinuity(
    params: ModelParams,
    stream: RngStream,
    budget: int = 400_000,
    distances: Sequence[float] | None = None,
    window: Box | None = None,
    spacing: float | None = None,
    head_gap: float | None = None,
) -> ProbeReport:
    """Color sensitivity of the kernel to an arbitrarily distant chain tail.

    A bonded chain leaves the window; sites within distance D keep color
    minus while the tail is colored either minus or plus.  In the
    sign-changing regime the paired difference must stay above an explicit
    floor for every D (and must not trend down); in the positive regime the
    same construction must decay like the predicted rate instead.
    """
    if params.dimension != 1:
        raise ValueError("color probe is built for dimension 1")
    regime = classify_regime(params)
    if regime not in (RegimeCase.SIGN_CHANGING, RegimeCase.POSITIVE):
        raise ValueError("color probe needs a sign-changing or positive switch regime")
    a = params.a
    window = window if window is not None else Box((-0.75 * a,), (0.75 * a,))
    spacing = spacing if spacing is not None else 0.5 * a
    head_gap = head_gap if head_gap is not None else 0.1 * a
    _validate_channel_geometry(spacing, 0.0, a)
    width = float(window.upper[0] - window.lower[0])
    if width + head_gap >= 2.0 * a:
        raise ValueError("window plus head gap must fit inside one bond radius")
    distances = tuple(distances) if distances is not None else tuple(a * k for k in (2, 4, 6, 8, 10))
    distances = tuple(sorted(distances))
    mu = params.lambda_minus * window.volume()
    g_plus = g_of_m(1.0, params)
    g_minus = g_of_m(-1.0, params)
    center = _window_center(window)
    start = _window_axis_extent(window) + head_gap
    floor_mode = regime is RegimeCase.SIGN_CHANGING
    obs = Observable(
        ObservableKind.INDICATOR_ALL_PLUS if params.is_symmetric else ObservableKind.INDICATOR_EMPTY
    )

    results = []
    for i, dist in enumerate(distances):
        gen = stream.child(i).generator()
        k_inner = int(math.floor((dist - head_gap) / spacing)) + 1
        if k_inner < 1:
            raise ValueError("chain distances must reach past the head gap")
        k_ext = max(1, math.ceil((2.0 - k_inner * g_minus) / g_plus))
        total = k_inner + k_ext
        pts = _arm_sites(center, start, +1, spacing, total, 0.0, gen)
        spins_mixed = np.concatenate(
            [-np.ones(k_inner, dtype=np.int8), np.ones(k_ext, dtype=np.int8)]
        )
        spins_minus = -np.ones(total, dtype=np.int8)
        fam = eval_kernel_family(
            KernelMode.FINITE,
            obs,
            window,
            [_colored(pts, spins_mixed), _colored(pts, spins_minus)],
            params,
            budget,
            gen,
            pairs=[(0, 1)],
            proposal_intensity=params.lambda_plus,
        )
        diff = fam.differences[(0, 1)]
        # orient the gap so the expected sign is positive in both branches
        value = diff.value if params.is_symmetric else -diff.value
        bound = _color_chain_bound(params, mu, k_inner, k_ext) if floor_mode else math.nan
        results.append((float(dist), value, diff.std_error, bound, k_inner, k_ext))

    rows = []
    details: dict = {
        "regime": regime.value,
        "mode": "floor" if floor_mode else "decay_control",
        "chain_counts": [(k_in, k_ext) for _, _, _, _, k_in, k_ext in results],
        "reference_gap": (
            _color_chain_bound(
                params, mu, 1_000, max(1, math.ceil((2.0 - 1_000 * g_minus) / g_plus))
            )
            if floor_mode
            else None
        ),
    }
    if floor_mode:
        for dist, value, se, bound, _, _ in results:
            if bound <= 0.0:
                rows.append(ProbeRow(dist, value, se, bound, VERDICT_INCONCLUSIVE))
            elif value < bound - 3.0 * se:
                rows.append(ProbeRow(dist, value, se, bound, VERDICT_VIOLATED))
            else:
                rows.append(ProbeRow(dist, value, se, bound, VERDICT_CONSISTENT))
        slope, slope_se, _ = _weighted_line_fit(
            [r[0] for r in results], [r[1] for r in results], [r[2] for r in results]
        )
        details["trend_slope"] = slope
        details["trend_slope_se"] = slope_se
        details["trend_verdict"] = (
            VERDICT_VIOLATED if slope + 3.0 * slope_se < 0.0 else VERDICT_CONSISTENT
        )
        verdict = _worst([r.verdict for r in rows] + [details["trend_verdict"]])
    else:
        rate_floor = 0.75 / decay_length(params)
        anchor_d, anchor_v, anchor_se = results[0][0], results[0][1], results[0][2]
        anchor = abs(anchor_v)
        for dist, value, se, _, _, _ in results:
            if dist == anchor_d:
                bound = anchor
                v = VERDICT_CONSISTENT if anchor > 3.0 * anchor_se else VERDICT_INCONCLUSIVE
            else:
                shrink = math.exp(-rate_floor * (dist - anchor_d))
                bound = anchor * shrink
                comb = math.sqrt(se * se + (shrink * anchor_se) ** 2)
                v = VERDICT_VIOLATED if abs(value) > bound + 3.0 * comb else VERDICT_CONSISTENT
            rows.append(ProbeRow(dist, value, se, bound, v))
        details["rate_floor"] = rate_floor
        fit = [(d, v, se) for d, v, se, _, _, _ in results if abs(v) > 3.0 * se]
        if len(fit) >= 2:
            slope, slope_se, _ = _weighted_line_fit(
                [d for d, v, _ in fit],
                [math.log(abs(v)) for _, v, _ in fit],
                [se / abs(v) for _, v, se in fit],
            )
            details["fit_rate"] = -slope
            details["fit_rate_se"] = slope_se
            details["fit_verdict"] = (
                VERDICT_VIOLATED if -slope + 3.0 * slope_se < rate_floor else VERDICT_CONSISTENT
            )
        else:
            details["fit_verdict"] = VERDICT_INCONCLUSIVE
        verdict = _worst([r.verdict for r in rows] + [details["fit_verdict"]])

    return ProbeReport(
        probe="color_discontinuity",
        params={
            "a": a,
            "lambda_plus": params.lambda_plus,
            "lambda_minus": params.lambda_minus,
            "t": params.t,
            "budget": budget,
            "spacing": spacing,
            "head_gap": head_gap,
            "window_width": width,
        },
        rows=rows,
        details=details,
        verdict=verdict,
    )


# ---------------------------------------------------------------------------
# spatial discontinuity of the finite-cluster kernel (dimension two)


def probe_spatial_discontinuity(
    params: ModelParams,
    stream: RngStream,
    budget: int = 400_000,
    lengths: Sequence[float] | None = None,
    window: Ball | None = None,
    spacing: float | None = None,
    head_gap: float | None = None,
    jitter: float = 0.0,
) -> ProbeReport:
    """Sensitivity of the finite-cluster kernel to far-away chain surgery.

    Two bonded arms leave the window on opposite sides.  Stopping them at
    length n keeps two finite components; extending them to the ambient rim
    (or splicing a far connector arc between them) changes every product the
    kernel forms, no matter how large n is.  The paired difference against
    the truncated variant must stay above an explicit bridging floor, and
    the arc and rim surgeries must agree with each other.
    """
    if params.dimension != 2:
        raise ValueError("spatial probe is built for dimension 2")
    if not (params.is_symmetric and math.isinf(params.t)):
        raise ValueError("spatial probe needs the symmetric infinite-time regime")
    a = params.a
    window = window if window is not None else Ball((0.0, 0.0), a)
    spacing = spacing if spacing is not None else 1.9 * a
    head_gap = head_gap if head_gap is not None else 0.5 * a
    _validate_channel_geometry(spacing, jitter, a)
    lengths = tuple(lengths) if lengths is not None else (10.0 * a, 20.0 * a)
    lengths = tuple(sorted(lengths))
    center = _window_center(window)
    r0 = _window_axis_extent(window) + head_gap
    lam = params.lambda_minus
    mu = lam * window.volume()
    obs = Observable(ObservableKind.INDICATOR_EMPTY)

    # single-site bridging region: bonded to both arm heads at once
    reach = 2.0 * a - jitter
    heads = np.array([[r0, 0.0], [-r0, 0.0]]) + center
    grid_n = 600
    if isinstance(window, Ball):
        lo = np.asarray(window.center) - window.radius
        hi = np.asarray(window.center) + window.radius
    else:
        lo, hi = np.asarray(window.lower), np.asarray(window.upper)
    xs = lo[0] + (np.arange(grid_n) + 0.5) * (hi[0] - lo[0]) / grid_n
    ys = lo[1] + (np.arange(grid_n) + 0.5) * (hi[1] - lo[1]) / grid_n
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    cells = np.column_stack([gx.ravel(), gy.ravel()])
    inside = window.contains(cells)
    for h in heads:
        inside &= np.sum((cells - h) ** 2, axis=1) < reach * reach
    cell_area = (hi[0] - lo[0]) * (hi[1] - lo[1]) / (grid_n * grid_n)
    v_bridge = float(np.sum(inside)) * cell_area
    floor = 0.5 * (1.0 - math.exp(-lam * v_bridge)) * math.exp(-3.0 * mu)

    rows = []
    surgery_gaps = []
    for i, length in enumerate(lengths):
        gen = stream.child(i).generator()
        half = r0 + length + 8.0 * a
        ambient = Box((-half + center[0], -half + center[1]), (half + center[0], half + center[1]))
        coords = [r0]
        while coords[-1] + spacing <= half - 0.5 * a:
            coords.append(coords[-1] + spacing)
        if coords[-1] < half - 2.0 * a:
            coords.append(half - a)
        coords = np.asarray(coords)
        n_trunc = int(np.sum(coords <= r0 + length))
        arms_full = []
        arms_trunc = []
        for sign in (+1, -1):
            pts = np.tile(center, (coords.size, 1))
            pts[:, 0] += sign * coords
            if jitter > 0.0:
                pts[:, 1] += gen.uniform(-jitter, jitter, size=coords.size)
            arms_full.append(pts)
            arms_trunc.append(pts[:n_trunc])
        trunc_pts = np.vstack(arms_trunc)
        full_pts = np.vstack(arms_full)
        arc = _arc_sites(center, float(coords[n_trunc - 1]), a / 2.0, jitter, gen)
        arc_pts = np.vstack([trunc_pts, arc])
        spins = lambda pts: np.ones(pts.shape[0], dtype=np.int8)
        fam = eval_kernel_family(
            KernelMode.FREE,
            obs,
            window,
            [
                _colored(trunc_pts, spins(trunc_pts)),
                _colored(arc_pts, spins(arc_pts)),
                _colored(full_pts, spins(full_pts)),
            ],
            params,
            budget,
            gen,
            ambient=ambient,
            pairs=[(0, 1), (0, 2)],
        )
        d_arc = fam.differences[(0, 1)]
        d_rim = fam.differences[(0, 2)]
        gap = abs(d_arc.value - d_rim.value)
        gap_sigma = d_arc.std_error + d_rim.std_error
        surgery_gaps.append(
            {
                "length": float(length),
                "arc_minus_rim": d_arc.value - d_rim.value,
                "sigma": gap_sigma,
                "verdict": VERDICT_VIOLATED if gap > 3.0 * gap_sigma else VERDICT_CONSISTENT,
            }
        )
        value = d_rim.value  # truncated minus rim-extended, expected positive
        se = d_rim.std_error
        v = VERDICT_VIOLATED if value < floor - 3.0 * se else VERDICT_CONSISTENT
        rows.append(ProbeRow(float(length), value, se, floor, v))

    details = {
        "bridging_volume": v_bridge,
        "floor": floor,
        "surgery_agreement": surgery_gaps,
    }
    verdict = _worst([r.verdict for r in rows] + [g["verdict"] for g in surgery_gaps])
    return ProbeReport(
        probe="spatial_discontinuity",
        params={
            "a": a,
            "lambda_plus": params.lambda_plus,
            "lambda_minus": params.lambda_minus,
            "t": params.t,
            "budget": budget,
            "spacing": spacing,
            "head_gap": head_gap,
            "jitter": jitter,
        },
        rows=rows,
        details=details,
        verdict=verdict,
    )


# ---------------------------------------------------------------------------
# percolation sandwich (symmetric model, grey layer)


def percolation_comparator_factor(dimension: int) -> float:
    """Intensity thinning factor for the dominated-from-below comparator.

    One extra point can fuse at most k existing components, where k is the
    largest number of sites that fit strictly within bonding reach of the
    point while staying mutually unbonded; every birth therefore costs at
    most a factor 2^-k against the free process.  Exact k is used in
    dimensions one and two, a packing bound beyond.
    """
    k = {1: 2, 2: 6}.get(dimension, 3**dimension)
    return 2.0 ** (-k)


def _wilson(successes: int, n: int, z: float) -> tuple[float, float]:
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2.0 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
    return center - half, center + half


def _wilson_se(successes: int, n: int) -> float:
    lo, hi = _wilson(successes, n, 1.0)
    return (hi - lo) / 2.0


def probe_percolation(
    params: ModelParams,
    stream: RngStream,
    sizes: Sequence[float] | None = None,
    n_samples: int = 160,
    n_comparator: int = 640,
    burn_in: int = 60_000,
    thinning: int = 1_500,
    source_radius: float | None = None,
) -> ProbeReport:
    """Sandwich the grey connection probability between free comparators.

    The event asks for one component joining a central ball to the 2a-shell
    of a box.  The constrained two-color gas is dominated from above by the
    free process at the total intensity and from below by a thinned free
    process; both comparisons get Wilson intervals.  Rows carry the upper
    comparison, the lower one lives in the details, and the details also
    classify the intensity from the largest box.
    """
    if not params.is_symmetric:
        raise ValueError("percolation probe needs the symmetric model")
    a = params.a
    d = params.dimension
    sizes = tuple(sizes) if sizes is not None else (10.0 * a, 20.0 * a, 40.0 * a)
    sizes = tuple(sorted(sizes))
    source_radius = source_radius if source_radius is not None else 2.0 * a
    lam_tot = params.total_intensity
    zeta = percolation_comparator_factor(d)

    rows = []
    lower_checks = []
    largest_p = None
    for i, side in enumerate(sizes):
        half = side / 2.0
        if half <= 2.0 * a + source_radius:
            raise ValueError("percolation boxes must clear the source and the shell")
        box = Box(tuple(-half for _ in range(d)), tuple(half for _ in range(d)))
        source = Ball(tuple(0.0 for _ in range(d)), source_radius)
        target = Complement(box.shrink(2.0 * a))
        exp_n = lam_tot * box.volume()
        burn = max(burn_in, int(30 * exp_n))
        thin = max(thinning, int(3 * exp_n))
        gen = stream.child(i, 0).generator()
        samples = sample_wrm_mcmc(
            box,
            params,
            BoundaryCondition.empty(),
            gen,
            n_samples,
            burn_in=burn,
            thinning=thin,
        )
        k_wrm = sum(connects(s.grey(), a, source, target) for s in samples)
        gen_cmp = stream.child(i, 1).generator()
        k_up = 0
        k_lo = 0
        for _ in range(n_comparator):
            k_up += connects(sample_ppp(box, lam_tot, gen_cmp), a, source, target)
            k_lo += connects(sample_ppp(box, lam_tot * zeta, gen_cmp), a, source, target)
        p_wrm = k_wrm / n_samples
        p_up = k_up / n_comparator
        p_lo = k_lo / n_comparator
        se_wrm = _wilson_se(k_wrm, n_samples)
        se_up = _wilson_se(k_up, n_comparator)
        se_lo = _wilson_se(k_lo, n_comparator)
        comb_up = math.sqrt(se_wrm**2 + se_up**2)
        bound = p_up + 3.0 * comb_up
        verdict = VERDICT_VIOLATED if p_wrm > bound else VERDICT_CONSISTENT
        rows.append(ProbeRow(float(side), p_wrm, se_wrm, bound, verdict))
        comb_lo = math.sqrt(se_wrm**2 + se_lo**2)
        lower_checks.append(
            {
                "size": float(side),
                "estimate": p_wrm,
                "comparator": p_lo,
                "sigma": comb_lo,
                "verdict": VERDICT_VIOLATED if p_wrm < p_lo - 3.0 * comb_lo else VERDICT_CONSISTENT,
            }
        )
        largest_p = p_wrm

    if largest_p is None:
        raise ValueError("percolation probe needs at least one box size")
    if largest_p >= 0.5:
        intensity_class = IntensityClass.HIGH.value
    elif largest_p <= 0.05:
        intensity_class = IntensityClass.LOW.value
    else:
        intensity_class = VERDICT_INCONCLUSIVE
    details = {
        "total_intensity": lam_tot,
        "comparator_factor": zeta,
        "lower_checks": lower_checks,
        "intensity_class": intensity_class,
        "n_samples": n_samples,
        "n_comparator": n_comparator,
    }
    verdict = _worst([r.verdict for r in rows] + [c["verdict"] for c in lower_checks])
    return ProbeReport(
        probe="percolation",
        params={
            "a": a,
            "lambda_plus": params.lambda_plus,
            "lambda_minus": params.lambda_minus,
            "t": params.t,
            "dimension": d,
            "source_radius": source_radius,
        },
        rows=rows,
        details=details,
        verdict=verdict,
    )


# ---------------------------------------------------------------------------
# phase diagram tabulation


def scan_phase_diagram(
    a: float,
    dimension: int,
    lambda_pairs: Sequence[tuple[float, float]],
    times: Sequence[float],
) -> list[dict]:
    """Tabulate the kernel classification over a parameter grid.

    Each (lambda_plus, lambda_minus, t) triple yields one row per intensity
    class, since the classification depends on whether the grey layer
    percolates.
    """
    rows = []
    for lp, lm in lambda_pairs:
        for t in times:
            params = ModelParams(a=a, lambda_plus=lp, lambda_minus=lm, t=float(t), dimension=dimension)
            for ic in (IntensityClass.HIGH, IntensityClass.LOW):
                rows.append(
                    {
                        "lambda_plus": params.lambda_plus,
                        "lambda_minus": params.lambda_minus,
                        "t": params.t,
                        "intensity_class": ic.value,
                        "gibbs_class": phase_cell(params, ic).value,
                    }
                )
    return rows


def phase_scan_csv(rows: Sequence[dict]) -> str:
    lines = ["lambda_plus,lambda_minus,t,intensity_class,gibbs_class"]
    for r in rows:
        lines.append(
            ",".join(
                [
                    _fmt(r["lambda_plus"]),
                    _fmt(r["lambda_minus"]),
                    _fmt(r["t"]),
                    str(r["intensity_class"]),
                    str(r["gibbs_class"]),
                ]
            )
        )
    return "\n".join(lines) + "\n"
