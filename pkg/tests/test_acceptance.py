"""End-to-end acceptance checks for the laboratory.

One test per headline behavior, each printing a single PASS/FAIL line so a
plain ``pytest -v tests/test_acceptance.py`` reads as a checklist.  The
Monte Carlo budgets are pinned; every tolerance is stated next to the
assertion it guards.  Wall-clock ceilings are asserted where a check is
expensive enough for runaway cost to be a bug in itself.
"""

import json
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from wrmlab.cli import main
from wrmlab.geometry import (
    Ball,
    Box,
    ColoredConfiguration,
    GreyConfiguration,
    cluster_count_bound,
    cluster_decompose,
)
from wrmlab.kernels import (
    KernelMode,
    Observable,
    ObservableKind,
    eval_gamma_f,
    eval_gamma_infinity,
    eval_gamma_pm,
    eval_kernel_family,
    eval_kernel_finite_volume,
    eval_nu_color_kernel,
    log_weight_of_draw,
)
from wrmlab.model import (
    ModelParams,
    critical_time,
    decay_length,
    flip_kernel,
    g_of_m,
    log_coth,
)
from wrmlab.oracle import oracle_eval
from wrmlab.probes import (
    percolation_comparator_factor,
    probe_color_discontinuity,
    probe_decay,
    probe_percolation,
    probe_spatial_discontinuity,
)
from wrmlab.sampler import (
    BoundaryCondition,
    RngStream,
    color_weight_grey,
    constraint_ok,
    evolve_spinflip,
    sample_ppp,
    sample_wrm_exact,
    sample_wrm_mcmc,
)

CONSISTENT = "consistent"


@contextmanager
def criterion(label: str):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"[acceptance] {label}: FAIL ({time.monotonic() - start:.0f}s)", flush=True)
        raise
    print(f"[acceptance] {label}: PASS ({time.monotonic() - start:.0f}s)", flush=True)


def _spaced_spins(rng, positions, a):
    """Random spins, forced equal for points within one bond radius."""
    n = positions.shape[0]
    spins = np.where(rng.uniform(size=n) < 0.5, 1, -1).astype(np.int8)
    for i in range(n):
        for j in range(i):
            if np.linalg.norm(positions[i] - positions[j]) < 2.0 * a:
                spins[i] = spins[j]
    return spins


# ---------------------------------------------------------------------------
# 1. the three kernel evaluators agree with the quadrature oracle


def test_01_evaluators_match_quadrature_oracle():
    with criterion("01 evaluators match quadrature oracle"):
        start = time.monotonic()
        a = 0.5
        ambient = Box((-3.0,), (3.0,))
        budget = 1_000_000
        rng = np.random.default_rng(101)
        checked = 0
        for i in range(24):
            half = rng.uniform(0.10, 0.25)          # window volume 2*half <= a
            lam_plus = rng.uniform(0.3, 1.0)
            lam_minus = rng.uniform(0.1, lam_plus)
            t = rng.uniform(0.4, 2.0)
            params = ModelParams(
                dimension=1, a=a, lambda_plus=lam_plus, lambda_minus=lam_minus, t=t
            )
            window = Box((-half,), (half,))
            n_cond = i % 3
            if n_cond:
                side = rng.choice([-1.0, 1.0], size=n_cond)
                radii = half + 0.05 + rng.uniform(0.0, 1.5, size=n_cond)
                pts = (side * radii)[:, None]
                cond = ColoredConfiguration(pts, _spaced_spins(rng, pts, a))
            else:
                cond = ColoredConfiguration.empty(1)
            kind = ObservableKind.INDICATOR_EMPTY if i % 2 == 0 else ObservableKind.POINT_COUNT
            obs = Observable(kind)
            stream = RngStream(110 + i)

            runs = [
                (
                    eval_kernel_finite_volume(
                        obs, window, cond, None, params, budget, stream.child(0).generator()
                    ),
                    KernelMode.FINITE,
                ),
                (
                    eval_gamma_f(
                        obs, window, cond, params, ambient, budget, stream.child(1).generator()
                    ),
                    KernelMode.FREE,
                ),
                (
                    eval_gamma_infinity(
                        obs, window, cond, params, ambient, budget, stream.child(2).generator()
                    ),
                    KernelMode.INFINITY,
                ),
            ]
            for est, mode in runs:
                ref = oracle_eval(
                    obs,
                    window,
                    params,
                    cond_inside=cond if cond.n else None,
                    ambient=ambient,
                    mode=mode,
                )
                gap = abs(est.value - ref.value)
                tol = max(3.0 * est.std_error, ref.error_bound)
                assert gap <= tol, (
                    f"instance {i} mode {mode.value}: gap {gap:.3e} > tol {tol:.3e}"
                )
                checked += 1
        assert checked == 24 * 3
        assert time.monotonic() - start < 600.0


# ---------------------------------------------------------------------------
# 2. kernels are proper and fit together across nested windows


@pytest.mark.filterwarnings("ignore:effective sample size")
def test_02_kernels_are_proper_and_consistent():
    with criterion("02 kernels proper and consistent"):
        # properness: the constant observable integrates to exactly one
        rng = np.random.default_rng(202)
        one = ObservableKind.CONSTANT_ONE
        for i in range(100):
            a = rng.uniform(0.3, 0.7)
            half = rng.uniform(0.1, 0.4)
            lam_plus = rng.uniform(0.1, 1.0)
            flavor = i % 4
            lam_minus = lam_plus if flavor == 3 else rng.uniform(0.1, lam_plus)
            t = math.inf if i % 5 == 0 else rng.uniform(0.3, 3.0)
            params = ModelParams(
                dimension=1, a=a, lambda_plus=lam_plus, lambda_minus=lam_minus, t=t
            )
            window = Box((-half,), (half,))
            ambient = Box((-3.0,), (3.0,))
            n_cond = i % 3
            if n_cond:
                side = rng.choice([-1.0, 1.0], size=n_cond)
                pts = (side * (half + 0.05 + rng.uniform(0.0, 1.2, size=n_cond)))[:, None]
                cond = ColoredConfiguration(pts, _spaced_spins(rng, pts, a))
            else:
                cond = ColoredConfiguration.empty(1)
            gen = RngStream(2200 + i).generator()
            obs = Observable(one)
            if flavor == 0:
                est = eval_kernel_finite_volume(obs, window, cond, None, params, 400, gen)
            elif flavor == 1:
                est = eval_gamma_f(obs, window, cond, params, ambient, 400, gen)
            elif flavor == 2:
                est = eval_gamma_infinity(obs, window, cond, params, ambient, 400, gen)
            else:
                sign = 1 if i % 8 < 4 else -1
                est = eval_gamma_pm(sign, obs, window, cond, params, ambient, 400, gen)
            assert est.value == 1.0 and est.std_error == 0.0

        # consistency: conditioning the larger window's kernel on its own
        # sample and re-solving on the smaller window reproduces it
        inner_win = Box((-0.2,), (0.2,))
        outer_win = Box((-0.6,), (0.6,))
        ambient = Box((-3.0,), (3.0,))
        a = 0.5
        kinds = list(ObservableKind)
        rng = np.random.default_rng(303)
        for j in range(20):
            lam_plus = rng.uniform(0.5, 1.0)
            lam_minus = rng.uniform(0.2, lam_plus)
            t = (0.5, 0.8, 1.4)[j % 3]
            params = ModelParams(
                dimension=1, a=a, lambda_plus=lam_plus, lambda_minus=lam_minus, t=t
            )
            n_cond = 1 + j % 3
            side = rng.choice([-1.0, 1.0], size=n_cond)
            pts = (side * rng.uniform(0.65, 1.8, size=n_cond))[:, None]
            spins = np.where(rng.uniform(size=n_cond) < 0.5, 1, -1).astype(np.int8)
            cond = ColoredConfiguration(pts, spins)
            obs = Observable(kinds[j % len(kinds)], window=inner_win)
            stream = RngStream(3300 + j)

            direct = eval_gamma_infinity(
                obs, outer_win, cond, params, ambient, 400_000, stream.child(0).generator()
            )

            gen = stream.child(1).generator()
            logw, inner_conds = [], []
            for _ in range(300):
                grey = sample_ppp(outer_win, params.lambda_minus, gen)
                logw.append(
                    log_weight_of_draw(
                        grey, outer_win, params, cond_inside=cond,
                        ambient=ambient, mode=KernelMode.INFINITY,
                    )
                )
                drawn_spins = eval_nu_color_kernel(
                    grey, outer_win, params, cond_inside=cond,
                    ambient=ambient, mode=KernelMode.INFINITY,
                ).sample(gen)
                keep = ~inner_win.contains(grey.points)
                inner_conds.append(
                    ColoredConfiguration(
                        np.concatenate([grey.points[keep], cond.points]),
                        np.concatenate([drawn_spins[keep], cond.spins]),
                    )
                )
            fam = eval_kernel_family(
                KernelMode.INFINITY, obs, inner_win, inner_conds, params,
                50_000, stream.child(2).generator(), ambient=ambient, pairs=[],
            )
            h = np.array([e.value for e in fam.estimates])
            se_h = np.array([e.std_error for e in fam.estimates])
            lw = np.array(logw)
            w = np.exp(lw - lw.max())
            two_step = float(np.sum(w * h) / np.sum(w))
            var_two = float(np.sum(w**2 * ((h - two_step) ** 2 + se_h**2)) / np.sum(w) ** 2)
            sigma = math.hypot(direct.std_error, math.sqrt(var_two))
            gap = abs(direct.value - two_step)
            assert gap <= 3.0 * sigma, (
                f"conditioning {j} ({obs.kind.value}): gap {gap:.3e} > 3 sigma {3 * sigma:.3e}"
            )


# ---------------------------------------------------------------------------
# 3. coloring weights against exhaustive enumeration


def _brute_grey_weight(points: np.ndarray, params: ModelParams) -> float:
    """Sum of prod(u_spin) over colorings with no opposite pair within 2a."""
    n = points.shape[0]
    if n == 0:
        return 1.0
    signs = 1 - 2 * ((np.arange(2**n)[:, None] >> np.arange(n)) & 1)
    diff = points[:, None, :] - points[None, :, :]
    close = (np.einsum("ijk,ijk->ij", diff, diff) < (2.0 * params.a) ** 2) & ~np.eye(
        n, dtype=bool
    )
    ii, jj = np.nonzero(np.triu(close))
    ok = np.ones(2**n, dtype=bool)
    for i, j in zip(ii, jj):
        ok &= signs[:, i] == signs[:, j]
    n_plus = np.sum(signs == 1, axis=1)
    weights = params.u_plus**n_plus * params.u_minus ** (n - n_plus)
    return float(np.sum(weights[ok]))


def _enumerated_color_law(
    grey: GreyConfiguration, cond: ColoredConfiguration, params: ModelParams
) -> np.ndarray:
    """Time-t spin law of the drawn points, rebuilt cluster by cluster.

    Each merged cluster starts with a single color s whose posterior weight is
    lambda_s to the full member count (drawn and held alike) times the flip
    factors of the held spins; drawn spins then flip independently from s.
    """
    n = grey.n
    merged = np.concatenate([grey.points, cond.points], axis=0)
    decomp = cluster_decompose(GreyConfiguration(merged), params.a)
    signs = 1 - 2 * ((np.arange(2**n)[:, None] >> np.arange(n)) & 1)
    log_l = {1: math.log(params.lambda_plus), -1: math.log(params.lambda_minus)}
    log_same = math.log(flip_kernel(params.t, 1, 1))
    log_diff = math.log(flip_kernel(params.t, 1, -1))
    log_probs = np.zeros(2**n)
    for cid in decomp.cluster_ids:
        members = decomp.members(cid)
        drawn = members[members < n]
        held = members[members >= n] - n
        if drawn.size == 0:
            continue
        branch = {}
        for s in (1, -1):
            lw = members.size * log_l[s]
            for y in held:
                lw += math.log(flip_kernel(params.t, s, int(cond.spins[y])))
            branch[s] = lw
        norm = np.logaddexp(branch[1], branch[-1])
        n_up = np.sum(signs[:, drawn] == 1, axis=1)
        n_dn = drawn.size - n_up
        log_probs += np.logaddexp(
            branch[1] - norm + n_up * log_same + n_dn * log_diff,
            branch[-1] - norm + n_up * log_diff + n_dn * log_same,
        )
    return np.exp(log_probs)


def test_03_coloring_weight_identities():
    with criterion("03 coloring weight identities"):
        rng = np.random.default_rng(33)
        nu_checked = 0
        for i in range(200):
            d = 1 + i % 2
            a = rng.uniform(0.2, 0.8)
            side = rng.uniform(2.0 * a, 6.0 * a)
            n = int(rng.integers(0, 13))
            pts = rng.uniform(-side / 2.0, side / 2.0, size=(n, d))
            lam_plus = rng.uniform(0.3, 2.0)
            params = ModelParams(
                dimension=d,
                a=a,
                lambda_plus=lam_plus,
                lambda_minus=rng.uniform(0.1, lam_plus),
                t=rng.uniform(0.4, 2.0),
            )
            got = math.exp(color_weight_grey(GreyConfiguration(pts), params))
            want = _brute_grey_weight(pts, params)
            assert got == pytest.approx(want, rel=1e-12)

            if n > 10:
                continue
            window = Box(tuple(-side / 2.0 for _ in range(d)), tuple(side / 2.0 for _ in range(d)))
            if i % 2 == 0:
                n_c = 1 + int(rng.integers(0, 2))
                cpts = np.empty((n_c, d))
                for k in range(n_c):
                    axis = int(rng.integers(0, d))
                    sign = 1.0 if rng.uniform() < 0.5 else -1.0
                    cpts[k] = rng.uniform(-side / 2.0, side / 2.0, size=d)
                    cpts[k, axis] = sign * (side / 2.0 + 0.05 + rng.uniform(0.0, 1.5 * a))
                cond = ColoredConfiguration(
                    cpts, np.where(rng.uniform(size=n_c) < 0.5, 1, -1).astype(np.int8)
                )
            else:
                cond = ColoredConfiguration.empty(d)
            grey = GreyConfiguration(pts)
            mixture = eval_nu_color_kernel(
                grey, window, params, cond_inside=cond if cond.n else None
            )
            reference = _enumerated_color_law(grey, cond, params)
            total = 0.0
            for code in range(2**n):
                sp = (1 - 2 * ((code >> np.arange(n)) & 1)).astype(np.int8)
                got_p = math.exp(mixture.log_prob(sp))
                assert got_p == pytest.approx(reference[code], rel=1e-12)
                total += got_p
            assert total == pytest.approx(1.0, abs=1e-10)
            nu_checked += 1
        assert nu_checked >= 80


# ---------------------------------------------------------------------------
# 4. closed-form constants


def test_04_closed_form_constants():
    with criterion("04 closed-form constants"):
        def within_ulp(x, y, k=4.0):
            return abs(x - y) <= k * np.spacing(max(abs(x), abs(y)))

        t_21 = critical_time(ModelParams(dimension=1, a=1.0, lambda_plus=2.0, lambda_minus=1.0, t=1.0))
        t_31 = critical_time(ModelParams(dimension=1, a=1.0, lambda_plus=3.0, lambda_minus=1.0, t=1.0))
        assert within_ulp(t_21, 0.5 * math.log(3.0))
        assert within_ulp(t_31, 0.5 * math.log(2.0))

        rng = np.random.default_rng(44)
        for i in range(1000):
            lam_plus = math.exp(rng.uniform(math.log(0.05), math.log(50.0)))
            lam_minus = lam_plus * rng.uniform(0.02, 0.95)
            a = rng.uniform(0.2, 3.0)
            base = ModelParams(dimension=1, a=a, lambda_plus=lam_plus, lambda_minus=lam_minus, t=1.0)
            t_g = critical_time(base)
            t = math.inf if i % 10 == 0 else t_g * rng.uniform(1.05, 5.0)
            params = ModelParams(dimension=1, a=a, lambda_plus=lam_plus, lambda_minus=lam_minus, t=t)
            lhs = 1.0 / decay_length(params)
            rhs = g_of_m(-1.0, params) / (2.0 * a)
            assert within_ulp(lhs, rhs)

            at_cross = ModelParams(
                dimension=1, a=a, lambda_plus=lam_plus, lambda_minus=lam_minus, t=t_g
            )
            scale = max(
                abs(math.log(lam_plus)), abs(math.log(lam_minus)), t_g, abs(log_coth(t_g))
            )
            assert abs(g_of_m(-1.0, at_cross)) <= 4.0 * np.spacing(scale)

        assert percolation_comparator_factor(1) == 2.0**-2
        assert percolation_comparator_factor(2) == 2.0**-6
        assert percolation_comparator_factor(3) == 2.0 ** -(3**3)


# ---------------------------------------------------------------------------
# 5. spin-flip dynamics: magnetization follows the damping law


def test_05_spin_flip_law_of_large_numbers():
    with criterion("05 spin-flip magnetization law"):
        start = time.monotonic()
        n = 10_000
        pts = (np.arange(n) * 0.2)[:, None]        # bonded chain, spacing 0.4a
        cfg = ColoredConfiguration(pts, np.ones(n, dtype=np.int8))
        for k, t in enumerate((0.2, 0.5, 1.0, 2.0)):
            evolved = evolve_spinflip(cfg, t, RngStream(55).child(k).generator())
            assert evolved.points.tobytes() == cfg.points.tobytes()
            m_hat = float(np.mean(evolved.spins))
            m = math.exp(-2.0 * t)
            sigma = math.sqrt((1.0 - m * m) / n)
            assert abs(m_hat - m) <= 4.0 * sigma, f"t={t}: {m_hat} vs {m}"
        assert time.monotonic() - start < 30.0


# ---------------------------------------------------------------------------
# 6. boundary influence decays above the critical time


def test_06_influence_decay_above_critical_time():
    with criterion("06 influence decay above critical time"):
        start = time.monotonic()
        params = ModelParams(
            dimension=2, a=1.0, lambda_plus=0.6, lambda_minus=0.15, t=math.inf
        )
        report = probe_decay(
            params,
            RngStream(606),
            budget=1_000_000,
            distances=tuple(2.0 * k for k in range(1, 7)),
        )
        assert report.verdict == CONSISTENT
        assert all(r.verdict == CONSISTENT for r in report.rows)
        assert report.details["null_verdict"] == CONSISTENT
        assert report.details["rate_floor"] == 0.75 / decay_length(params)
        assert report.details["fit_verdict"] == CONSISTENT
        assert report.details["fit_rate"] >= report.details["rate_floor"]
        assert time.monotonic() - start < 1800.0


# ---------------------------------------------------------------------------
# 7. color discontinuity below the critical time, with decay control


def _chain_proof_floor(params: ModelParams, dist: float, report) -> float:
    """Explicit lower bound for the two-conditioning gap of a merged chain.

    Rebuilt from the chain geometry the probe reports, independently of the
    probe's own closed form: the chain's start-weight ratios collapse to a
    ratio gap delta, and the window contributes its empty-draw mass.
    """
    spacing = report.params["spacing"]
    head_gap = report.params["head_gap"]
    mu = params.lambda_minus * report.params["window_width"]
    g_plus = g_of_m(1.0, params)
    g_minus = g_of_m(-1.0, params)
    k_in = math.floor((dist - head_gap) / spacing) + 1
    k_ext = max(1, math.ceil((2.0 - k_in * g_minus) / g_plus))
    x_plus = k_in * g_minus + k_ext * g_plus
    r_m = math.exp((k_in + k_ext) * g_minus)
    assert x_plus >= 2.0 and r_m < 0.5
    drop = (1.0 - math.exp(-x_plus)) / (1.0 - r_m)
    if params.is_symmetric:
        delta = flip_kernel(params.t, 1, 1) / flip_kernel(params.t, -1, 1) - drop
        assert delta > 0.0
        return delta * math.exp(-mu)
    delta = params.alpha - drop
    assert delta > 0.0
    return delta * math.exp(-2.0 * mu)


def test_07_color_discontinuity_below_critical_time():
    with criterion("07 color discontinuity below critical time"):
        base = dict(dimension=1, a=0.5, lambda_plus=8.0, lambda_minus=2.0)
        t_g = critical_time(ModelParams(**base, t=1.0))
        distances = (5.0, 10.0, 20.0)              # 10a, 20a, 40a
        below = ModelParams(**base, t=0.5 * t_g)

        floor_run = probe_color_discontinuity(
            below, RngStream(707), budget=400_000, distances=distances
        )
        assert floor_run.details["mode"] == "floor"
        assert floor_run.verdict == CONSISTENT
        for row in floor_run.rows:
            floor = _chain_proof_floor(below, row.control, floor_run)
            assert floor <= row.bound            # cruder than the closed form
            assert row.estimate - 3.0 * row.std_error > floor, (
                f"D={row.control}: {row.estimate} not above floor {floor}"
            )
        assert floor_run.details["trend_verdict"] == CONSISTENT
        slope = floor_run.details["trend_slope"]
        slope_se = floor_run.details["trend_slope_se"]
        assert slope + 3.0 * slope_se >= 0.0

        control = probe_color_discontinuity(
            ModelParams(**base, t=2.0 * t_g), RngStream(708), budget=400_000,
            distances=distances,
        )
        assert control.details["mode"] == "decay_control"
        assert control.verdict == CONSISTENT
        assert control.details["fit_verdict"] == CONSISTENT

        sym = ModelParams(dimension=1, a=0.5, lambda_plus=4.0, lambda_minus=4.0, t=0.7)
        symmetric = probe_color_discontinuity(
            sym, RngStream(709), budget=400_000, distances=distances
        )
        assert symmetric.details["mode"] == "floor"
        assert symmetric.verdict == CONSISTENT
        for row in symmetric.rows:
            floor = _chain_proof_floor(sym, row.control, symmetric)
            assert floor <= row.bound
            assert row.estimate - 3.0 * row.std_error > floor
        assert symmetric.details["trend_verdict"] == CONSISTENT


# ---------------------------------------------------------------------------
# 8. spatial discontinuity of the finite-cluster kernel at infinite time


def test_08_spatial_discontinuity_at_infinite_time():
    with criterion("08 spatial discontinuity at infinite time"):
        params = ModelParams(
            dimension=2, a=1.0, lambda_plus=0.5, lambda_minus=0.5, t=math.inf
        )
        report = probe_spatial_discontinuity(
            params, RngStream(505), budget=400_000, lengths=(10.0, 20.0)
        )
        assert report.verdict == CONSISTENT
        mu = params.lambda_minus * math.pi * params.a**2
        floor = 0.5 * math.exp(-2.0 * mu)
        for row in report.rows:
            assert row.verdict == CONSISTENT
            assert row.estimate >= floor - 3.0 * row.std_error, (
                f"length {row.control}: {row.estimate} below {floor}"
            )
        for surgery in report.details["surgery_agreement"]:
            assert surgery["verdict"] == CONSISTENT


# ---------------------------------------------------------------------------
# 9. percolation sandwich across the free-process threshold


def test_09_percolation_sandwich():
    with criterion("09 percolation sandwich"):
        start = time.monotonic()
        sizes = (10.0, 20.0, 40.0)
        classes = {}
        for k, lam_tot in enumerate((0.15, 0.36, 2.0)):
            params = ModelParams(
                dimension=2, a=1.0,
                lambda_plus=lam_tot / 2.0, lambda_minus=lam_tot / 2.0, t=1.0,
            )
            report = probe_percolation(params, RngStream(909).child(k), sizes=sizes)
            assert report.verdict == CONSISTENT
            assert all(r.verdict == CONSISTENT for r in report.rows)
            assert all(c["verdict"] == CONSISTENT for c in report.details["lower_checks"])
            classes[lam_tot] = report.details["intensity_class"]
        assert classes[0.15] == "low"
        assert classes[2.0] == "high"
        assert time.monotonic() - start < 3600.0


# ---------------------------------------------------------------------------
# 10. determinism and structural bounds


def test_10_determinism_and_structural_bounds(tmp_path, capsys):
    with criterion("10 determinism and structural bounds"):
        config = tmp_path / "cfg.toml"
        config.write_text(
            "\n".join(
                [
                    "seed = 4242",
                    "",
                    "[model]",
                    "dimension = 1",
                    "a = 0.5",
                    "lambda_plus = 0.9",
                    "lambda_minus = 0.3",
                    "t = 0.8",
                    "",
                    "[windows.domain]",
                    'kind = "box"',
                    "lower = [-2.0]",
                    "upper = [2.0]",
                    "",
                    "[sample]",
                    'method = "exact"',
                    "n_samples = 6",
                    "",
                ]
            )
        )
        out = tmp_path / "out"
        assert main(["sample", "--config", str(config), "--out", str(out)]) == 0
        first = {p.name: p.read_bytes() for p in out.iterdir()}
        assert main(["sample", "--config", str(config), "--out", str(out)]) == 0
        second = {p.name: p.read_bytes() for p in out.iterdir()}
        capsys.readouterr()
        assert first == second and "samples.jsonl" in first

        cases = [
            (
                Box((-2.0,), (2.0,)),
                ModelParams(dimension=1, a=0.5, lambda_plus=0.8, lambda_minus=0.5, t=0.9),
            ),
            (
                Box((-1.5, -1.5), (1.5, 1.5)),
                ModelParams(dimension=2, a=0.4, lambda_plus=0.6, lambda_minus=0.6, t=1.0),
            ),
        ]
        for idx, (window, params) in enumerate(cases):
            bound = cluster_count_bound(window, params.a)
            gen = RngStream(880).child(idx).generator()
            draws = [sample_wrm_exact(window, params, BoundaryCondition.empty(), gen)
                     for _ in range(60)]
            draws += sample_wrm_mcmc(
                window, params, BoundaryCondition.all_plus(), RngStream(881).child(idx).generator(),
                40, burn_in=20_000, thinning=300,
            )
            for draw in draws:
                assert constraint_ok(draw, params.a)
                if draw.n:
                    assert cluster_decompose(draw.grey(), params.a).n_clusters <= bound
