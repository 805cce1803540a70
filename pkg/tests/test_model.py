import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wrmlab.model import (
    EMPTY_MAGNETIZATION_ERROR,
    NO_DECAY_RATE_ERROR,
    ZERO_ACTIVITY_ERROR,
    GibbsClass,
    IntensityClass,
    ModelParams,
    RegimeCase,
    classify_regime,
    critical_time,
    decay_length,
    flip_kernel,
    g_of_m,
    log_coth,
    magnetization,
    phase_cell,
    switch_log_rho_from_counts,
    switch_rho,
)

times = st.one_of(
    st.floats(min_value=1e-3, max_value=50.0, allow_nan=False),
    st.just(math.inf),
)
activities = st.floats(min_value=1e-3, max_value=50.0, allow_nan=False)


def params_1d(lp, lm, t):
    return ModelParams(dimension=1, a=0.5, lambda_plus=lp, lambda_minus=lm, t=t)


# -- parameters -------------------------------------------------------------


def test_params_swap_normalizes_activities():
    p = params_1d(0.2, 0.9, 1.0)
    assert p.lambda_plus == 0.9 and p.lambda_minus == 0.2
    assert p.alpha == pytest.approx(4.5)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(dimension=4, a=0.5, lambda_plus=1.0, lambda_minus=1.0, t=1.0)
    with pytest.raises(ValueError):
        params_1d(-1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        params_1d(1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        ModelParams(dimension=1, a=0.0, lambda_plus=1.0, lambda_minus=1.0, t=1.0)


def test_tiny_time_warns():
    with pytest.warns(RuntimeWarning):
        params_1d(1.0, 1.0, 1e-9)


def test_zero_activity_guards():
    p = params_1d(0.0, 0.0, 1.0)
    assert p.total_intensity == 0.0
    for attr in ("alpha", "log_alpha", "u_plus", "u_minus"):
        with pytest.raises(ValueError, match=ZERO_ACTIVITY_ERROR):
            getattr(p, attr)
    # symmetric zero-activity still classifies without touching the ratio
    assert classify_regime(p) is RegimeCase.SIGN_CHANGING


def test_intensity_shares_sum_to_one():
    p = params_1d(0.6, 0.15, 1.0)
    assert p.u_plus + p.u_minus == pytest.approx(1.0)
    assert p.u_plus == pytest.approx(0.8)


# -- flip kernel ------------------------------------------------------------


@given(times)
def test_flip_kernel_rows_sum_to_one_exactly(t):
    for s in (-1, 1):
        assert flip_kernel(t, s, 1) + flip_kernel(t, s, -1) == 1.0


@given(times)
def test_flip_kernel_symmetric_in_spin_labels(t):
    assert flip_kernel(t, 1, 1) == flip_kernel(t, -1, -1)
    assert flip_kernel(t, 1, -1) == flip_kernel(t, -1, 1)


def test_flip_kernel_limits():
    assert flip_kernel(math.inf, 1, 1) == 0.5
    assert flip_kernel(math.inf, 1, -1) == 0.5
    assert flip_kernel(0.0, 1, 1) == 1.0
    assert flip_kernel(0.0, 1, -1) == 0.0


def test_flip_kernel_rejects_bad_arguments():
    with pytest.raises(ValueError):
        flip_kernel(-0.1, 1, 1)
    with pytest.raises(ValueError):
        flip_kernel(1.0, 0, 1)


def test_same_spin_probability_matches_damping():
    for t in (0.2, 0.5, 1.0, 2.0):
        assert flip_kernel(t, 1, 1) == pytest.approx(0.5 * (1.0 + math.exp(-2.0 * t)))


# -- switch cost g and cluster weights ----------------------------------------


def test_log_coth_known_values():
    assert log_coth(math.inf) == 0.0
    t = 0.7
    assert log_coth(t) == pytest.approx(math.log(1.0 / math.tanh(t)), rel=1e-14)


@settings(max_examples=200)
@given(activities, activities, times, st.floats(min_value=-1.0, max_value=1.0))
def test_g_is_affine_in_magnetization(lp, lm, t, m):
    if lm > lp:
        lp, lm = lm, lp
    p = params_1d(lp, lm, t)
    lhs = g_of_m(m, p)
    rhs = p.log_alpha + m * log_coth(t)
    assert lhs == rhs  # same expression, bit for bit


def test_g_endpoints():
    p = params_1d(2.0, 1.0, 0.5)
    assert g_of_m(1.0, p) == pytest.approx(math.log(2.0) + log_coth(0.5))
    assert g_of_m(-1.0, p) == pytest.approx(math.log(2.0) - log_coth(0.5))
    with pytest.raises(ValueError):
        g_of_m(1.5, p)


@settings(max_examples=100)
@given(
    st.integers(min_value=0, max_value=40),
    st.integers(min_value=0, max_value=40),
    st.integers(min_value=-40, max_value=40),
    st.integers(min_value=-40, max_value=40),
)
def test_switch_log_rho_is_additive_over_disjoint_parts(n1, n2, s1, s2):
    if abs(s1) > n1 or (s1 - n1) % 2:
        s1 = n1 % 2
    if abs(s2) > n2 or (s2 - n2) % 2:
        s2 = n2 % 2
    p = params_1d(3.0, 1.0, 0.8)
    joint = switch_log_rho_from_counts(n1 + n2, s1 + s2, p)
    split = switch_log_rho_from_counts(n1, s1, p) + switch_log_rho_from_counts(n2, s2, p)
    assert joint == pytest.approx(split, abs=1e-12)


def test_switch_rho_from_spin_array_matches_counts():
    p = params_1d(2.0, 0.5, 1.2)
    spins = np.array([1, 1, -1, 1], dtype=np.int8)
    assert switch_rho(spins, p) == switch_log_rho_from_counts(4, 2, p)


def test_switch_log_rho_empty_part_is_zero():
    p = params_1d(2.0, 0.5, 1.2)
    assert switch_log_rho_from_counts(0, 0, p) == 0.0


def test_magnetization_mean_spin():
    assert magnetization(np.array([1, 1, -1, -1, 1], dtype=np.int8)) == pytest.approx(0.2)
    with pytest.raises(ValueError, match=EMPTY_MAGNETIZATION_ERROR):
        magnetization(np.array([], dtype=np.int8))


# -- critical time and regimes -----------------------------------------------


def test_critical_time_closed_forms():
    assert critical_time(params_1d(2.0, 1.0, 1.0)) == pytest.approx(0.5 * math.log(3.0), rel=1e-15)
    assert critical_time(params_1d(3.0, 1.0, 1.0)) == pytest.approx(0.5 * math.log(2.0), rel=1e-15)
    assert critical_time(params_1d(1.0, 1.0, 1.0)) == math.inf


def test_alpha_four_critical_time_is_scale_free():
    expect = 0.5 * math.log(5.0 / 3.0)
    for scale in (0.15, 1.0, 7.0):
        p = params_1d(4.0 * scale, scale, 1.0)
        assert critical_time(p) == pytest.approx(expect, rel=1e-14)


@settings(max_examples=300)
@given(activities, activities)
def test_g_at_minus_one_vanishes_at_the_critical_time(lp, lm):
    if lp == lm:
        return
    if lm > lp:
        lp, lm = lm, lp
    t_g = critical_time(params_1d(lp, lm, 1.0))
    value = g_of_m(-1.0, params_1d(lp, lm, t_g))
    # ulp measured at the largest magnitude entering the cancellation
    scale = max(abs(math.log(lp)), abs(math.log(lm)), t_g, abs(log_coth(t_g)))
    assert abs(value) <= 4.0 * np.spacing(scale)


@settings(max_examples=300)
@given(activities, activities, times)
def test_decay_length_inverts_the_rate(lp, lm, t):
    if lm > lp:
        lp, lm = lm, lp
    p = params_1d(lp, lm, t)
    g_minus = g_of_m(-1.0, p) if lm > 0 else math.inf
    if lp == lm or not (g_minus > 0.0):
        with pytest.raises(ValueError, match=NO_DECAY_RATE_ERROR):
            decay_length(p)
        return
    r = decay_length(p)
    recon = 2.0 * p.a / r
    assert abs(recon - g_minus) <= 4.0 * np.spacing(abs(g_minus))


def scan_sign_pattern(p, n_grid=2001):
    ms = np.linspace(-1.0, 1.0, n_grid)
    vals = np.array([g_of_m(m, p) for m in ms])
    if np.all(vals == 0.0):
        return RegimeCase.IDENTICALLY_ZERO
    if np.all(vals > 0.0):
        return RegimeCase.POSITIVE
    if vals[0] == 0.0 and np.all(vals[1:] > 0.0):
        return RegimeCase.VANISHING_AT_MINUS_ONE
    return RegimeCase.SIGN_CHANGING


@settings(max_examples=300, deadline=None)
@given(activities, activities, times)
def test_classify_regime_agrees_with_a_sign_scan(lp, lm, t):
    if lm > lp:
        lp, lm = lm, lp
    p = params_1d(lp, lm, t)
    if math.isfinite(t) and log_coth(t) == 0.0:
        return  # t large enough that the slope underflows; scan is blind here
    claimed = classify_regime(p)
    if claimed is RegimeCase.VANISHING_AT_MINUS_ONE:
        # boundary case, only reachable with t == t_G exactly
        assert p.t == critical_time(p)
        return
    if lp != lm:
        edge = abs(g_of_m(-1.0, p))
        scale = max(abs(math.log(lp)), abs(math.log(lm)), abs(log_coth(t)))
        if edge <= 4.0 * np.spacing(scale):
            return  # t within rounding of the critical time; sign unresolved
    assert scan_sign_pattern(p) is claimed


def test_regime_boundary_cases():
    sym_inf = params_1d(1.0, 1.0, math.inf)
    assert classify_regime(sym_inf) is RegimeCase.IDENTICALLY_ZERO
    sym_fin = params_1d(1.0, 1.0, 0.5)
    assert classify_regime(sym_fin) is RegimeCase.SIGN_CHANGING
    asym = params_1d(2.0, 1.0, 1.0)
    t_g = critical_time(asym)
    assert classify_regime(params_1d(2.0, 1.0, t_g)) is RegimeCase.VANISHING_AT_MINUS_ONE
    assert classify_regime(params_1d(2.0, 1.0, 2.0 * t_g)) is RegimeCase.POSITIVE
    assert classify_regime(params_1d(2.0, 1.0, 0.5 * t_g)) is RegimeCase.SIGN_CHANGING


# -- phase table ---------------------------------------------------------------


@pytest.mark.parametrize(
    "lp,lm,t,intensity,expected",
    [
        (2.0, 1.0, 5.0, "high", GibbsClass.QUASILOCAL),
        (2.0, 1.0, 5.0, "low", GibbsClass.QUASILOCAL),
        (2.0, 1.0, 0.1, "high", GibbsClass.NOT_ALMOST_SURELY_QUASILOCAL),
        (2.0, 1.0, 0.1, "low", GibbsClass.ALMOST_SURELY_QUASILOCAL),
        (1.0, 1.0, math.inf, "high", GibbsClass.NOT_ALMOST_SURELY_QUASILOCAL),
        (1.0, 1.0, math.inf, "low", GibbsClass.ALMOST_SURELY_QUASILOCAL),
        (1.0, 1.0, 0.7, "high", GibbsClass.NOT_ALMOST_SURELY_QUASILOCAL),
    ],
)
def test_phase_cell_table(lp, lm, t, intensity, expected):
    assert phase_cell(params_1d(lp, lm, t), intensity) is expected


def test_phase_cell_critical_line_is_intensity_independent():
    p = params_1d(2.0, 1.0, critical_time(params_1d(2.0, 1.0, 1.0)))
    assert phase_cell(p, IntensityClass.HIGH) is GibbsClass.ALMOST_SURELY_QUASILOCAL
    assert phase_cell(p, IntensityClass.LOW) is GibbsClass.ALMOST_SURELY_QUASILOCAL


def test_gibbs_class_values():
    assert GibbsClass.QUASILOCAL.value == "q"
    assert GibbsClass.ALMOST_SURELY_QUASILOCAL.value == "asq_non_q"
    assert GibbsClass.NOT_ALMOST_SURELY_QUASILOCAL.value == "non_asq"
