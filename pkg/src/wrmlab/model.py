"""Model parameters and closed-form quantities.

The gas has two species with activities lambda_plus >= lambda_minus > 0 and
hard-core radius a; opposite colors are forbidden within distance 2a.  Spins
then flip independently in continuous time, which mixes the two colors with
the symmetric kernel `flip_kernel`.  Everything here is elementary algebra
on (lambda_plus, lambda_minus, t); the sampling and kernel machinery lives
in the sibling modules.

All weight-like quantities are handled in the log domain.  Observation times
below TINY_TIME emit a warning because log coth t grows like -log t there
and downstream weights saturate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

TINY_TIME = 1e-6

EMPTY_MAGNETIZATION_ERROR = "magnetization undefined on empty set"
NO_DECAY_RATE_ERROR = "no positive decay rate"
ZERO_ACTIVITY_ERROR = "activity ratio needs positive activities"


class RegimeCase(Enum):
    """Sign pattern of the per-point switch cost g over m in [-1, 1]."""

    POSITIVE = "positive"                      # asymmetric, t beyond the critical time
    IDENTICALLY_ZERO = "identically_zero"      # symmetric, infinite time
    VANISHING_AT_MINUS_ONE = "vanishing_at_minus_one"  # asymmetric, exactly critical time
    SIGN_CHANGING = "sign_changing"            # everything else


class GibbsClass(Enum):
    QUASILOCAL = "q"
    ALMOST_SURELY_QUASILOCAL = "asq_non_q"
    NOT_ALMOST_SURELY_QUASILOCAL = "non_asq"


class IntensityClass(Enum):
    HIGH = "high"
    LOW = "low"


@dataclass(frozen=True)
class ModelParams:
    """Static model parameters.

    t may be math.inf (fully mixed colors); t must be positive.  Inputs with
    lambda_plus < lambda_minus are normalized by swapping, since the model is
    invariant under a global color swap.
    """

    dimension: int
    a: float
    lambda_plus: float
    lambda_minus: float
    t: float

    def __post_init__(self) -> None:
        if self.dimension not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2, or 3")
        if not (self.a > 0.0):
            raise ValueError("hard-core radius must be positive")
        if not (self.lambda_plus >= 0.0 and self.lambda_minus >= 0.0):
            raise ValueError("activities must be nonnegative")
        if not (self.t > 0.0):
            raise ValueError("observation time must be positive (may be inf)")
        if self.lambda_plus < self.lambda_minus:
            lp, lm = self.lambda_minus, self.lambda_plus
            object.__setattr__(self, "lambda_plus", lp)
            object.__setattr__(self, "lambda_minus", lm)
        if math.isfinite(self.t) and self.t < TINY_TIME:
            warnings.warn(
                f"observation time {self.t} below {TINY_TIME}: switch weights saturate",
                RuntimeWarning,
                stacklevel=2,
            )

    @property
    def alpha(self) -> float:
        """Activity ratio lambda_plus / lambda_minus, >= 1 after normalization."""
        if self.lambda_minus == 0.0:
            raise ValueError(ZERO_ACTIVITY_ERROR)
        return self.lambda_plus / self.lambda_minus

    @property
    def log_alpha(self) -> float:
        if self.lambda_minus == 0.0:
            raise ValueError(ZERO_ACTIVITY_ERROR)
        # log1p keeps relative accuracy when the activities nearly agree
        return math.log1p((self.lambda_plus - self.lambda_minus) / self.lambda_minus)

    @property
    def total_intensity(self) -> float:
        return self.lambda_plus + self.lambda_minus

    @property
    def u_plus(self) -> float:
        if self.total_intensity == 0.0:
            raise ValueError(ZERO_ACTIVITY_ERROR)
        return self.lambda_plus / self.total_intensity

    @property
    def u_minus(self) -> float:
        if self.total_intensity == 0.0:
            raise ValueError(ZERO_ACTIVITY_ERROR)
        return self.lambda_minus / self.total_intensity

    @property
    def is_symmetric(self) -> bool:
        return self.lambda_plus == self.lambda_minus


def flip_kernel(t: float, spin_from: int, spin_to: int) -> float:
    """Transition probability of one spin over time t.

    Same sign: (1 + exp(-2t)) / 2; opposite sign: (1 - exp(-2t)) / 2.
    """
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    if spin_from not in (-1, 1) or spin_to not in (-1, 1):
        raise ValueError("spins must be -1 or +1")
    damp = 0.0 if math.isinf(t) else math.exp(-2.0 * t)
    return 0.5 * (1.0 + damp) if spin_from == spin_to else 0.5 * (1.0 - damp)


def log_coth(t: float) -> float:
    """log coth t = log((1 + exp(-2t)) / (1 - exp(-2t))), 0 at t = inf."""
    if math.isinf(t):
        return 0.0
    if not (t > 0.0):
        raise ValueError("time must be positive")
    if t < TINY_TIME:
        warnings.warn(
            f"observation time {t} below {TINY_TIME}: log coth t saturates",
            RuntimeWarning,
            stacklevel=2,
        )
        # coth t ~ 1/t for small t; avoids tanh underflow concerns
        return -math.log(t) + math.log1p(t * t / 3.0)
    return -math.log(math.tanh(t))


def magnetization(spins) -> float:
    """Mean spin of a colored configuration."""
    sp = np.asarray(getattr(spins, "spins", spins))
    if sp.size == 0:
        raise ValueError(EMPTY_MAGNETIZATION_ERROR)
    return float(np.mean(sp))


def g_of_m(m: float, params: ModelParams) -> float:
    """Per-point switch cost at cluster magnetization m (affine in m)."""
    if not (-1.0 - 1e-12 <= m <= 1.0 + 1e-12):
        raise ValueError("magnetization must lie in [-1, 1]")
    return params.log_alpha + m * log_coth(params.t)


def switch_log_rho_from_counts(count: int, spin_sum: float, params: ModelParams) -> float:
    """log of the cluster switch weight from (point count, spin sum).

    rho = exp(-|C| g(m(C))) and |C| g(m) = |C| log alpha + (sum of spins)
    log coth t, so the weight factorizes additively over disjoint parts.
    Empty part: log rho = 0.
    """
    if count == 0:
        return 0.0
    return -(count * params.log_alpha + float(spin_sum) * log_coth(params.t))


def switch_rho(cluster, params: ModelParams) -> float:
    """log switch weight of a colored cluster (spins array or configuration)."""
    sp = np.asarray(getattr(cluster, "spins", cluster))
    return switch_log_rho_from_counts(int(sp.size), float(np.sum(sp)) if sp.size else 0.0, params)


def critical_time(params: ModelParams) -> float:
    """Time at which g(-1) crosses zero; inf for the symmetric model.

    Equals (1/2) log((lambda_plus + lambda_minus) / (lambda_plus -
    lambda_minus)); the atanh form keeps full precision at extreme ratios.
    """
    if params.is_symmetric:
        return math.inf
    return math.atanh(params.lambda_minus / params.lambda_plus)


def decay_length(params: ModelParams) -> float:
    """Length R with 1/R = g(-1) / (2a); defined when g(-1) > 0.

    Requires lambda_plus > lambda_minus and t beyond the critical time,
    otherwise raises with NO_DECAY_RATE_ERROR.
    """
    g_minus_one = params.log_alpha - log_coth(params.t)
    if not (g_minus_one > 0.0):
        raise ValueError(NO_DECAY_RATE_ERROR)
    return 2.0 * params.a / g_minus_one


def classify_regime(params: ModelParams) -> RegimeCase:
    if params.is_symmetric:
        return RegimeCase.IDENTICALLY_ZERO if math.isinf(params.t) else RegimeCase.SIGN_CHANGING
    t_g = critical_time(params)
    if params.t > t_g:
        return RegimeCase.POSITIVE
    if params.t == t_g:
        return RegimeCase.VANISHING_AT_MINUS_ONE
    return RegimeCase.SIGN_CHANGING


def phase_cell(params: ModelParams, intensity: IntensityClass | str) -> GibbsClass:
    """Predicted Gibbs classification for a (params, intensity-class) cell.

    The percolation side is an input: percolation is a property of the
    starting measure, decided elsewhere (or assumed).
    """
    cls = IntensityClass(intensity) if not isinstance(intensity, IntensityClass) else intensity
    regime = classify_regime(params)
    if regime is RegimeCase.POSITIVE:
        return GibbsClass.QUASILOCAL
    if regime is RegimeCase.VANISHING_AT_MINUS_ONE:
        return GibbsClass.ALMOST_SURELY_QUASILOCAL
    # sign-changing or identically zero: discontinuities ride on percolation
    if cls is IntensityClass.HIGH:
        return GibbsClass.NOT_ALMOST_SURELY_QUASILOCAL
    return GibbsClass.ALMOST_SURELY_QUASILOCAL
