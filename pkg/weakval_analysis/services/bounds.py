"""
Series bounds and the special-function identities behind them.

Moment norms of the Gaussian pointer, the geometric-series error bound and
the coupling conditions derived from it, plus the double factorial, gamma
and factorial identities it relies on. Everything factorial-sized is kept
in natural-log domain; (2j-1)!! overflows a double near j = 150.
"""
import logging
import math
from typing import Literal

import numpy as np
from pydantic import Field

from .common import SUPPORT_TOL, CouplingTooStrongError, FrozenModel
from .gaussian_probe import GaussianParams
from .hilbert import Observable, SystemState
from .weakcore import CouplingConfig, WeakValue, weak_value, weak_value_power

logger = logging.getLogger(__name__)

BoundMode = Literal["operator-norm", "compact-support"]

MUCH_LESS_MARGIN = 100.0


class AppendixBInputs(FrozenModel):
    op_norm: float = Field(ge=0.0, allow_inf_nan=False)
    overlap_mag: float = Field(gt=0.0, le=1.0)
    a_max: float = Field(ge=0.0, allow_inf_nan=False)
    nu: float = Field(gt=0.0, lt=1.0)
    epsilon_delta: float = Field(ge=0.0, allow_inf_nan=False)


class LogMagnitude(FrozenModel):
    """Natural log of a nonnegative quantity; -inf encodes zero."""

    log_value: float

    @classmethod
    def of(cls, value: float) -> "LogMagnitude":
        if value < 0.0:
            raise ValueError("LogMagnitude holds nonnegative quantities only")
        return cls(log_value=math.log(value) if value > 0.0 else -math.inf)

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    def times(self, other: "LogMagnitude") -> "LogMagnitude":
        return LogMagnitude(log_value=self.log_value + other.log_value)


class CouplingConditions(FrozenModel):
    eps_delta_opnorm: float
    eps_delta_compact: float
    eps_delta_nu: float
    recommended: float


class RobbinsCheck(FrozenModel):
    """Stirling-Robbins sandwich at n, standard exponents and the printed variant."""

    n: int
    lower_gap: float
    upper_gap: float
    printed_lower_gap: float
    printed_upper_gap: float

    @property
    def holds(self) -> bool:
        return self.lower_gap > 0.0 and self.upper_gap > 0.0

    @property
    def printed_holds(self) -> bool:
        return self.printed_lower_gap > 0.0 and self.printed_upper_gap > 0.0


# =========================
# === Log-domain basics ===
# =========================
def log_double_factorial(j: int) -> float:
    """log((2j-1)!!) with (-1)!! = 1"""
    if j < 0:
        raise ValueError("j must be nonnegative")
    return math.fsum(np.log(np.arange(1, 2 * j, 2, dtype=float))) if j else 0.0


def log_factorial(j: int) -> float:
    if j < 0:
        raise ValueError("j must be nonnegative")
    return math.fsum(np.log(np.arange(1, j + 1, dtype=float))) if j else 0.0


def gamma_half_integer(j: int) -> LogMagnitude:
    """Gamma(j + 1/2) = (2j-1)!! sqrt(pi) / 2^j"""
    return LogMagnitude(log_value=log_double_factorial(j) - j * math.log(2.0) + 0.5 * math.log(math.pi))


def moment_norm_gaussian(j: int, g: GaussianParams) -> LogMagnitude:
    """||q^j|Q>|| = Delta^j sqrt((2j-1)!!); the j = 0 term is handled by callers."""
    if j < 1:
        raise ValueError("moment_norm_gaussian needs j >= 1; the j = 0 term is separate")
    return LogMagnitude(log_value=j * math.log(g.delta) + 0.5 * log_double_factorial(j))


def factorial_ratio(j: int) -> LogMagnitude:
    """sqrt((2j-1)!!) / j!, never above 1."""
    if j < 1:
        raise ValueError("factorial_ratio needs j >= 1")
    return LogMagnitude(log_value=0.5 * log_double_factorial(j) - log_factorial(j))


def appendix_d_k(a: float) -> int:
    """ceil(2 e^16 a^2); reported only, never iterated to."""
    if a < 1.0:
        raise ValueError("a must be >= 1")
    return math.ceil(2.0 * math.exp(16.0) * a * a)


def factorial_decay_holds(a: float, j: int) -> bool:
    """sqrt((2j-1)!!)/j! < a^{-j}, evaluated in log domain."""
    return factorial_ratio(j).log_value < -j * math.log(a)


def robbins_sandwich(n: int) -> RobbinsCheck:
    """
    sqrt(2 pi n)(n/e)^n e^{1/(12n+1)} < n! < sqrt(2 pi n)(n/e)^n e^{1/(12n)}.

    The variant with e^{-(12n+1)} and e^{-12n} is evaluated too and reported;
    its upper side fails for every n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    log_fact = log_factorial(n)
    stirling = 0.5 * math.log(2.0 * math.pi * n) + n * math.log(n) - n
    return RobbinsCheck(
        n=n,
        lower_gap=log_fact - (stirling + 1.0 / (12.0 * n + 1.0)),
        upper_gap=(stirling + 1.0 / (12.0 * n)) - log_fact,
        printed_lower_gap=log_fact - (stirling - (12.0 * n + 1.0)),
        printed_upper_gap=(stirling - 12.0 * n) - log_fact,
    )


# =========================
# === Series bound      ===
# =========================
def _support_bound(inp: AppendixBInputs, mode: BoundMode) -> float:
    if mode == "operator-norm":
        return inp.op_norm
    if mode == "compact-support":
        return inp.a_max
    raise ValueError(f"unknown bound mode: {mode}")


def series_ratio(inp: AppendixBInputs, cfg: CouplingConfig, mode: BoundMode = "operator-norm") -> float:
    """r = (eps Delta / hbar) B / |<phi|psi>|"""
    return inp.epsilon_delta / cfg.hbar * _support_bound(inp, mode) / inp.overlap_mag


def _one_minus_normalization(inp: AppendixBInputs, cfg: CouplingConfig, w: WeakValue) -> float:
    return -math.expm1(-(inp.epsilon_delta / cfg.hbar * w.value.imag) ** 2)


def series_error_bound(inp: AppendixBInputs, cfg: CouplingConfig, w: WeakValue, mode: BoundMode = "operator-norm") -> float:
    """
    (1 - N) + 2 r / (1 - r), bounding the postselected error per unit |<phi|psi>|.

    Raises:
        CouplingTooStrongError: If r >= 1
    """
    r = series_ratio(inp, cfg, mode)
    if r >= 1.0:
        raise CouplingTooStrongError(r)
    return _one_minus_normalization(inp, cfg, w) + 2.0 * r / (1.0 - r)


def series_error_partial(A: Observable, psi: SystemState, phi: SystemState, inp: AppendixBInputs,
                         cfg: CouplingConfig, order: int = 12, mode: BoundMode = "operator-norm") -> float:
    """
    Same bound with the sqrt((2j-1)!!)/j! factors and the actual
    |(A^j)_w - N A_w^j| kept through `order`, plus the geometric tail 2 r^{J+1}/(1-r).
    """
    r = series_ratio(inp, cfg, mode)
    if r >= 1.0:
        raise CouplingTooStrongError(r)
    w = weak_value(A, psi, phi, cfg)
    one_minus_n = _one_minus_normalization(inp, cfg, w)
    if inp.epsilon_delta == 0.0:
        return one_minus_n
    normalization = 1.0 - one_minus_n
    log_coupling = math.log(inp.epsilon_delta / cfg.hbar)
    terms = [one_minus_n]
    for j in range(1, order + 1):
        gap = abs(weak_value_power(A, psi, phi, j) - normalization * w.value ** j)
        if gap > 0.0:
            terms.append(math.exp(factorial_ratio(j).log_value + j * log_coupling + math.log(gap)))
    return math.fsum(terms) + 2.0 * r ** (order + 1) / (1.0 - r)


def coupling_conditions(inp: AppendixBInputs, cfg: CouplingConfig, w: WeakValue) -> CouplingConditions:
    """
    Admissible eps*Delta from the operator-norm, compact-support and 1-N conditions.

    The strict "much less than" of the first two is applied as a factor-100
    margin in `recommended`; an unbounded condition is +inf.
    """
    opnorm = inp.overlap_mag / inp.op_norm * cfg.hbar / 3.0 if inp.op_norm > 0.0 else math.inf
    compact = inp.overlap_mag / inp.a_max * cfg.hbar / 3.0 if inp.a_max > 0.0 else math.inf
    imag = abs(w.value.imag)
    nu = cfg.hbar / imag * math.sqrt(math.log(1.0 / (1.0 - inp.nu))) if imag > 0.0 else math.inf
    return CouplingConditions(
        eps_delta_opnorm=opnorm,
        eps_delta_compact=compact,
        eps_delta_nu=nu,
        recommended=min(opnorm / MUCH_LESS_MARGIN, compact / MUCH_LESS_MARGIN, nu),
    )


def compact_support_amax(A: Observable, psi: SystemState) -> float:
    """Largest |a| carrying weight in psi."""
    support = np.abs(A.coefficients(psi)) > SUPPORT_TOL
    return float(np.max(np.abs(A.eigenvalues[support]))) if np.any(support) else 0.0
