"""
Weak values and the quantities built on them.

Coupling configuration, weak values with their coupling-scaled parts,
tail masses over eigenvalue and weak-value cutoffs, the grid search for
certification thresholds, and the historical truncated approximations
kept for comparison.
"""
import logging
import math
from typing import List, Optional, Sequence

import numpy as np
from pydantic import Field, field_validator, model_validator
from scipy.special import gammaln

from .common import CUTOFF_FLOOR, UNDEFINED_OVERLAP, FrozenModel, UndefinedWeakValueError
from .hilbert import Observable, PostselectionBasis, SystemState, inner

logger = logging.getLogger(__name__)


class CouplingConfig(FrozenModel):
    epsilon: float = Field(ge=0.0, allow_inf_nan=False)
    hbar: float = Field(default=1.0, gt=0.0, allow_inf_nan=False)

    @property
    def scale(self) -> float:
        """epsilon / hbar"""
        return self.epsilon / self.hbar


class WeakValue(FrozenModel):
    value: complex
    alpha: float
    beta: float

    @classmethod
    def from_value(cls, value: complex, cfg: CouplingConfig) -> "WeakValue":
        value = complex(value)
        return cls(value=value, alpha=cfg.scale * value.real, beta=cfg.scale * value.imag)

    @property
    def tilt(self) -> complex:
        """alpha + i beta"""
        return complex(self.alpha, self.beta)


class CertificationParams(FrozenModel):
    abar: float = Field(gt=0.0, allow_inf_nan=False)
    wbar: float = Field(gt=0.0, allow_inf_nan=False)
    xi: float = Field(gt=0.0, lt=1.0)


class TruncatedState(FrozenModel):
    """Coefficients <phi|psi> kept for the postselections with |A_w| <= wbar."""

    indices: List[int]
    coefficients: np.ndarray
    dim: int

    @field_validator("coefficients", mode="before")
    @classmethod
    def _as_array(cls, value):
        return np.array(value, dtype=complex)

    @model_validator(mode="after")
    def _subset(self):
        if len(set(self.indices)) != len(self.indices) or any(i < 0 or i >= self.dim for i in self.indices):
            raise ValueError("indices must be distinct members of the basis")
        if self.coefficients.shape != (len(self.indices),):
            raise ValueError("one coefficient per kept index is required")
        return self

    def mass(self) -> float:
        return float(np.sum(np.abs(self.coefficients) ** 2))


class LegacyComparison(FrozenModel):
    """Historical first-order truncation next to the Taylor partial sums."""

    first_order: complex
    partial_sums: np.ndarray
    truncation_errors: np.ndarray

    @field_validator("partial_sums", "truncation_errors", mode="before")
    @classmethod
    def _as_array(cls, value):
        return np.array(value)

    @property
    def exact_series(self) -> complex:
        return complex(self.partial_sums[-1])

    @property
    def first_order_error(self) -> float:
        return abs(self.exact_series - self.first_order)


# =========================
# === Weak values       ===
# =========================
def postselection_amplitude(psi: SystemState, phi: SystemState) -> complex:
    """<phi|psi>, rejecting orthogonal pairs."""
    amplitude = inner(phi, psi)
    if abs(amplitude) <= UNDEFINED_OVERLAP:
        raise UndefinedWeakValueError(abs(amplitude))
    return amplitude


def weak_value_power(A: Observable, psi: SystemState, phi: SystemState, power: int) -> complex:
    """(A^j)_w = <phi|A^j|psi> / <phi|psi>"""
    amplitude = postselection_amplitude(psi, phi)
    return complex(np.vdot(phi.amps, A.apply_power(psi, power))) / amplitude


def weak_value(A: Observable, psi: SystemState, phi: SystemState, cfg: CouplingConfig) -> WeakValue:
    """
    Weak value A_w(phi|psi) with alpha + i beta = (epsilon/hbar) A_w.

    Raises:
        UndefinedWeakValueError: If |<phi|psi>| <= 1e-14
    """
    return WeakValue.from_value(weak_value_power(A, psi, phi, 1), cfg)


def weak_values(A: Observable, psi: SystemState, basis: PostselectionBasis, cfg: CouplingConfig) -> List[Optional[WeakValue]]:
    """Weak value per postselection; None where the weak value is undefined."""
    values: List[Optional[WeakValue]] = []
    for phi in basis.states():
        try:
            values.append(weak_value(A, psi, phi, cfg))
        except UndefinedWeakValueError:
            values.append(None)
    return values


# =========================
# === Tail masses       ===
# =========================
def tail_mass_eigen(A: Observable, psi: SystemState, abar: float) -> float:
    """Mass of psi on eigenvalues with |a| > abar."""
    if abar <= 0.0:
        raise ValueError("abar must be positive")
    weights = np.abs(A.coefficients(psi)) ** 2
    return float(min(np.sum(weights[np.abs(A.eigenvalues) > abar]), 1.0))


def _weak_value_magnitudes(A: Observable, psi: SystemState, basis: PostselectionBasis):
    """(|<phi|psi>|^2, |A_w|) over postselections with a defined weak value."""
    amplitudes = basis.overlaps(psi)
    defined = np.abs(amplitudes) > UNDEFINED_OVERLAP
    numerators = basis.vectors.conj().T @ A.apply(psi)
    magnitudes = np.full(amplitudes.shape, np.nan)
    magnitudes[defined] = np.abs(numerators[defined] / amplitudes[defined])
    return np.abs(amplitudes) ** 2, magnitudes, defined


def tail_mass_weak(A: Observable, psi: SystemState, basis: PostselectionBasis, wbar: float, cfg: Optional[CouplingConfig] = None) -> float:
    """
    Mass of psi on postselections whose weak value exceeds wbar in magnitude.

    Orthogonal postselections carry no mass and are never classified. The
    coupling config does not enter: the cutoff applies to A_w itself.
    """
    if wbar <= 0.0:
        raise ValueError("wbar must be positive")
    weights, magnitudes, defined = _weak_value_magnitudes(A, psi, basis)
    above = defined & (np.nan_to_num(magnitudes, nan=0.0) > wbar)
    return float(min(np.sum(weights[above]), 1.0))


def truncated_state(A: Observable, psi: SystemState, basis: PostselectionBasis, wbar: float) -> TruncatedState:
    amplitudes = basis.overlaps(psi)
    _, magnitudes, defined = _weak_value_magnitudes(A, psi, basis)
    kept = [int(k) for k in np.flatnonzero(defined & (np.nan_to_num(magnitudes, nan=np.inf) <= wbar))]
    return TruncatedState(indices=kept, coefficients=amplitudes[kept], dim=basis.dim)


def inner_restricted(A: Observable, psi: SystemState, basis: PostselectionBasis, abar: float, wbar: float) -> complex:
    """sum over |a| <= abar and |A_w| <= wbar of <psi|a><a|phi><phi|psi>"""
    eigen = A.coefficients(psi)
    keep_a = np.abs(A.eigenvalues) <= abar
    truncated = truncated_state(A, psi, basis, wbar)
    if not truncated.indices or not np.any(keep_a):
        return 0j
    cross = A.eigenvectors[:, keep_a].conj().T @ basis.vectors[:, truncated.indices]
    return complex(np.conj(eigen[keep_a]) @ cross @ truncated.coefficients)


def _cutoff_grid(values: np.ndarray) -> np.ndarray:
    return np.maximum(np.unique(np.abs(values)), CUTOFF_FLOOR)


def choose_thresholds(A: Observable, psi: SystemState, basis: PostselectionBasis, xi: float) -> CertificationParams:
    """
    Smallest grid cutoffs (abar, wbar) meeting the tolerance xi.

    wbar is fixed first from the realized |A_w| values, then abar is the
    smallest |a| grid value whose eigen tail is below xi and for which the
    restricted resummation stays within xi of 1.
    """
    if not 0.0 < xi < 1.0:
        raise ValueError(f"xi must lie in (0, 1), got {xi}")
    _, magnitudes, defined = _weak_value_magnitudes(A, psi, basis)
    weak_grid = _cutoff_grid(magnitudes[defined])
    eigen_grid = _cutoff_grid(A.eigenvalues)

    for wbar in weak_grid:
        if tail_mass_weak(A, psi, basis, wbar) >= xi:
            continue
        for abar in eigen_grid:
            if tail_mass_eigen(A, psi, abar) >= xi:
                continue
            total = inner_restricted(A, psi, basis, abar, wbar)
            if abs(total.real - 1.0) < xi and abs(total.imag) < xi:
                logger.debug(f"thresholds chosen: abar={abar:.6g}, wbar={wbar:.6g}, xi={xi}")
                return CertificationParams(abar=float(abar), wbar=float(wbar), xi=xi)
    logger.warning("Threshold grid exhausted; falling back to the largest cutoffs")
    return CertificationParams(abar=float(eigen_grid[-1]), wbar=float(weak_grid[-1]), xi=xi)


# =========================
# === Legacy expansions ===
# =========================
def taylor_partial_sums(A: Observable, psi: SystemState, phi: SystemState, cfg: CouplingConfig,
                        probe_moments: Sequence[complex], order: int) -> np.ndarray:
    """
    Partial sums of sum_j (i eps/hbar)^j / j! <phi|A^j|psi> m_j through `order`.

    Evaluated eigen-component by eigen-component: <phi|a><a|psi> times the
    scalar series in (i eps a / hbar).
    """
    if order < 0 or len(probe_moments) <= order:
        raise ValueError("probe_moments must cover orders 0..order")
    moments = np.asarray(probe_moments[: order + 1], dtype=complex)
    weights = np.conj(A.coefficients(phi)) * A.coefficients(psi)
    powers = np.arange(order + 1)
    log_factorials = gammaln(powers + 1.0)
    terms = np.empty(order + 1, dtype=complex)
    for j in powers:
        series = (1j * cfg.scale * A.eigenvalues) ** j
        terms[j] = np.sum(weights * series) * moments[j] / math.exp(log_factorials[j])
    return np.cumsum(terms)


def legacy_first_order(A: Observable, psi: SystemState, phi: SystemState, cfg: CouplingConfig,
                       probe_moments: Sequence[complex], order: int = 12) -> LegacyComparison:
    """
    <phi|psi>(1 + i(eps/hbar) A_w m_1) against the Taylor partial sums.

    truncation_errors[k] is |S_order - S_k|, an error table against truncation
    order with the highest partial sum standing in for the full series.
    """
    amplitude = postselection_amplitude(psi, phi)
    w = weak_value(A, psi, phi, cfg)
    m1 = complex(probe_moments[1]) if len(probe_moments) > 1 else 0j
    first = amplitude * (1.0 + 1j * cfg.scale * w.value * m1)
    sums = taylor_partial_sums(A, psi, phi, cfg, probe_moments, order)
    return LegacyComparison(first_order=first, partial_sums=sums, truncation_errors=np.abs(sums[-1] - sums))


def legacy_condition_diagnostic(A: Observable, psi: SystemState, phi: SystemState, cfg: CouplingConfig,
                                delta: float, jmax: int) -> np.ndarray:
    """
    (2 Delta)^j Gamma(j/2) / (j-2)! |(A^j)_w - (A_w)^j| for j = 2..jmax.

    Reported as a diagnostic only; it never gates anything.
    """
    if jmax < 2:
        raise ValueError("jmax must be >= 2")
    aw = weak_value(A, psi, phi, cfg).value
    values = np.zeros(jmax - 1)
    if delta == 0.0:
        return values
    for k, j in enumerate(range(2, jmax + 1)):
        gap = abs(weak_value_power(A, psi, phi, j) - aw ** j)
        if gap == 0.0:
            continue
        log_value = j * math.log(2.0 * delta) + gammaln(j / 2.0) - gammaln(j - 1.0) + math.log(gap)
        values[k] = math.exp(log_value)
    return values


def gaussian_probe_moments(order: int, delta: float) -> np.ndarray:
    """<Q|q^j|Q> for j = 0..order: Delta^j (j-1)!! for even j, zero for odd j."""
    moments = np.zeros(order + 1, dtype=complex)
    moments[0] = 1.0
    for j in range(2, order + 1, 2):
        moments[j] = moments[j - 2] * (j - 1) * delta * delta
    return moments


def qubit_probe_moments(order: int) -> np.ndarray:
    """<+z|sigma_x^j|+z>: 1 for even j, 0 for odd j."""
    moments = np.zeros(order + 1, dtype=complex)
    moments[0::2] = 1.0
    return moments
