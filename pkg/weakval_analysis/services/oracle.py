"""
Brute-force reference engines.

Quadrature of the pointer wavefunctions on a grid, scaled-and-squared Taylor
exponentials for the qubit model and term-by-term Taylor summation. None of
these share code paths with the closed forms they are compared against.
"""
import logging
import math
from typing import Callable, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import Field, field_validator
from scipy.integrate import simpson

from .common import FrozenModel, MatExpConvergenceError, QuadratureWindowError
from .gaussian_probe import GaussianParams, TiltedGaussian, provenance_key
from .hilbert import Observable, SystemState
from .qubit_probe import BlochAxis, QubitComposite
from .weakcore import CouplingConfig, WeakValue

logger = logging.getLogger(__name__)

TAIL_WIDTH = 8.0
DEFAULT_HALF_WIDTH = 12.0
DEFAULT_POINTS = 4096
MAX_SERIES_ORDER = 30
UNITARITY_TOL = 1e-12

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PLUS_Z = np.array([1.0, 0.0], dtype=complex)


class QuadratureSpec(FrozenModel):
    half_width: float = Field(default=DEFAULT_HALF_WIDTH, gt=0.0)
    points: int = Field(default=DEFAULT_POINTS, ge=16)
    rule: Literal["trapezoid", "simpson"] = "trapezoid"

    @classmethod
    def covering(cls, x: TiltedGaussian, y: TiltedGaussian, g: GaussianParams,
                 rule: Literal["trapezoid", "simpson"] = "trapezoid") -> "QuadratureSpec":
        """Window of 12 Delta around the shifted peak; spacing kept at the default."""
        shift = abs(integrand_center(x, y, g)) / g.delta
        half_width = DEFAULT_HALF_WIDTH + shift
        points = int(math.ceil(DEFAULT_POINTS * half_width / DEFAULT_HALF_WIDTH))
        return cls(half_width=half_width, points=points, rule=rule)


class MatExpSpec(FrozenModel):
    scaling_squaring_threshold: float = Field(default=0.5, gt=0.0)
    taylor_order: int = Field(default=18, ge=1)


class MatExpResult(FrozenModel):
    matrix: np.ndarray
    squarings: int
    truncation_estimate: float

    @field_validator("matrix", mode="before")
    @classmethod
    def _as_matrix(cls, value):
        return np.array(value, dtype=complex)


# =========================
# === Quadrature        ===
# =========================
def integrand_center(x: TiltedGaussian, y: TiltedGaussian, g: GaussianParams) -> float:
    """Peak of |conj(x(q)) y(q)|: -Delta^2 Im(lambda_y - conj(lambda_x))."""
    return -g.delta ** 2 * (y.tilt - x.tilt.conjugate()).imag


def _integrate(values: np.ndarray, grid: np.ndarray, rule: str) -> complex:
    if rule == "simpson":
        return complex(simpson(values.real, x=grid), simpson(values.imag, x=grid))
    return complex(np.trapezoid(values, grid))


def quad_overlap(x: TiltedGaussian, y: TiltedGaussian, g: GaussianParams, spec: Optional[QuadratureSpec] = None) -> complex:
    """
    <x|y> by quadrature of conj(x(q)) y(q) with x(q) = p e^{s} e^{i lambda q}(2 pi Delta^2)^{-1/4} e^{-q^2/4 Delta^2}.

    Raises:
        QuadratureWindowError: If the window misses the shifted integrand
    """
    spec = spec or QuadratureSpec()
    required = TAIL_WIDTH + abs(integrand_center(x, y, g)) / g.delta
    if spec.half_width < required:
        raise QuadratureWindowError(spec.half_width, required)
    grid = np.linspace(-spec.half_width * g.delta, spec.half_width * g.delta, spec.points)
    exponent = (
        -grid ** 2 / (2.0 * g.delta ** 2)
        - 1j * np.conj(x.tilt) * grid
        + 1j * y.tilt * grid
        - 0.5 * math.log(2.0 * math.pi * g.delta ** 2)
        + x.log_scale + y.log_scale
    )
    values = np.conj(x.prefactor) * y.prefactor * np.exp(exponent)
    return _integrate(values, grid, spec.rule)


def quad_normalization(beta: float, g: GaussianParams, spec: Optional[QuadratureSpec] = None) -> float:
    """<Q|e^{-2 beta q}|Q>^{-1/2} by quadrature."""
    ground = TiltedGaussian()
    damped = TiltedGaussian(tilt=complex(0.0, 2.0 * beta))
    spec = spec or QuadratureSpec.covering(ground, damped, g)
    return quad_overlap(ground, damped, g, spec).real ** -0.5


def quad_density_moments(density: Callable[[np.ndarray], np.ndarray], center: float, spread: float,
                         spec: Optional[QuadratureSpec] = None) -> Tuple[float, float, float]:
    """(mass, mean, variance) of a density sampled on center +- half_width * spread."""
    spec = spec or QuadratureSpec()
    grid = np.linspace(center - spec.half_width * spread, center + spec.half_width * spread, spec.points)
    values = np.asarray(density(grid), dtype=float)
    mass = _integrate(values, grid, spec.rule).real
    mean = _integrate(grid * values, grid, spec.rule).real / mass
    variance = _integrate((grid - mean) ** 2 * values, grid, spec.rule).real / mass
    return mass, mean, variance


def quad_probe_moment(j: int, g: GaussianParams, spec: Optional[QuadratureSpec] = None) -> float:
    """<Q|q^{2j}|Q> = ||q^j|Q>||^2 by quadrature."""
    spec = spec or QuadratureSpec()
    grid = np.linspace(-spec.half_width * g.delta, spec.half_width * g.delta, spec.points)
    weight = np.exp(-grid ** 2 / (2.0 * g.delta ** 2)) / math.sqrt(2.0 * math.pi * g.delta ** 2)
    return _integrate(grid ** (2 * j) * weight, grid, spec.rule).real


# =========================
# === Matrix exponential ==
# =========================
def matrix_exp(matrix: np.ndarray, spec: Optional[MatExpSpec] = None) -> MatExpResult:
    """
    e^M by scaling and squaring around a fixed-order Taylor polynomial.

    M is scaled by 2^-s until its 1-norm is at most the threshold, the
    polynomial is evaluated in Horner form and squared back s times.
    """
    spec = spec or MatExpSpec()
    m = np.asarray(matrix, dtype=complex)
    identity = np.eye(m.shape[0], dtype=complex)
    norm = float(np.linalg.norm(m, 1)) if m.size else 0.0
    squarings = 0
    if norm > spec.scaling_squaring_threshold:
        squarings = int(math.ceil(math.log2(norm / spec.scaling_squaring_threshold)))
    scaled = m / 2.0 ** squarings

    result = identity.copy()
    for k in range(spec.taylor_order, 0, -1):
        result = identity + (scaled @ result) / k
    for _ in range(squarings):
        result = result @ result

    scaled_norm = norm / 2.0 ** squarings
    truncation = math.exp((spec.taylor_order + 1) * math.log(scaled_norm) - math.lgamma(spec.taylor_order + 2)) if scaled_norm > 0 else 0.0
    return MatExpResult(matrix=result, squarings=squarings, truncation_estimate=truncation)


def dense_expm_apply(A: Observable, cfg: CouplingConfig, psi: SystemState, spec: Optional[MatExpSpec] = None) -> QubitComposite:
    """
    e^{i(eps/hbar) A (x) sigma_x}|psi>|+z> from the dense 2n x 2n exponential.

    Raises:
        MatExpConvergenceError: If the output norm drifts from 1 by more than 1e-12
    """
    if A.dim > 64:
        raise ValueError("dense_expm_apply is limited to dim <= 64")
    spec = spec or MatExpSpec()
    generator = 1j * cfg.scale * np.kron(A.matrix(), SIGMA_X)
    result = matrix_exp(generator, spec)
    amps = result.matrix @ np.kron(psi.amps, PLUS_Z)
    residual = abs(float(np.linalg.norm(amps)) - 1.0)
    if residual > UNITARITY_TOL:
        raise MatExpConvergenceError(residual, spec.taylor_order, f"{result.squarings} squarings")
    logger.debug(f"dense_expm_apply: dim={A.dim}, squarings={result.squarings}, unitarity residual={residual:.2e}")
    return QubitComposite(
        amps=amps,
        terms=[],
        basis_tag="computational",
        system_vectors=np.eye(A.dim, dtype=complex),
        provenance=provenance_key(A, psi, cfg),
    )


def _evolved_plus_z(tilt: complex) -> np.ndarray:
    return matrix_exp(1j * tilt * SIGMA_X).matrix @ PLUS_Z


def dense_qubit_normalization(beta: float) -> float:
    """<+z|e^{-2 beta sigma_x}|+z>^{-1/2}"""
    return matrix_exp(-2.0 * beta * SIGMA_X).matrix[0, 0].real ** -0.5


def dense_weak_probe(w: WeakValue) -> np.ndarray:
    return dense_qubit_normalization(w.beta) * _evolved_plus_z(w.tilt)


def dense_qubit_overlap(a: float, w: WeakValue, cfg: CouplingConfig) -> complex:
    return complex(np.vdot(_evolved_plus_z(complex(cfg.scale * a)), dense_weak_probe(w)))


def dense_qubit_probability(w: WeakValue, axis: BlochAxis) -> float:
    return abs(np.vdot(axis.state().vector, dense_weak_probe(w))) ** 2


# =========================
# === Taylor series     ===
# =========================
def series_partial_sums(A: Observable, psi: SystemState, phi: SystemState, cfg: CouplingConfig,
                        probe_moments: Sequence[complex], order: int) -> np.ndarray:
    """sum_{j <= k} (i eps/hbar)^j / j! <phi|A^j|psi> m_j for k = 0..order, by dense matrix powers."""
    if order > MAX_SERIES_ORDER:
        raise ValueError(f"series order {order} exceeds {MAX_SERIES_ORDER}")
    if len(probe_moments) <= order:
        raise ValueError("probe_moments must cover orders 0..order")
    matrix = A.matrix()
    vector = np.array(psi.amps)
    sums = np.empty(order + 1, dtype=complex)
    running = 0j
    for j in range(order + 1):
        if j:
            vector = matrix @ vector
        running += (1j * cfg.scale) ** j / math.factorial(j) * np.vdot(phi.amps, vector) * complex(probe_moments[j])
        sums[j] = running
    return sums
