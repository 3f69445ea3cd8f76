"""
Qubit probe model: |+z> pointer read out through sigma_x.

Probe evolution e^{i lambda sigma_x} is applied through the sigma_x
eigenbasis, so complex tilts are exact. Readout probabilities on any Bloch
axis, the <+_a|+^w> overlap, exact and approximate composites, their norm
difference and the hyperbolic-sandwich epsilon certificate live here.
"""
import cmath
import logging
import math
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import Field, field_validator

from .common import ROUNDOFF_CLAMP, SUPPORT_TOL, UNDEFINED_OVERLAP, FrozenModel, ProvenanceMismatchError, readonly_array
from .gaussian_probe import ErrorCertificate, TriangleSplit, conservative_bound, tight_bound, provenance_key
from .hilbert import Observable, PostselectionBasis, SystemState
from .weakcore import CertificationParams, CouplingConfig, WeakValue, weak_value

logger = logging.getLogger(__name__)

MAX_HALVINGS = 200
_SQRT_HALF = math.sqrt(0.5)


class QubitState(FrozenModel):
    up: complex = 1 + 0j
    down: complex = 0j

    @classmethod
    def plus_z(cls) -> "QubitState":
        return cls(up=1 + 0j, down=0j)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.up, self.down], dtype=complex)

    def norm_sq(self) -> float:
        return abs(self.up) ** 2 + abs(self.down) ** 2

    def scaled(self, factor: complex) -> "QubitState":
        return QubitState(up=factor * self.up, down=factor * self.down)


class BlochAxis(FrozenModel):
    theta: float = Field(ge=0.0, le=math.pi)
    eta: float = Field(ge=0.0, lt=2.0 * math.pi)

    def state(self) -> QubitState:
        """|+n> = cos(theta/2)|+z> + e^{i eta} sin(theta/2)|-z>"""
        return QubitState(up=complex(math.cos(self.theta / 2.0)), down=cmath.exp(1j * self.eta) * math.sin(self.theta / 2.0))


class QubitTerm(FrozenModel):
    """label is the eigenvalue for exact terms and the weak value for approximate ones."""

    coefficient: complex
    system_index: int
    probe: QubitState
    label: complex

    @property
    def cutoff_key(self) -> float:
        return abs(self.label)


class QubitComposite(FrozenModel):
    """Dense amplitudes ordered (system index, qubit z-component) plus the term list they came from."""

    amps: np.ndarray
    terms: List[QubitTerm]
    basis_tag: Literal["eigenbasis", "postselection", "computational"]
    system_vectors: np.ndarray
    provenance: str

    @field_validator("amps", "system_vectors", mode="before")
    @classmethod
    def _as_array(cls, value):
        return readonly_array(value, complex)

    @property
    def dim(self) -> int:
        return int(self.system_vectors.shape[0])

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))


def _sech(x: float) -> float:
    e = math.exp(-abs(x))
    return 2.0 * e / (1.0 + e * e)


# =========================
# === Closed forms      ===
# =========================
def qubit_normalization(w: WeakValue) -> float:
    """N = sqrt(sech(2 beta))"""
    return math.sqrt(_sech(2.0 * w.beta))


def evolve_qubit(tilt: complex, state: QubitState) -> QubitState:
    """e^{i tilt sigma_x}|state> through the sigma_x eigenbasis; unnormalized for complex tilt."""
    tilt = complex(tilt)
    plus_x = _SQRT_HALF * (state.up + state.down) * cmath.exp(1j * tilt)
    minus_x = _SQRT_HALF * (state.up - state.down) * cmath.exp(-1j * tilt)
    return QubitState(up=_SQRT_HALF * (plus_x + minus_x), down=_SQRT_HALF * (plus_x - minus_x))


def _normalized_hyperbolics(beta: float) -> Tuple[float, float]:
    """(N e^{beta}, N e^{-beta}) with N folded into the exponents; finite for any beta."""
    m = abs(beta)
    scale = math.sqrt(2.0 / (1.0 + math.exp(-4.0 * m)))
    return scale * math.exp(beta - m), scale * math.exp(-beta - m)


def weak_probe(w: WeakValue) -> QubitState:
    """|+^w> = N e^{i(alpha + i beta) sigma_x}|+z>"""
    grow, decay = _normalized_hyperbolics(w.beta)
    plus_x = _SQRT_HALF * decay * cmath.exp(1j * w.alpha)
    minus_x = _SQRT_HALF * grow * cmath.exp(-1j * w.alpha)
    return QubitState(up=_SQRT_HALF * (plus_x + minus_x), down=_SQRT_HALF * (plus_x - minus_x))


def prob_plus_z(w: WeakValue) -> float:
    return 0.5 * (1.0 + math.cos(2.0 * w.alpha) * _sech(2.0 * w.beta))


def prob_minus_z(w: WeakValue) -> float:
    return 0.5 * (1.0 - math.cos(2.0 * w.alpha) * _sech(2.0 * w.beta))


def prob_plus_axis(w: WeakValue, axis: BlochAxis) -> float:
    """P(+n) = (1 + n . r)/2 with Bloch vector r = (-tanh 2b, sin 2a sech 2b, cos 2a sech 2b)."""
    sech = _sech(2.0 * w.beta)
    in_plane = math.sin(2.0 * w.alpha) * sech * math.sin(axis.eta) - math.tanh(2.0 * w.beta) * math.cos(axis.eta)
    return 0.5 * (1.0 + math.cos(axis.theta) * math.cos(2.0 * w.alpha) * sech + math.sin(axis.theta) * in_plane)


def prob_axis_table(w: WeakValue) -> Dict[str, float]:
    return {
        "p_plus_z": prob_plus_z(w),
        "p_minus_z": prob_minus_z(w),
        "p_plus_x": prob_plus_axis(w, BlochAxis(theta=math.pi / 2.0, eta=0.0)),
    }


def overlap_qubit(a: float, w: WeakValue, cfg: CouplingConfig) -> complex:
    """<+_a|+^w> = N [cos(alpha - a') cosh(beta) - i sin(alpha - a') sinh(beta)], a' = (eps/hbar) a"""
    shift = w.alpha - cfg.scale * a
    grow, decay = _normalized_hyperbolics(w.beta)
    return complex(0.5 * math.cos(shift) * (grow + decay), -0.5 * math.sin(shift) * (grow - decay))


# =========================
# === Composites        ===
# =========================
def _dense(terms: List[QubitTerm], system_vectors: np.ndarray) -> np.ndarray:
    amps = np.zeros((system_vectors.shape[0], 2), dtype=complex)
    for t in terms:
        amps += t.coefficient * np.outer(system_vectors[:, t.system_index], t.probe.vector)
    return amps.reshape(-1)


def exact_composite_qubit(A: Observable, psi: SystemState, cfg: CouplingConfig) -> QubitComposite:
    """e^{i(eps/hbar) A sigma_x}|psi>|+z>, one term per supported eigenvector."""
    coefficients = A.coefficients(psi)
    terms = [
        QubitTerm(
            coefficient=complex(coefficients[k]),
            system_index=k,
            probe=evolve_qubit(cfg.scale * float(A.eigenvalues[k]), QubitState.plus_z()),
            label=complex(float(A.eigenvalues[k])),
        )
        for k in range(A.dim)
        if abs(coefficients[k]) > SUPPORT_TOL
    ]
    return QubitComposite(
        amps=_dense(terms, A.eigenvectors),
        terms=terms,
        basis_tag="eigenbasis",
        system_vectors=A.eigenvectors,
        provenance=provenance_key(A, psi, cfg),
    )


def approx_composite_qubit(A: Observable, psi: SystemState, basis: PostselectionBasis, cfg: CouplingConfig) -> QubitComposite:
    """sum_phi |phi><phi|psi>|+^w>, skipping postselections orthogonal to psi."""
    amplitudes = basis.overlaps(psi)
    terms = []
    for k, phi in enumerate(basis.states()):
        if abs(amplitudes[k]) <= UNDEFINED_OVERLAP:
            continue
        w = weak_value(A, psi, phi, cfg)
        terms.append(QubitTerm(coefficient=complex(amplitudes[k]), system_index=k, probe=weak_probe(w), label=w.value))
    return QubitComposite(
        amps=_dense(terms, basis.vectors),
        terms=terms,
        basis_tag="postselection",
        system_vectors=basis.vectors,
        provenance=provenance_key(A, psi, cfg),
    )


def _check_pair(exact: QubitComposite, approx: QubitComposite) -> None:
    if exact.provenance != approx.provenance:
        raise ProvenanceMismatchError("qubit composites were built from different (A, psi, cfg)")
    if exact.basis_tag != "eigenbasis" or approx.basis_tag != "postselection":
        raise ValueError("expected an eigenbasis composite and a postselection composite")


def norm_difference_qubit(exact: QubitComposite, approx: QubitComposite, cross: Optional[np.ndarray] = None,
                          cutoffs: Optional[CertificationParams] = None) -> float:
    """
    ||exact - approx|| from the per-eigenvector probe residuals
    R_a = <a|psi>|+_a> - sum_phi <a|phi><phi|psi>|+^w_phi>, optionally
    restricted to |a| <= abar and |A_w| <= wbar.
    """
    _check_pair(exact, approx)
    if cross is None:
        cross = exact.system_vectors.conj().T @ approx.system_vectors
    residual = np.zeros((cross.shape[0], 2), dtype=complex)
    for t in exact.terms:
        if cutoffs is None or t.cutoff_key <= cutoffs.abar:
            residual[t.system_index] += t.coefficient * t.probe.vector
    for t in approx.terms:
        if cutoffs is None or t.cutoff_key <= cutoffs.wbar:
            residual -= np.outer(cross[:, t.system_index] * t.coefficient, t.probe.vector)
    return float(np.linalg.norm(residual))


def expanded_norm_difference_qubit(exact: QubitComposite, approx: QubitComposite, cfg: CouplingConfig,
                                   cutoffs: Optional[CertificationParams] = None) -> float:
    """Literal expansion with overlap_qubit as the Gram entry."""
    _check_pair(exact, approx)
    exact_terms = [t for t in exact.terms if cutoffs is None or t.cutoff_key <= cutoffs.abar]
    approx_terms = [t for t in approx.terms if cutoffs is None or t.cutoff_key <= cutoffs.wbar]
    squared = sum(abs(t.coefficient) ** 2 for t in exact_terms) + sum(abs(t.coefficient) ** 2 for t in approx_terms)
    for s in exact_terms:
        for t in approx_terms:
            system = np.vdot(exact.system_vectors[:, s.system_index], approx.system_vectors[:, t.system_index])
            gram = overlap_qubit(s.label.real, WeakValue.from_value(t.label, cfg), cfg)
            squared -= 2.0 * (np.conj(s.coefficient) * system * t.coefficient * gram).real
    if squared < 0.0:
        if squared > -ROUNDOFF_CLAMP:
            return 0.0
        raise ArithmeticError(f"expanded_norm_difference_qubit: squared norm {squared:.3e} is negative beyond round-off")
    return math.sqrt(squared)


def triangle_split_qubit(exact: QubitComposite, approx: QubitComposite, params: CertificationParams) -> TriangleSplit:
    eigen_tail = sum(abs(t.coefficient) ** 2 for t in exact.terms if t.cutoff_key > params.abar)
    weak_tail = sum(abs(t.coefficient) ** 2 for t in approx.terms if t.cutoff_key > params.wbar)
    return TriangleSplit(
        full=norm_difference_qubit(exact, approx),
        restricted=norm_difference_qubit(exact, approx, cutoffs=params),
        eigen_tail=math.sqrt(eigen_tail),
        weak_tail=math.sqrt(weak_tail),
    )


# =========================
# === Certification     ===
# =========================
def epsilon_ceiling_qubit(params: CertificationParams, hbar: float = 1.0) -> float:
    """(eps/hbar)(wbar + abar) = pi/2, where the cosine lower bound reaches zero."""
    return 0.5 * math.pi * hbar / (params.wbar + params.abar)


def sandwich_gaps(epsilon: float, params: CertificationParams, hbar: float = 1.0) -> Dict[str, float]:
    """Distances from 1 (cosh side) and from 0 (sinh side) of the sandwich bounds."""
    k = epsilon / hbar
    lower = math.sqrt(_sech(2.0 * k * params.wbar)) * math.cos(k * (params.wbar + params.abar))
    return {
        "cosh_lower": abs(1.0 - lower),
        "cosh_upper": math.cosh(k * params.wbar) - 1.0,
        "sinh": math.sinh(k * params.wbar),
    }


def certify_epsilon_qubit(A: Observable, psi: SystemState, basis: PostselectionBasis, params: CertificationParams,
                          hbar: float = 1.0) -> ErrorCertificate:
    """Largest halving-grid epsilon below the ceiling with every sandwich gap under xi."""
    epsilon = epsilon_ceiling_qubit(params, hbar)
    for _ in range(MAX_HALVINGS):
        if max(sandwich_gaps(epsilon, params, hbar).values()) < params.xi:
            break
        epsilon *= 0.5
    else:
        logger.warning(f"epsilon grid exhausted after {MAX_HALVINGS} halvings; using {epsilon:.3e}")
    cfg = CouplingConfig(epsilon=epsilon, hbar=hbar)
    split = triangle_split_qubit(exact_composite_qubit(A, psi, cfg), approx_composite_qubit(A, psi, basis, cfg), params)
    logger.info(f"qubit certificate: eps={epsilon:.6g}, achieved={split.full:.3e}, xi={params.xi}")
    return ErrorCertificate(
        params=params,
        epsilon=epsilon,
        achieved_norm_diff=split.full,
        conservative_bound=conservative_bound(params.xi),
        tight_bound=tight_bound(params.xi),
        model="qubit",
        triangle=split,
    )
