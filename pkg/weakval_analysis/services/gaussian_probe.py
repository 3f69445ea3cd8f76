"""
von Neumann (Gaussian pointer) probe model.

Every probe state that appears is a tilted Gaussian p * e^{i lambda q}|Q>,
so overlaps, norms and norm differences are closed forms. Norm differences
are expanded per eigen-component around the exact probe factor with expm1,
which keeps them accurate when exact and approximate states nearly agree.
"""
import cmath
import hashlib
import logging
import math
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import Field, field_validator, model_validator

from .common import ROUNDOFF_CLAMP, SUPPORT_TOL, UNDEFINED_OVERLAP, FrozenModel, ProvenanceMismatchError
from .hilbert import Observable, PostselectionBasis, SystemState
from .weakcore import CertificationParams, CouplingConfig, WeakValue, weak_value

logger = logging.getLogger(__name__)

MAX_HALVINGS = 200
CENTERED_TILT_LIMIT = 5.0


class GaussianParams(FrozenModel):
    delta: float = Field(gt=0.0, allow_inf_nan=False)


class TiltedGaussian(FrozenModel):
    """prefactor * e^{log_scale} * e^{i tilt q}|Q>"""

    tilt: complex = 0j
    prefactor: complex = 1 + 0j
    log_scale: float = Field(default=0.0, allow_inf_nan=False)

    @classmethod
    def pointer(cls, a: float, cfg: CouplingConfig) -> "TiltedGaussian":
        """|P_a> = e^{i (eps/hbar) a q}|Q>"""
        return cls(tilt=complex(cfg.scale * a, 0.0))

    @classmethod
    def weak(cls, w: WeakValue, g: GaussianParams) -> "TiltedGaussian":
        """|Q^w> = N e^{i (alpha + i beta) q}|Q>"""
        return cls(tilt=w.tilt, log_scale=log_gaussian_normalization(w.beta, g))


class GaussianTerm(FrozenModel):
    coefficient: complex
    system_index: int
    probe: TiltedGaussian
    cutoff_key: float


class GaussianComposite(FrozenModel):
    """sum over terms of coefficient |s_index> (x) probe"""

    terms: List[GaussianTerm]
    basis_tag: Literal["eigenbasis", "postselection"]
    system_vectors: np.ndarray
    delta: float
    provenance: str

    @field_validator("system_vectors", mode="before")
    @classmethod
    def _as_matrix(cls, value):
        return np.array(value, dtype=complex)

    @model_validator(mode="after")
    def _distinct(self):
        indices = [t.system_index for t in self.terms]
        if len(set(indices)) != len(indices):
            raise ValueError("system indices must be distinct within a composite")
        return self

    def squared_norm(self) -> float:
        """Gram evaluation of <composite|composite>."""
        g = GaussianParams(delta=self.delta)
        total = 0j
        for s in self.terms:
            for t in self.terms:
                system = np.vdot(self.system_vectors[:, s.system_index], self.system_vectors[:, t.system_index])
                total += np.conj(s.coefficient) * t.coefficient * system * tilted_overlap(s.probe, t.probe, g)
        return float(total.real)

    def probe_norms(self) -> np.ndarray:
        g = GaussianParams(delta=self.delta)
        return np.array([math.sqrt(tilted_overlap(t.probe, t.probe, g).real) for t in self.terms])


class TriangleSplit(FrozenModel):
    """Full difference and the three pieces bounding it."""

    full: float
    restricted: float
    eigen_tail: float
    weak_tail: float

    @property
    def bound(self) -> float:
        return self.restricted + self.eigen_tail + self.weak_tail


class ErrorCertificate(FrozenModel):
    params: CertificationParams
    epsilon: float
    achieved_norm_diff: float = Field(ge=0.0)
    conservative_bound: float
    tight_bound: float
    model: Literal["gaussian", "qubit"] = "gaussian"
    triangle: Optional[TriangleSplit] = None

    @property
    def passes(self) -> bool:
        return self.achieved_norm_diff <= self.conservative_bound

    def to_record(self) -> Dict:
        return {
            "abar": self.params.abar,
            "wbar": self.params.wbar,
            "xi": self.params.xi,
            "epsilon": self.epsilon,
            "achieved": self.achieved_norm_diff,
            "conservative_bound": self.conservative_bound,
            "paper_bound": self.tight_bound,
            "pass": self.passes,
        }


def conservative_bound(xi: float) -> float:
    """2 sqrt(xi) + 2 sqrt(xi (1 + xi)): restricted bound plus both tail norms."""
    return 2.0 * math.sqrt(xi) + 2.0 * math.sqrt(xi * (1.0 + xi))


def tight_bound(xi: float) -> float:
    return xi * (6.0 + 4.0 * xi)


def provenance_key(A: Observable, psi: SystemState, cfg: CouplingConfig, extra: float = 0.0) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(A.eigenvalues).tobytes())
    digest.update(np.ascontiguousarray(A.eigenvectors).tobytes())
    digest.update(np.ascontiguousarray(psi.amps).tobytes())
    digest.update(repr((cfg.epsilon, cfg.hbar, extra)).encode())
    return digest.hexdigest()


# =========================
# === Closed forms      ===
# =========================
def log_gaussian_normalization(beta: float, g: GaussianParams) -> float:
    return -(g.delta * beta) ** 2


def gaussian_normalization(beta: float, g: GaussianParams) -> float:
    """N = e^{-Delta^2 beta^2}"""
    return math.exp(log_gaussian_normalization(beta, g))


def position_density(q, w: WeakValue, g: GaussianParams):
    """Pointer position density: spread Delta, centre -2 Delta^2 beta."""
    q = np.asarray(q, dtype=float)
    center = -2.0 * g.delta ** 2 * w.beta
    return np.exp(-((q - center) ** 2) / (2.0 * g.delta ** 2)) / math.sqrt(2.0 * math.pi * g.delta ** 2)


def momentum_density(p, w: WeakValue, g: GaussianParams, cfg: CouplingConfig):
    """Pointer momentum density: spread hbar/(2 Delta), centre eps Re A_w."""
    p = np.asarray(p, dtype=float)
    spread = cfg.hbar / (2.0 * g.delta)
    center = cfg.hbar * w.alpha
    return np.exp(-((p - center) ** 2) / (2.0 * spread ** 2)) / math.sqrt(2.0 * math.pi * spread ** 2)


def overlap_Pa_Qw(a: float, w: WeakValue, g: GaussianParams, cfg: CouplingConfig) -> complex:
    """<P_a|Q^w> = exp(-Delta^2 {[beta^2 + (alpha - a')^2]/2 + i (alpha - a') beta}), a' = (eps/hbar) a"""
    shift = w.alpha - cfg.scale * a
    d2 = g.delta ** 2
    return cmath.exp(-d2 * complex(0.5 * (w.beta ** 2 + shift ** 2), shift * w.beta))


def tilted_overlap(x: TiltedGaussian, y: TiltedGaussian, g: GaussianParams) -> complex:
    """<x|y> = conj(p_x) p_y exp(s_x + s_y - Delta^2 mu^2 / 2), mu = lambda_y - conj(lambda_x)"""
    mu = y.tilt - x.tilt.conjugate()
    exponent = x.log_scale + y.log_scale - 0.5 * g.delta ** 2 * mu * mu
    return x.prefactor.conjugate() * y.prefactor * cmath.exp(exponent)


def _char_minus_one(mu: np.ndarray, delta: float) -> np.ndarray:
    """<Q|e^{i mu q}|Q> - 1"""
    return np.expm1(-0.5 * delta ** 2 * np.asarray(mu, dtype=complex) ** 2)


def _gram_norm_sq(c: np.ndarray, tilts: np.ndarray, log_scales: np.ndarray, g: GaussianParams) -> float:
    """Direct Gram sum with the largest single-term norm factored out of every exponent."""
    keep = np.abs(c) > 0.0
    c, tilts, log_scales = c[keep], tilts[keep], log_scales[keep]
    if c.size == 0:
        return 0.0
    d2 = g.delta ** 2
    log_mag = np.log(np.abs(c)) + log_scales
    peak = float(np.max(log_mag + d2 * tilts.imag ** 2))
    mu = tilts[None, :] - np.conj(tilts)[:, None]
    # real part of every entry is <= 0 after the shift
    exponent = log_mag[:, None] + log_mag[None, :] - 0.5 * d2 * mu * mu - 2.0 * peak
    phases = c / np.abs(c)
    gram = np.conj(phases)[:, None] * phases[None, :] * np.exp(exponent)
    return float(gram.sum().real * math.exp(2.0 * peak))


def tilted_sum_norm_sq(coefficients, tilts, g: GaussianParams, reference: float = 0.0, log_scales=None) -> float:
    """
    || sum_i c_i e^{s_i} e^{i lambda_i q}|Q> ||^2 expanded around e^{i reference q}.

    With kappa_i = lambda_i - reference and S = sum_i c_i the vector is
    e^{i reference q}[S + sum_i c_i (e^{i kappa_i q} - 1)]|Q>, and every piece
    of its squared norm is an expm1 of a small argument when the tilts are close.
    Once Delta |Im lambda_i| exceeds CENTERED_TILT_LIMIT the expm1 terms would
    overflow, and the Gram sum is evaluated directly in the log domain instead.
    """
    c = np.asarray(coefficients, dtype=complex)
    if c.size == 0:
        return 0.0
    tilts = np.asarray(tilts, dtype=complex)
    log_scales = np.zeros(c.size) if log_scales is None else np.asarray(log_scales, dtype=float)
    if g.delta * float(np.max(np.abs(tilts.imag))) > CENTERED_TILT_LIMIT:
        return _gram_norm_sq(c, tilts, log_scales, g)
    c = c * np.exp(log_scales)
    kappa = tilts - reference
    total = c.sum()
    first = _char_minus_one(kappa, g.delta)
    cross = np.conj(total) * np.sum(c * first)
    pair = (
        _char_minus_one(kappa[None, :] - np.conj(kappa)[:, None], g.delta)
        - _char_minus_one(-np.conj(kappa), g.delta)[:, None]
        - first[None, :]
    )
    quadratic = np.conj(c) @ pair @ c
    return float(abs(total) ** 2 + 2.0 * cross.real + quadratic.real)


def _clamped_sqrt(squared: float, what: str) -> float:
    if squared >= 0.0:
        return math.sqrt(squared)
    if squared > -ROUNDOFF_CLAMP:
        if squared < -1e-15:
            logger.warning(f"{what}: clamped negative round-off {squared:.3e}")
        return 0.0
    raise ArithmeticError(f"{what}: squared norm {squared:.3e} is negative beyond round-off")


# =========================
# === Composites        ===
# =========================
def exact_composite(A: Observable, psi: SystemState, cfg: CouplingConfig, g: GaussianParams) -> GaussianComposite:
    """sum_a |a><a|psi> e^{i (eps/hbar) a q}|Q>"""
    coefficients = A.coefficients(psi)
    terms = [
        GaussianTerm(
            coefficient=complex(coefficients[k]),
            system_index=k,
            probe=TiltedGaussian.pointer(float(A.eigenvalues[k]), cfg),
            cutoff_key=abs(float(A.eigenvalues[k])),
        )
        for k in range(A.dim)
        if abs(coefficients[k]) > SUPPORT_TOL
    ]
    return GaussianComposite(
        terms=terms,
        basis_tag="eigenbasis",
        system_vectors=A.eigenvectors,
        delta=g.delta,
        provenance=provenance_key(A, psi, cfg, g.delta),
    )


def approx_composite(A: Observable, psi: SystemState, basis: PostselectionBasis, cfg: CouplingConfig,
                     g: GaussianParams) -> GaussianComposite:
    """sum_phi |phi><phi|psi> N e^{i (alpha + i beta) q}|Q>; orthogonal postselections drop out."""
    amplitudes = basis.overlaps(psi)
    terms = []
    for k, phi in enumerate(basis.states()):
        if abs(amplitudes[k]) <= UNDEFINED_OVERLAP:
            continue
        w = weak_value(A, psi, phi, cfg)
        terms.append(
            GaussianTerm(
                coefficient=complex(amplitudes[k]),
                system_index=k,
                probe=TiltedGaussian.weak(w, g),
                cutoff_key=abs(w.value),
            )
        )
    return GaussianComposite(
        terms=terms,
        basis_tag="postselection",
        system_vectors=basis.vectors,
        delta=g.delta,
        provenance=provenance_key(A, psi, cfg, g.delta),
    )


def _check_pair(exact: GaussianComposite, approx: GaussianComposite) -> None:
    if exact.provenance != approx.provenance:
        raise ProvenanceMismatchError("composites were built from different (A, psi, cfg, g)")
    if exact.basis_tag != "eigenbasis" or approx.basis_tag != "postselection":
        raise ValueError("expected an eigenbasis composite and a postselection composite")


def _selected(terms: List[GaussianTerm], cutoff: Optional[float]) -> List[GaussianTerm]:
    if cutoff is None:
        return list(terms)
    return [t for t in terms if t.cutoff_key <= cutoff]


def norm_difference(exact: GaussianComposite, approx: GaussianComposite, cross: Optional[np.ndarray] = None,
                    cutoffs: Optional[CertificationParams] = None) -> float:
    """
    ||exact - approx||, optionally restricted to |a| <= abar and |A_w| <= wbar.

    Args:
        exact: Output of exact_composite
        approx: Output of approx_composite for the same (A, psi, cfg, g)
        cross: Cross-basis overlaps <a|phi> (eigen index x postselection index)
        cutoffs: When given, only the terms inside (abar, wbar) are kept

    Returns:
        Nonnegative norm; round-off above -1e-12 is clamped to zero
    """
    _check_pair(exact, approx)
    if cross is None:
        cross = exact.system_vectors.conj().T @ approx.system_vectors
    g = GaussianParams(delta=exact.delta)
    exact_terms = {t.system_index: t for t in _selected(exact.terms, cutoffs.abar if cutoffs else None)}
    approx_terms = _selected(approx.terms, cutoffs.wbar if cutoffs else None)
    approx_coefficients = np.array([t.coefficient * t.probe.prefactor for t in approx_terms], dtype=complex)
    approx_tilts = np.array([t.probe.tilt for t in approx_terms], dtype=complex)
    approx_scales = np.array([t.probe.log_scale for t in approx_terms], dtype=float)
    approx_index = [t.system_index for t in approx_terms]

    squared = 0.0
    for a in range(cross.shape[0]):
        coefficients = -cross[a, approx_index] * approx_coefficients
        tilts = approx_tilts
        scales = approx_scales
        reference = 0.0
        if a in exact_terms:
            term = exact_terms[a]
            reference = term.probe.tilt.real
            coefficients = np.concatenate([[term.coefficient], coefficients])
            tilts = np.concatenate([[term.probe.tilt], tilts])
            scales = np.concatenate([[term.probe.log_scale], scales])
        squared += tilted_sum_norm_sq(coefficients, tilts, g, reference, scales)
    return _clamped_sqrt(squared, "norm_difference")


def expanded_norm_difference(exact: GaussianComposite, approx: GaussianComposite,
                             cutoffs: Optional[CertificationParams] = None) -> float:
    """Literal expansion sum|<a|psi>|^2 + sum|<phi|psi>|^2 - 2 Re sum sum <psi|a><a|phi><phi|psi><P_a|Q^w>."""
    _check_pair(exact, approx)
    g = GaussianParams(delta=exact.delta)
    exact_terms = _selected(exact.terms, cutoffs.abar if cutoffs else None)
    approx_terms = _selected(approx.terms, cutoffs.wbar if cutoffs else None)
    squared = sum(abs(t.coefficient) ** 2 for t in exact_terms) + sum(abs(t.coefficient) ** 2 for t in approx_terms)
    for s in exact_terms:
        for t in approx_terms:
            system = np.vdot(exact.system_vectors[:, s.system_index], approx.system_vectors[:, t.system_index])
            squared -= 2.0 * (np.conj(s.coefficient) * system * t.coefficient * tilted_overlap(s.probe, t.probe, g)).real
    return _clamped_sqrt(float(squared), "expanded_norm_difference")


def triangle_split(exact: GaussianComposite, approx: GaussianComposite, params: CertificationParams) -> TriangleSplit:
    """Full difference, restricted difference and the two tail norms (unit-norm probes)."""
    eigen_tail = sum(abs(t.coefficient) ** 2 for t in exact.terms if t.cutoff_key > params.abar)
    weak_tail = sum(abs(t.coefficient) ** 2 for t in approx.terms if t.cutoff_key > params.wbar)
    return TriangleSplit(
        full=norm_difference(exact, approx),
        restricted=norm_difference(exact, approx, cutoffs=params),
        eigen_tail=math.sqrt(eigen_tail),
        weak_tail=math.sqrt(weak_tail),
    )


def postselected_difference(A: Observable, psi: SystemState, phi: SystemState, cfg: CouplingConfig,
                            g: GaussianParams) -> float:
    """|| <phi|e^{i(eps/hbar) A q}|psi>|Q> - <phi|psi> N e^{i(alpha + i beta) q}|Q> ||"""
    w = weak_value(A, psi, phi, cfg)
    amplitude = complex(np.vdot(phi.amps, psi.amps))
    weights = np.conj(A.coefficients(phi)) * A.coefficients(psi)
    coefficients = np.concatenate([weights, [-amplitude]])
    tilts = np.concatenate([cfg.scale * A.eigenvalues.astype(complex), [w.tilt]])
    scales = np.concatenate([np.zeros(A.dim), [log_gaussian_normalization(w.beta, g)]])
    squared = tilted_sum_norm_sq(coefficients, tilts, g, reference=w.alpha, log_scales=scales)
    return _clamped_sqrt(squared, "postselected_difference")


# =========================
# === Certification     ===
# =========================
def epsilon_ceiling(params: CertificationParams, g: GaussianParams, hbar: float = 1.0) -> float:
    """(eps Delta / hbar)(wbar + abar) = sqrt(pi/2)"""
    return math.sqrt(math.pi / 2.0) * hbar / (g.delta * (params.wbar + params.abar))


def _admissible(epsilon: float, params: CertificationParams, g: GaussianParams, hbar: float) -> bool:
    x = (epsilon * g.delta / hbar * (params.wbar + params.abar)) ** 2
    return 1.0 - math.exp(-x) * math.cos(x) < params.xi and math.sin(x) < params.xi


def certify_epsilon(A: Observable, psi: SystemState, basis: PostselectionBasis, g: GaussianParams,
                    params: CertificationParams, hbar: float = 1.0) -> ErrorCertificate:
    """
    Largest epsilon on the halving grid below the ceiling that meets both
    xi-conditions, with the achieved norm difference at that coupling.
    """
    epsilon = epsilon_ceiling(params, g, hbar)
    for _ in range(MAX_HALVINGS):
        if _admissible(epsilon, params, g, hbar):
            break
        epsilon *= 0.5
    else:
        logger.warning(f"epsilon grid exhausted after {MAX_HALVINGS} halvings; using {epsilon:.3e}")
    cfg = CouplingConfig(epsilon=epsilon, hbar=hbar)
    split = triangle_split(exact_composite(A, psi, cfg, g), approx_composite(A, psi, basis, cfg, g), params)
    logger.info(f"gaussian certificate: eps={epsilon:.6g}, achieved={split.full:.3e}, xi={params.xi}")
    return ErrorCertificate(
        params=params,
        epsilon=epsilon,
        achieved_norm_diff=split.full,
        conservative_bound=conservative_bound(params.xi),
        tight_bound=tight_bound(params.xi),
        model="gaussian",
        triangle=split,
    )


def bound_chain_slack(A: Observable, psi: SystemState, basis: PostselectionBasis, g: GaussianParams,
                      cfg: CouplingConfig, params: CertificationParams) -> Dict[str, float]:
    """
    Worst slack of the factor bounds over |a| <= abar and |A_w| <= wbar.

    With x = (eps Delta / hbar)^2 (wbar + abar)^2 each pair must satisfy
    e^{-x} <= |<P_a|Q^w>| <= 1, cos(theta) >= cos(x) and |sin(theta)| <= sin(x),
    theta being the phase of the overlap. Negative slack means a violation.
    """
    x = (cfg.scale * g.delta * (params.wbar + params.abar)) ** 2
    k = (cfg.scale * g.delta) ** 2
    slack = {"exp": math.inf, "cos": math.inf, "sin": math.inf}
    for phi in basis.states():
        if abs(np.vdot(phi.amps, psi.amps)) <= UNDEFINED_OVERLAP:
            continue
        aw = weak_value(A, psi, phi, cfg).value
        if abs(aw) > params.wbar:
            continue
        for a in A.eigenvalues[np.abs(A.eigenvalues) <= params.abar]:
            factor = math.exp(-k * 0.5 * (aw.imag ** 2 + (aw.real - a) ** 2))
            theta = k * (aw.real - a) * aw.imag
            slack["exp"] = min(slack["exp"], factor - math.exp(-x), 1.0 - factor)
            slack["cos"] = min(slack["cos"], math.cos(theta) - math.cos(x))
            slack["sin"] = min(slack["sin"], math.sin(x) - abs(math.sin(theta)))
    return slack
