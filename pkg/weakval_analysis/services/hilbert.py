"""
Finite-dimensional Hilbert space core.

System states, inner products, Hermitian spectral decomposition by cyclic
Jacobi rotations, orthonormal postselection bases and the seeded instance
generator used by sweeps and tests.
"""
import json
import logging
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from pydantic import field_validator, model_validator

from .common import (
    HERMITIAN_TOL,
    NORMALIZED_TOL,
    ORTHONORMAL_TOL,
    DimensionMismatchError,
    FrozenModel,
    NonHermitianError,
    SpectralConvergenceError,
    readonly_array,
)

logger = logging.getLogger(__name__)

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 100
TIE_SPACING = 1e-6
MIN_OVERLAP_SCALE = 0.2
MAX_SALT = 10_000


class SystemState(FrozenModel):
    """Amplitude vector of the system proper."""

    amps: np.ndarray

    @field_validator("amps", mode="before")
    @classmethod
    def _as_vector(cls, value):
        array = readonly_array(value, complex)
        if array.ndim != 1 or array.size == 0:
            raise ValueError("amps must be a non-empty 1-d vector")
        return array

    @classmethod
    def of(cls, values: Sequence[complex], normalize: bool = False) -> "SystemState":
        state = cls(amps=values)
        return state.normalized() if normalize else state

    @classmethod
    def basis_vector(cls, dim: int, index: int) -> "SystemState":
        amps = np.zeros(dim, dtype=complex)
        amps[index] = 1.0
        return cls(amps=amps)

    @property
    def dim(self) -> int:
        return int(self.amps.size)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def is_normalized(self, tol: float = NORMALIZED_TOL) -> bool:
        return abs(float(np.vdot(self.amps, self.amps).real) - 1.0) <= tol

    def normalized(self) -> "SystemState":
        norm = self.norm()
        if norm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return SystemState(amps=self.amps / norm)


def _check_orthonormal_columns(vectors: np.ndarray, what: str) -> None:
    if vectors.ndim != 2 or vectors.shape[0] != vectors.shape[1] or vectors.shape[0] == 0:
        raise ValueError(f"{what} must be a non-empty square matrix of column vectors")
    gram = vectors.conj().T @ vectors
    deviation = float(np.max(np.abs(gram - np.eye(vectors.shape[0]))))
    if deviation > ORTHONORMAL_TOL:
        raise ValueError(f"{what} are not orthonormal (max Gram deviation {deviation:.3e})")


class Observable(FrozenModel):
    """Hermitian operator held as spectral data; eigenvectors are the columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @field_validator("eigenvalues", mode="before")
    @classmethod
    def _real_vector(cls, value):
        array = readonly_array(value, float)
        if array.ndim != 1:
            raise ValueError("eigenvalues must be a 1-d vector")
        return array

    @field_validator("eigenvectors", mode="before")
    @classmethod
    def _complex_matrix(cls, value):
        return readonly_array(value, complex)

    @model_validator(mode="after")
    def _consistent(self):
        if self.eigenvectors.shape != (self.eigenvalues.size, self.eigenvalues.size):
            raise ValueError("eigenvectors must be dim x dim with one column per eigenvalue")
        _check_orthonormal_columns(self.eigenvectors, "eigenvectors")
        return self

    @property
    def dim(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def operator_norm(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    def vector(self, index: int) -> SystemState:
        return SystemState(amps=self.eigenvectors[:, index])

    def states(self) -> List[SystemState]:
        return [self.vector(k) for k in range(self.dim)]

    def coefficients(self, psi: SystemState) -> np.ndarray:
        """Eigen-components <a|psi>."""
        if psi.dim != self.dim:
            raise DimensionMismatchError(self.dim, psi.dim)
        return self.eigenvectors.conj().T @ psi.amps

    def apply_power(self, psi: SystemState, power: int) -> np.ndarray:
        """A^j |psi> by a^j weighting of the eigen-components."""
        if power < 0:
            raise ValueError("power must be nonnegative")
        return self.eigenvectors @ (self.eigenvalues ** power * self.coefficients(psi))

    def apply(self, psi: SystemState) -> np.ndarray:
        return self.apply_power(psi, 1)

    def matrix(self) -> np.ndarray:
        """Reconstruction sum_a a|a><a|."""
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.conj().T


class PostselectionBasis(FrozenModel):
    """Complete orthonormal set of postselections; columns are the states."""

    vectors: np.ndarray

    @field_validator("vectors", mode="before")
    @classmethod
    def _complex_matrix(cls, value):
        return readonly_array(value, complex)

    @model_validator(mode="after")
    def _orthonormal(self):
        _check_orthonormal_columns(self.vectors, "postselection states")
        return self

    @classmethod
    def from_states(cls, states: Sequence[SystemState]) -> "PostselectionBasis":
        return cls(vectors=np.column_stack([s.amps for s in states]))

    @classmethod
    def from_matrix(cls, matrix) -> "PostselectionBasis":
        return cls(vectors=np.asarray(matrix, dtype=complex))

    @classmethod
    def eigenbasis(cls, observable: Observable) -> "PostselectionBasis":
        return cls(vectors=observable.eigenvectors)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[0])

    def state(self, index: int) -> SystemState:
        return SystemState(amps=self.vectors[:, index])

    def states(self) -> List[SystemState]:
        return [self.state(k) for k in range(self.dim)]

    def overlaps(self, psi: SystemState) -> np.ndarray:
        """Postselection amplitudes <phi|psi>."""
        if psi.dim != self.dim:
            raise DimensionMismatchError(self.dim, psi.dim)
        return self.vectors.conj().T @ psi.amps


class RandomInstance(FrozenModel):
    observable: Observable
    psi: SystemState
    basis: PostselectionBasis
    seed: int
    salt: int

    def astuple(self) -> Tuple[Observable, SystemState, PostselectionBasis]:
        return self.observable, self.psi, self.basis


def inner(x: SystemState, y: SystemState) -> complex:
    """<x|y>, conjugate-linear in `x`."""
    if x.dim != y.dim:
        raise DimensionMismatchError(x.dim, y.dim)
    return complex(np.vdot(x.amps, y.amps))


# =========================
# === Jacobi rotations  ===
# =========================
def _off_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - np.diag(np.diag(a))))


def _rotate(a: np.ndarray, v: np.ndarray, p: int, q: int) -> None:
    """Annihilate a[p, q] with a unitary phase-then-rotate step, in place."""
    apq = a[p, q]
    magnitude = abs(apq)
    phase = np.conj(apq / magnitude)
    theta = (a[q, q].real - a[p, p].real) / (2.0 * magnitude)
    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
    if theta < 0.0:
        t = -t
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c
    g = np.array([[c, s], [-s * phase, c * phase]], dtype=complex)
    idx = [p, q]
    a[:, idx] = a[:, idx] @ g
    a[idx, :] = g.conj().T @ a[idx, :]
    a[p, q] = a[q, p] = 0.0
    a[p, p] = a[p, p].real
    a[q, q] = a[q, q].real
    v[:, idx] = v[:, idx] @ g


def _fix_phase(vector: np.ndarray) -> Tuple[np.ndarray, int]:
    """Rotate the first nonzero component onto the positive real axis."""
    nonzero = np.flatnonzero(np.abs(vector) > 1e-12)
    first = int(nonzero[0]) if nonzero.size else 0
    pivot = vector[first]
    if abs(pivot) > 0.0:
        vector = vector * (abs(pivot) / pivot)
    return vector, first


def hermitian_spectral(matrix, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS) -> Observable:
    """
    Diagonalize a dense Hermitian matrix with cyclic complex Jacobi rotations.

    Args:
        matrix: Square complex matrix equal to its conjugate transpose within 1e-10
        tol: Off-diagonal Frobenius tolerance, relative to the matrix norm
        max_sweeps: Maximum number of cyclic sweeps

    Returns:
        Observable with ascending eigenvalues and phase-fixed eigenvectors

    Raises:
        NonHermitianError: If the input is not Hermitian
        SpectralConvergenceError: If the sweeps are exhausted
    """
    m = np.array(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ValueError("matrix must be square and non-empty")
    deviation = float(np.max(np.abs(m - m.conj().T)))
    if deviation > HERMITIAN_TOL:
        raise NonHermitianError(deviation)

    a = 0.5 * (m + m.conj().T)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    threshold = tol * max(float(np.linalg.norm(a)), 1.0)
    # entries below this stay; together they sum to less than threshold
    negligible = threshold / n

    sweeps = 0
    off = _off_norm(a)
    while off > threshold:
        if sweeps >= max_sweeps:
            raise SpectralConvergenceError(off, sweeps)
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) > negligible:
                    _rotate(a, v, p, q)
        sweeps += 1
        off = _off_norm(a)
    logger.debug(f"Jacobi converged in {sweeps} sweeps (dim={n}, off={off:.3e})")

    eigenvalues = np.real(np.diag(a)).copy()
    columns = []
    keys = []
    for k in range(n):
        vector, first = _fix_phase(v[:, k])
        columns.append(vector)
        keys.append((round(float(eigenvalues[k]), 10), first, -abs(vector[first])))
    order = sorted(range(n), key=lambda k: keys[k])
    return Observable(
        eigenvalues=eigenvalues[order],
        eigenvectors=np.column_stack([columns[k] for k in order]),
    )


# =========================
# === Random instances  ===
# =========================
def random_state(dim: int, rng: np.random.Generator) -> SystemState:
    amps = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return SystemState(amps=amps / np.linalg.norm(amps))


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    return 0.5 * (g + g.conj().T)


def random_basis(dim: int, rng: np.random.Generator) -> PostselectionBasis:
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    diagonal = np.diag(r)
    return PostselectionBasis(vectors=q * (diagonal / np.abs(diagonal)))


def _separate_ties(observable: Observable) -> Observable:
    eigenvalues = np.array(observable.eigenvalues)
    perturbed = False
    for k in range(1, eigenvalues.size):
        if eigenvalues[k] - eigenvalues[k - 1] < TIE_SPACING:
            eigenvalues[k] = eigenvalues[k - 1] + TIE_SPACING
            perturbed = True
    if not perturbed:
        return observable
    logger.warning("Near-degenerate eigenvalues separated by the minimum tie spacing")
    return Observable(eigenvalues=eigenvalues, eigenvectors=observable.eigenvectors)


def random_instance(dim: int, seed: int, max_salt: int = MAX_SALT) -> RandomInstance:
    """
    Seeded (observable, preselection, postselection basis) triple.

    The salt is rerolled until every postselection overlaps psi by more than
    0.2/sqrt(dim), so every weak value in the instance is defined.
    """
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")

    threshold = MIN_OVERLAP_SCALE / np.sqrt(dim)
    for salt in range(max_salt):
        rng = np.random.default_rng([seed, salt])
        observable = _separate_ties(hermitian_spectral(random_hermitian(dim, rng)))
        psi = random_state(dim, rng)
        basis = random_basis(dim, rng)
        if np.min(np.abs(basis.overlaps(psi))) > threshold:
            if salt:
                logger.debug(f"random_instance(dim={dim}, seed={seed}) accepted salt {salt}")
            return RandomInstance(observable=observable, psi=psi, basis=basis, seed=seed, salt=salt)
    raise RuntimeError(f"no admissible instance for dim={dim}, seed={seed} within {max_salt} salts")


# =========================
# === Matrix input      ===
# =========================
def parse_matrix_json(text: str) -> np.ndarray:
    """Parse a row-major JSON array-of-arrays of [re, im] pairs (bare reals allowed)."""
    try:
        rows = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"matrix is not valid JSON: {e}") from e
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ValueError("matrix must be a non-empty JSON array of rows")

    def _entry(value: Union[list, float, int]) -> complex:
        if isinstance(value, (int, float)):
            return complex(value, 0.0)
        if isinstance(value, list) and len(value) == 2:
            return complex(float(value[0]), float(value[1]))
        raise ValueError(f"matrix entry must be [re, im] or a real number, got {value!r}")

    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("matrix rows have different lengths")
    return np.array([[_entry(v) for v in r] for r in rows], dtype=complex)


def load_matrix_file(path: Union[str, Path]) -> np.ndarray:
    return parse_matrix_json(Path(path).read_text(encoding="utf-8"))
