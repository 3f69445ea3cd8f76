"""
Shared building blocks for the weak value services.

Frozen pydantic base model, numeric tolerances and the domain exceptions
raised across the lab.
"""
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict


# =========================
# === Tolerances        ===
# =========================
NORMALIZED_TOL = 1e-12
ORTHONORMAL_TOL = 1e-10
HERMITIAN_TOL = 1e-10
UNDEFINED_OVERLAP = 1e-14
SUPPORT_TOL = 1e-14
ROUNDOFF_CLAMP = 1e-12
CUTOFF_FLOOR = 1e-12


class FrozenModel(BaseModel):
    """Immutable value object; array fields are stored read-only."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


def readonly_array(values, dtype=complex) -> np.ndarray:
    """Copy `values` into a read-only numpy array, rejecting NaN/Inf."""
    array = np.array(values, dtype=dtype, copy=True)
    if not np.all(np.isfinite(array)):
        raise ValueError("array contains NaN or Inf entries")
    array.flags.writeable = False
    return array


# =========================
# === Exceptions        ===
# =========================
class DimensionMismatchError(ValueError):
    """Two states or operators of different dimension were combined."""

    def __init__(self, left: int, right: int):
        super().__init__(f"dimension mismatch: {left} != {right}")
        self.left = left
        self.right = right


class NonHermitianError(ValueError):
    """A matrix handed to the spectral solver is not Hermitian."""

    def __init__(self, deviation: float):
        super().__init__(f"matrix is not Hermitian (max |M - M^H| = {deviation:.3e})")
        self.deviation = deviation


class SpectralConvergenceError(RuntimeError):
    """Jacobi sweeps ran out before the off-diagonal norm fell below tolerance."""

    def __init__(self, residual: float, sweeps: int):
        super().__init__(f"Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal norm {residual:.3e})")
        self.residual = residual
        self.sweeps = sweeps


class UndefinedWeakValueError(ValueError):
    """Pre- and postselection are orthogonal; the weak value does not exist."""

    def __init__(self, overlap_mag: float):
        super().__init__(f"weak value undefined: |<phi|psi>| = {overlap_mag:.3e}")
        self.overlap_mag = overlap_mag


class CouplingTooStrongError(ValueError):
    """The geometric series behind the series error bound diverges (r >= 1)."""

    def __init__(self, ratio: float):
        super().__init__(f"coupling too strong for the series bound: r = {ratio:.6g} >= 1")
        self.ratio = ratio


class QuadratureWindowError(ValueError):
    """The quadrature window does not cover the shifted integrand."""

    def __init__(self, half_width: float, required: float):
        super().__init__(
            f"quadrature window too small: half_width={half_width:.6g} Delta, required >= {required:.6g} Delta"
        )
        self.half_width = half_width
        self.required = required


class ProvenanceMismatchError(ValueError):
    """Composite states built from different (A, psi, cfg, g) were compared."""


class MatExpConvergenceError(RuntimeError):
    """The scaled Taylor exponential failed its unitarity check."""

    def __init__(self, residual: float, order: int, detail: Optional[str] = None):
        message = f"matrix exponential residual {residual:.3e} at Taylor order {order}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)
        self.residual = residual
        self.order = order
