"""
Weakval Services Package
Hilbert-space core, weak values, probe models, bounds and oracles
"""

from .common import (
    CouplingTooStrongError,
    DimensionMismatchError,
    MatExpConvergenceError,
    NonHermitianError,
    ProvenanceMismatchError,
    QuadratureWindowError,
    SpectralConvergenceError,
    UndefinedWeakValueError,
)
from .hilbert import Observable, PostselectionBasis, SystemState, hermitian_spectral, load_matrix_file, random_instance
from .weakcore import CertificationParams, CouplingConfig, WeakValue, choose_thresholds, weak_value, weak_values
from .gaussian_probe import GaussianParams, certify_epsilon, momentum_density, position_density
from .qubit_probe import BlochAxis, certify_epsilon_qubit, prob_axis_table
from .appendix_checks import AppendixChecks, OracleChecks

__all__ = [
    'CouplingTooStrongError',
    'DimensionMismatchError',
    'MatExpConvergenceError',
    'NonHermitianError',
    'ProvenanceMismatchError',
    'QuadratureWindowError',
    'SpectralConvergenceError',
    'UndefinedWeakValueError',
    'Observable',
    'PostselectionBasis',
    'SystemState',
    'hermitian_spectral',
    'load_matrix_file',
    'random_instance',
    'CertificationParams',
    'CouplingConfig',
    'WeakValue',
    'choose_thresholds',
    'weak_value',
    'weak_values',
    'GaussianParams',
    'certify_epsilon',
    'momentum_density',
    'position_density',
    'BlochAxis',
    'certify_epsilon_qubit',
    'prob_axis_table',
    'AppendixChecks',
    'OracleChecks',
]
