import sys
from pathlib import Path

import numpy as np
import pytest

# Add repo root to path
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from weakval_analysis.services.hilbert import Observable, PostselectionBasis, SystemState, random_instance  # noqa: E402
from weakval_analysis.services.weakcore import CouplingConfig  # noqa: E402


@pytest.fixture
def dim4_seed7():
    return random_instance(4, 7)


@pytest.fixture
def dim3_seed0():
    return random_instance(3, 0)


@pytest.fixture
def sigma_z():
    return Observable(eigenvalues=[1.0, -1.0], eigenvectors=np.eye(2))


@pytest.fixture
def plus_x():
    return SystemState.of([1.0, 1.0], normalize=True)


@pytest.fixture
def eigen_setup(dim4_seed7):
    """Instance whose postselection basis is the observable's own eigenbasis."""
    A, psi, _ = dim4_seed7.astuple()
    return A, psi, PostselectionBasis.eigenbasis(A)


@pytest.fixture
def unit_coupling():
    return CouplingConfig(epsilon=1.0)
