import math

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings
from scipy.linalg import expm

from weakval_analysis.services.appendix_checks import AppendixChecks, OracleChecks
from weakval_analysis.services.common import QuadratureWindowError
from weakval_analysis.services.gaussian_probe import GaussianParams, TiltedGaussian, gaussian_normalization, tilted_overlap
from weakval_analysis.services.hilbert import Observable, SystemState, random_hermitian
from weakval_analysis.services.oracle import (
    MatExpSpec,
    QuadratureSpec,
    dense_expm_apply,
    dense_qubit_normalization,
    dense_qubit_overlap,
    dense_qubit_probability,
    matrix_exp,
    quad_normalization,
    quad_overlap,
    series_partial_sums,
)
from weakval_analysis.services.qubit_probe import (
    BlochAxis,
    QubitState,
    evolve_qubit,
    exact_composite_qubit,
    overlap_qubit,
    prob_plus_axis,
    qubit_normalization,
)
from weakval_analysis.services.weakcore import (
    CouplingConfig,
    WeakValue,
    gaussian_probe_moments,
    qubit_probe_moments,
    taylor_partial_sums,
)

finite = dict(allow_nan=False, allow_infinity=False)
deltas = st.floats(min_value=0.3, max_value=2.0, **finite)
unit = st.floats(min_value=-1.0, max_value=1.0, **finite)


def tilt_of(re, im, delta):
    return complex(3.0 * re / delta, 0.75 * im / delta)


def test_ground_state_overlap_is_one():
    g = GaussianParams(delta=1.0)
    assert quad_overlap(TiltedGaussian(), TiltedGaussian(), g) == pytest.approx(1.0, abs=1e-10)


def test_quadrature_hermiticity():
    g = GaussianParams(delta=0.8)
    x = TiltedGaussian(tilt=0.5 + 0.3j, prefactor=1.1)
    y = TiltedGaussian(tilt=-0.7 - 0.2j)
    assert quad_overlap(x, y, g) == pytest.approx(quad_overlap(y, x, g).conjugate(), abs=1e-12)


def test_window_too_small():
    g = GaussianParams(delta=1.0)
    with pytest.raises(QuadratureWindowError) as info:
        quad_overlap(TiltedGaussian(), TiltedGaussian(tilt=5j), g, QuadratureSpec(half_width=9.0))
    assert info.value.required == pytest.approx(13.0)
    assert info.value.half_width == 9.0


@settings(max_examples=100, deadline=None)
@given(unit, unit, unit, unit, deltas)
def test_quadrature_matches_closed_overlap(xr, xi, yr, yi, delta):
    g = GaussianParams(delta=delta)
    x = TiltedGaussian(tilt=tilt_of(xr, xi, delta))
    y = TiltedGaussian(tilt=tilt_of(yr, yi, delta))
    closed = tilted_overlap(x, y, g)
    quadrature = quad_overlap(x, y, g, QuadratureSpec.covering(x, y, g))
    assert abs(quadrature - closed) <= 1e-7 * max(1.0, abs(closed))


def test_point_doubling_is_stable():
    g = GaussianParams(delta=1.3)
    x = TiltedGaussian(tilt=1.2 - 0.4j)
    y = TiltedGaussian(tilt=-0.6 + 0.5j)
    spec = QuadratureSpec.covering(x, y, g)
    finer = QuadratureSpec(half_width=spec.half_width, points=2 * spec.points)
    coarse = quad_overlap(x, y, g, spec)
    assert abs(quad_overlap(x, y, g, finer) - coarse) < 1e-9 * max(1.0, abs(coarse))


def test_simpson_rule_agrees():
    g = GaussianParams(delta=0.7)
    x = TiltedGaussian(tilt=0.9 + 0.1j)
    y = TiltedGaussian(tilt=-1.4 + 0.6j)
    closed = tilted_overlap(x, y, g)
    simpson = quad_overlap(x, y, g, QuadratureSpec.covering(x, y, g, rule="simpson"))
    assert abs(simpson - closed) <= 1e-7 * max(1.0, abs(closed))


@pytest.mark.parametrize("beta", [0.0, 0.3, -1.1])
def test_quadrature_normalization(beta):
    g = GaussianParams(delta=0.9)
    assert quad_normalization(beta, g) == pytest.approx(gaussian_normalization(beta, g), abs=1e-7)


def test_quadrature_includes_log_scale():
    g = GaussianParams(delta=0.8)
    cfg = CouplingConfig(epsilon=0.5)
    probe = TiltedGaussian.weak(WeakValue.from_value(1.0 + 1.2j, cfg), g)
    pointer = TiltedGaussian.pointer(0.7, cfg)
    spec = QuadratureSpec.covering(pointer, probe, g)
    assert quad_overlap(pointer, probe, g, spec) == pytest.approx(tilted_overlap(pointer, probe, g), abs=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_matrix_exp_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    m = 1j * random_hermitian(5, rng)
    result = matrix_exp(m)
    np.testing.assert_allclose(result.matrix, expm(m), atol=1e-11)
    assert result.truncation_estimate < 1e-15


def test_matrix_exp_of_zero_is_identity():
    result = matrix_exp(np.zeros((3, 3)))
    np.testing.assert_array_equal(result.matrix, np.eye(3))
    assert result.squarings == 0
    assert result.truncation_estimate == 0.0


def test_matrix_exp_squares_large_generators():
    m = 8.0j * np.array([[0.0, 1.0], [1.0, 0.0]])
    result = matrix_exp(m, MatExpSpec(scaling_squaring_threshold=0.5))
    assert result.squarings == 4
    np.testing.assert_allclose(result.matrix, expm(m), atol=1e-12)


def test_dense_apply_without_coupling(dim4_seed7):
    A, psi, _ = dim4_seed7.astuple()
    dense = dense_expm_apply(A, CouplingConfig(epsilon=0.0), psi)
    assert dense.basis_tag == "computational"
    np.testing.assert_allclose(dense.amps, np.kron(psi.amps, [1.0, 0.0]), atol=1e-15)


def test_dense_apply_on_eigenvector():
    A = Observable(eigenvalues=[-0.3, 0.7], eigenvectors=np.eye(2))
    cfg = CouplingConfig(epsilon=0.6)
    dense = dense_expm_apply(A, cfg, SystemState.basis_vector(2, 1))
    probe = evolve_qubit(cfg.scale * 0.7, QubitState.plus_z())
    np.testing.assert_allclose(dense.amps, np.concatenate([[0.0, 0.0], probe.vector]), atol=1e-12)


@pytest.mark.parametrize("epsilon", [0.05, 0.5, 2.0])
def test_dense_apply_matches_exact_composite(dim4_seed7, epsilon):
    A, psi, _ = dim4_seed7.astuple()
    cfg = CouplingConfig(epsilon=epsilon)
    np.testing.assert_allclose(dense_expm_apply(A, cfg, psi).amps, exact_composite_qubit(A, psi, cfg).amps, atol=1e-10)


def test_series_partial_sums_limits(dim3_seed0):
    A, psi, basis = dim3_seed0.astuple()
    phi = basis.state(0)
    cfg = CouplingConfig(epsilon=0.2)
    sums = series_partial_sums(A, psi, phi, cfg, qubit_probe_moments(0), 0)
    assert sums[0] == pytest.approx(complex(np.vdot(phi.amps, psi.amps)), abs=1e-15)
    with pytest.raises(ValueError):
        series_partial_sums(A, psi, phi, cfg, qubit_probe_moments(31), 31)
    with pytest.raises(ValueError):
        series_partial_sums(A, psi, phi, cfg, qubit_probe_moments(3), 5)


def test_series_for_identity_is_cosine():
    A = Observable(eigenvalues=[1.0, 1.0], eigenvectors=np.eye(2))
    psi = SystemState.of([1.0, 1.0], normalize=True)
    phi = SystemState.of([1.0, 0.0])
    sums = series_partial_sums(A, psi, phi, CouplingConfig(epsilon=0.4), qubit_probe_moments(20), 20)
    assert sums[-1] == pytest.approx(math.sqrt(0.5) * math.cos(0.4), abs=1e-14)


def test_series_sums_match_spectral_and_closed_forms(dim3_seed0):
    A, psi, basis = dim3_seed0.astuple()
    phi = basis.state(1)
    cfg = CouplingConfig(epsilon=0.3)
    weights = np.conj(A.coefficients(phi)) * A.coefficients(psi)

    moments = qubit_probe_moments(20)
    dense = series_partial_sums(A, psi, phi, cfg, moments, 20)
    np.testing.assert_allclose(dense, taylor_partial_sums(A, psi, phi, cfg, moments, 20), atol=1e-12)
    assert dense[-1] == pytest.approx(complex(np.sum(weights * np.cos(cfg.scale * A.eigenvalues))), abs=1e-12)

    moments = gaussian_probe_moments(20, 1.0)
    dense = series_partial_sums(A, psi, phi, cfg, moments, 20)
    closed = np.sum(weights * np.exp(-0.5 * (cfg.scale * A.eigenvalues) ** 2))
    assert dense[-1] == pytest.approx(complex(closed), abs=1e-12)


@settings(max_examples=100)
@given(st.floats(min_value=-2.0, max_value=2.0, **finite), unit, unit,
       st.floats(min_value=0.0, max_value=math.pi, **finite), st.floats(min_value=0.0, max_value=6.28, **finite))
def test_dense_qubit_engines_match_closed_forms(a, re, im, theta, eta):
    cfg = CouplingConfig(epsilon=0.7)
    w = WeakValue.from_value(complex(2.0 * re, 2.0 * im), cfg)
    assert dense_qubit_normalization(w.beta) == pytest.approx(qubit_normalization(w), abs=1e-12)
    assert dense_qubit_overlap(a, w, cfg) == pytest.approx(overlap_qubit(a, w, cfg), abs=1e-12)
    axis = BlochAxis(theta=theta, eta=eta)
    assert dense_qubit_probability(w, axis) == pytest.approx(prob_plus_axis(w, axis), abs=1e-12)


def test_oracle_suite_passes():
    report = OracleChecks(cases=20).run()
    assert report['passed'], report['failed']
    assert [c['name'] for c in report['checks']] == [
        'gaussian_overlaps',
        'gaussian_normalization',
        'readout_densities',
        'qubit_overlaps',
        'qubit_probabilities',
        'qubit_composite',
        'series_sums',
    ]


def test_appendix_suite_passes():
    report = AppendixChecks(dominance_instances=10).run()
    assert report['passed'], report['failed']
    assert len(report['checks']) == 6
    assert all(c['max_residual'] <= c['tolerance'] for c in report['checks'])


def test_oracle_suite_default_size():
    report = OracleChecks().run()
    assert report['passed'], report['failed']
    cases = {c['name']: c['cases'] for c in report['checks']}
    for name in ('gaussian_overlaps', 'gaussian_normalization', 'qubit_overlaps', 'qubit_probabilities'):
        assert cases[name] == 1000
