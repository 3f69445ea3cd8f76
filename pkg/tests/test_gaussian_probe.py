import math

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings

from weakval_analysis.services.common import ProvenanceMismatchError
from weakval_analysis.services.gaussian_probe import (
    CENTERED_TILT_LIMIT,
    GaussianParams,
    TiltedGaussian,
    approx_composite,
    bound_chain_slack,
    certify_epsilon,
    conservative_bound,
    epsilon_ceiling,
    exact_composite,
    expanded_norm_difference,
    gaussian_normalization,
    momentum_density,
    norm_difference,
    overlap_Pa_Qw,
    tight_bound,
    position_density,
    postselected_difference,
    tilted_overlap,
    triangle_split,
)
from weakval_analysis.services.hilbert import random_instance
from weakval_analysis.services.oracle import quad_density_moments
from weakval_analysis.services.weakcore import CertificationParams, CouplingConfig, WeakValue, choose_thresholds, weak_value

EPSILONS = [1e-1, 1e-2, 1e-3, 1e-4]
UNIT = GaussianParams(delta=1.0)

finite = dict(allow_nan=False, allow_infinity=False)


def sweep(A, psi, basis, g=UNIT):
    diffs = []
    for epsilon in EPSILONS:
        cfg = CouplingConfig(epsilon=epsilon)
        diffs.append(norm_difference(exact_composite(A, psi, cfg, g), approx_composite(A, psi, basis, cfg, g)))
    return diffs


def test_normalization_examples():
    assert gaussian_normalization(2.0, GaussianParams(delta=0.5)) == pytest.approx(math.exp(-1.0), abs=1e-15)
    assert gaussian_normalization(0.0, UNIT) == 1.0


@settings(max_examples=200)
@given(st.floats(min_value=-50.0, max_value=50.0, **finite), st.floats(min_value=0.1, max_value=10.0, **finite))
def test_normalization_never_exceeds_one(beta, delta):
    n = gaussian_normalization(beta, GaussianParams(delta=delta))
    assert 0.0 <= n <= 1.0
    if beta == 0.0:
        assert n == 1.0
    elif abs(beta * delta) > 1e-6:
        assert n < 1.0


@settings(max_examples=100)
@given(st.floats(min_value=-3.0, max_value=3.0, **finite), st.complex_numbers(max_magnitude=3.0, **finite),
       st.floats(min_value=0.2, max_value=3.0, **finite))
def test_overlap_closed_form_matches_tilted_overlap(a, value, delta):
    g = GaussianParams(delta=delta)
    cfg = CouplingConfig(epsilon=0.4)
    w = WeakValue.from_value(value, cfg)
    closed = overlap_Pa_Qw(a, w, g, cfg)
    general = tilted_overlap(TiltedGaussian.pointer(a, cfg), TiltedGaussian.weak(w, g), g)
    assert closed == pytest.approx(general, abs=1e-13)
    assert abs(closed) <= 1.0 + 1e-15


def test_overlap_is_one_when_tilts_agree():
    cfg = CouplingConfig(epsilon=1.0)
    w = WeakValue.from_value(0.7, cfg)
    assert overlap_Pa_Qw(0.7, w, UNIT, cfg) == pytest.approx(1.0, abs=1e-15)


def test_tilted_overlap_hermiticity():
    g = GaussianParams(delta=0.8)
    x = TiltedGaussian(tilt=0.3 + 0.2j, prefactor=0.9)
    y = TiltedGaussian(tilt=-1.1 - 0.4j, prefactor=1.2 - 0.1j)
    assert tilted_overlap(x, y, g) == pytest.approx(tilted_overlap(y, x, g).conjugate(), abs=1e-15)


def test_weak_probe_has_unit_norm():
    g = GaussianParams(delta=0.7)
    cfg = CouplingConfig(epsilon=0.3)
    probe = TiltedGaussian.weak(WeakValue.from_value(1.5 - 2.5j, cfg), g)
    assert tilted_overlap(probe, probe, g).real == pytest.approx(1.0, abs=1e-14)


def test_density_centers():
    cfg = CouplingConfig(epsilon=1.0)
    w = WeakValue.from_value(0.5 + 1.0j, cfg)
    mass, mean, variance = quad_density_moments(lambda q: position_density(q, w, UNIT), -2.0, 1.0)
    assert mass == pytest.approx(1.0, abs=1e-8)
    assert mean == pytest.approx(-2.0, abs=1e-8)
    assert variance == pytest.approx(1.0, abs=1e-8)

    g = GaussianParams(delta=0.5)
    cfg = CouplingConfig(epsilon=0.2, hbar=1.0)
    w = WeakValue.from_value(3.0 - 1.0j, cfg)
    mass, mean, _ = quad_density_moments(lambda p: momentum_density(p, w, g, cfg), 0.6, 1.0)
    assert mass == pytest.approx(1.0, abs=1e-8)
    assert mean == pytest.approx(0.6, abs=1e-8)


@settings(max_examples=100, deadline=None)
@given(st.complex_numbers(max_magnitude=5.0, **finite), st.floats(min_value=0.01, max_value=0.5, **finite),
       st.floats(min_value=0.5, max_value=2.0, **finite), st.floats(min_value=0.5, max_value=2.0, **finite))
def test_readout_means(value, epsilon, delta, hbar):
    g = GaussianParams(delta=delta)
    cfg = CouplingConfig(epsilon=epsilon, hbar=hbar)
    w = WeakValue.from_value(value, cfg)
    center = -2.0 * delta ** 2 * (epsilon / hbar) * value.imag
    _, mean, _ = quad_density_moments(lambda q: position_density(q, w, g), center, delta)
    assert mean == pytest.approx(center, abs=1e-8)
    center = epsilon * value.real
    _, mean, _ = quad_density_moments(lambda p: momentum_density(p, w, g, cfg), center, hbar / (2.0 * delta))
    assert mean == pytest.approx(center, abs=1e-8)


def test_composites_have_unit_norm(dim4_seed7):
    A, psi, basis = dim4_seed7.astuple()
    cfg = CouplingConfig(epsilon=0.3)
    assert exact_composite(A, psi, cfg, UNIT).squared_norm() == pytest.approx(1.0, abs=1e-12)
    approx = approx_composite(A, psi, basis, cfg, UNIT)
    assert approx.squared_norm() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(approx.probe_norms(), 1.0, atol=1e-12)


def test_eigenbasis_approximation_is_exact(eigen_setup):
    A, psi, basis = eigen_setup
    for epsilon in [1.0, *EPSILONS]:
        cfg = CouplingConfig(epsilon=epsilon)
        assert norm_difference(exact_composite(A, psi, cfg, UNIT), approx_composite(A, psi, basis, cfg, UNIT)) < 1e-12


def test_zero_coupling_gives_zero_difference(dim4_seed7):
    A, psi, basis = dim4_seed7.astuple()
    cfg = CouplingConfig(epsilon=0.0)
    assert norm_difference(exact_composite(A, psi, cfg, UNIT), approx_composite(A, psi, basis, cfg, UNIT)) < 1e-14
    assert postselected_difference(A, psi, basis.state(0), cfg, UNIT) < 1e-14


@pytest.mark.parametrize("seed", range(10))
def test_convergence_slope(seed):
    diffs = sweep(*random_instance(4, seed).astuple())
    assert all(b < a for a, b in zip(diffs, diffs[1:]))
    slope = np.polyfit(np.log(EPSILONS), np.log(diffs), 1)[0]
    assert 1.7 <= slope <= 2.3


def test_expanded_and_centred_norm_differences_agree(dim4_seed7):
    A, psi, basis = dim4_seed7.astuple()
    for epsilon in (0.5, 0.1):
        cfg = CouplingConfig(epsilon=epsilon)
        exact = exact_composite(A, psi, cfg, UNIT)
        approx = approx_composite(A, psi, basis, cfg, UNIT)
        assert norm_difference(exact, approx) == pytest.approx(expanded_norm_difference(exact, approx), abs=1e-10)


def test_provenance_mismatch(dim4_seed7):
    A, psi, basis = dim4_seed7.astuple()
    exact = exact_composite(A, psi, CouplingConfig(epsilon=0.1), UNIT)
    approx = approx_composite(A, psi, basis, CouplingConfig(epsilon=0.2), UNIT)
    with pytest.raises(ProvenanceMismatchError):
        norm_difference(exact, approx)
    matching = approx_composite(A, psi, basis, CouplingConfig(epsilon=0.1), UNIT)
    with pytest.raises(ValueError, match="expected an eigenbasis composite"):
        norm_difference(matching, exact)


def test_triangle_split_bounds_full_difference(dim4_seed7):
    A, psi, basis = dim4_seed7.astuple()
    params = choose_thresholds(A, psi, basis, 0.1)
    cfg = CouplingConfig(epsilon=0.2)
    split = triangle_split(exact_composite(A, psi, cfg, UNIT), approx_composite(A, psi, basis, cfg, UNIT), params)
    assert split.full <= split.bound + 1e-12
    assert split.eigen_tail < math.sqrt(0.1) and split.weak_tail < math.sqrt(0.1)


def test_bound_values():
    assert conservative_bound(0.01) == pytest.approx(0.2 + 2.0 * math.sqrt(0.0101))
    assert tight_bound(0.01) == pytest.approx(0.0604)


def test_epsilon_ceiling():
    params = CertificationParams(abar=1.0, wbar=2.0, xi=0.1)
    assert epsilon_ceiling(params, GaussianParams(delta=0.5)) == pytest.approx(math.sqrt(math.pi / 2.0) / 1.5)


@pytest.mark.parametrize("dim", [2, 3, 4])
@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("xi", [0.5, 0.1, 0.01])
def test_certificate_passes(dim, seed, xi):
    A, psi, basis = random_instance(dim, seed).astuple()
    params = choose_thresholds(A, psi, basis, xi)
    certificate = certify_epsilon(A, psi, basis, UNIT, params)
    assert certificate.passes
    assert certificate.epsilon <= epsilon_ceiling(params, UNIT)
    assert certificate.tight_bound == pytest.approx(tight_bound(xi))
    assert certificate.triangle.full == certificate.achieved_norm_diff


def test_certificate_record_keys(dim4_seed7):
    A, psi, basis = dim4_seed7.astuple()
    record = certify_epsilon(A, psi, basis, UNIT, choose_thresholds(A, psi, basis, 0.01)).to_record()
    assert list(record) == ['abar', 'wbar', 'xi', 'epsilon', 'achieved', 'conservative_bound', 'paper_bound', 'pass']
    assert record['pass'] is True


def test_eigenbasis_certificate_is_exact(eigen_setup):
    A, psi, basis = eigen_setup
    certificate = certify_epsilon(A, psi, basis, UNIT, choose_thresholds(A, psi, basis, 0.01))
    assert certificate.passes
    assert certificate.achieved_norm_diff < 1e-12


def test_bound_chain_holds_at_certified_epsilon(dim4_seed7):
    A, psi, basis = dim4_seed7.astuple()
    params = choose_thresholds(A, psi, basis, 0.1)
    certificate = certify_epsilon(A, psi, basis, UNIT, params)
    slack = bound_chain_slack(A, psi, basis, UNIT, CouplingConfig(epsilon=certificate.epsilon), params)
    assert min(slack.values()) >= -1e-15


def test_normalization_over_random_weak_values():
    rng = np.random.default_rng(2024)
    for _ in range(10_000):
        beta = rng.uniform(-5.0, 5.0)
        n = gaussian_normalization(beta, GaussianParams(delta=rng.uniform(0.1, 3.0)))
        assert n <= 1.0
        if abs(beta) > 1e-6:
            assert n < 1.0
    assert gaussian_normalization(0.0, GaussianParams(delta=2.5)) == 1.0


@pytest.mark.parametrize("beta", [30.0, -400.0, 3000.0])
def test_weak_probe_norm_survives_large_beta(beta):
    g = GaussianParams(delta=1.0)
    probe = TiltedGaussian.weak(WeakValue.from_value(complex(0.4, beta), CouplingConfig(epsilon=1.0)), g)
    assert tilted_overlap(probe, probe, g).real == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("epsilon", [5.0, 20.0, 40.0, 100.0, 2000.0])
def test_norm_difference_at_strong_coupling(dim4_seed7, epsilon):
    A, psi, basis = dim4_seed7.astuple()
    cfg = CouplingConfig(epsilon=epsilon)
    diff = norm_difference(exact_composite(A, psi, cfg, UNIT), approx_composite(A, psi, basis, cfg, UNIT))
    assert 0.0 <= diff <= 2.0
    assert math.isfinite(postselected_difference(A, psi, basis.state(0), cfg, UNIT))


def test_gram_and_centred_forms_meet_at_the_switch(dim4_seed7):
    A, psi, basis = dim4_seed7.astuple()
    beta_max = max(abs(weak_value(A, psi, phi, CouplingConfig(epsilon=1.0)).beta) for phi in basis.states())
    edge = CENTERED_TILT_LIMIT / beta_max
    below, above = (
        norm_difference(exact_composite(A, psi, cfg, UNIT), approx_composite(A, psi, basis, cfg, UNIT))
        for cfg in (CouplingConfig(epsilon=edge * (1.0 - 1e-9)), CouplingConfig(epsilon=edge * (1.0 + 1e-9)))
    )
    assert below == pytest.approx(above, abs=1e-8)


def test_expanded_difference_matches_at_strong_coupling(dim4_seed7):
    A, psi, basis = dim4_seed7.astuple()
    cfg = CouplingConfig(epsilon=20.0)
    exact, approx = exact_composite(A, psi, cfg, UNIT), approx_composite(A, psi, basis, cfg, UNIT)
    assert norm_difference(exact, approx) == pytest.approx(expanded_norm_difference(exact, approx), abs=1e-10)
