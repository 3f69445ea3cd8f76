"""
Check suites for the identities and the oracle cross-checks.

AppendixChecks covers the log-domain special-function identities, the
factorial and Stirling bounds and the series-bound dominance. OracleChecks
pits every probe closed form against quadrature, dense matrix
exponentials or term-by-term series. Each check returns a dict with the
worst residual seen, its tolerance and a per-item breakdown.
"""
import logging
import math
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.special import gammaln

from .bounds import (
    AppendixBInputs,
    appendix_d_k,
    factorial_decay_holds,
    factorial_ratio,
    gamma_half_integer,
    moment_norm_gaussian,
    robbins_sandwich,
    series_error_bound,
    series_error_partial,
)
from .gaussian_probe import (
    GaussianParams,
    TiltedGaussian,
    gaussian_normalization,
    momentum_density,
    position_density,
    postselected_difference,
    tilted_overlap,
)
from .hilbert import random_instance
from .oracle import (
    MatExpSpec,
    QuadratureSpec,
    dense_expm_apply,
    dense_qubit_overlap,
    dense_qubit_probability,
    quad_density_moments,
    quad_normalization,
    quad_overlap,
    quad_probe_moment,
    series_partial_sums,
)
from .qubit_probe import BlochAxis, QubitState, evolve_qubit, exact_composite_qubit, overlap_qubit, prob_plus_axis
from .weakcore import CouplingConfig, WeakValue, gaussian_probe_moments, qubit_probe_moments, taylor_partial_sums, weak_value

logger = logging.getLogger(__name__)


def _result(name: str, residuals: List[float], tolerance: float, details: List[Dict]) -> Dict:
    worst = max(residuals) if residuals else 0.0
    return {
        'name': name,
        'max_residual': worst,
        'tolerance': tolerance,
        'passed': bool(worst <= tolerance),
        'cases': len(residuals),
        'details': details,
    }


def _summarize(checks: List[Dict]) -> Dict:
    failed = [c['name'] for c in checks if not c['passed']]
    return {
        'checks': checks,
        'passed': not failed,
        'failed': failed,
    }


class AppendixChecks:
    """
    Special-function identities and series-bound checks
    """

    def __init__(self, gamma_max_j: int = 50, factorial_max_j: int = 300, robbins_max_n: int = 170,
                 dominance_instances: int = 100, moment_max_j: int = 6, quadrature: Optional[QuadratureSpec] = None):
        self.gamma_max_j = gamma_max_j
        self.factorial_max_j = factorial_max_j
        self.robbins_max_n = robbins_max_n
        self.dominance_instances = dominance_instances
        self.moment_max_j = moment_max_j
        self.quadrature = quadrature or QuadratureSpec()

    def run(self) -> Dict:
        checks = [
            self._check_gamma_identity(),
            self._check_factorial_monotonicity(),
            self._check_robbins(),
            self._check_factorial_decay(),
            self._check_moment_norms(),
            self._check_series_dominance(),
        ]
        for c in checks:
            logger.info(f"appendix check {c['name']}: passed={c['passed']}, max_residual={c['max_residual']:.3e}")
        return _summarize(checks)

    def _check_gamma_identity(self) -> Dict:
        """Gamma(j + 1/2) = (2j-1)!! sqrt(pi) / 2^j against scipy's log-gamma."""
        residuals = []
        for j in range(self.gamma_max_j + 1):
            residuals.append(abs(math.expm1(gamma_half_integer(j).log_value - float(gammaln(j + 0.5)))))
        return _result('gamma_identity', residuals, 1e-12, [{'item': 'j range', 'value': [0, self.gamma_max_j]}])

    def _check_factorial_monotonicity(self) -> Dict:
        """sqrt((2j-1)!!)/j! <= 1 and nonincreasing in j."""
        logs = [factorial_ratio(j).log_value for j in range(1, self.factorial_max_j + 1)]
        residuals = [max(0.0, v) for v in logs]
        residuals += [max(0.0, b - a) for a, b in zip(logs, logs[1:])]
        return _result('factorial_monotonicity', residuals, 1e-12,
                       [{'item': 'log ratio at j_max', 'value': logs[-1]}])

    def _check_robbins(self) -> Dict:
        checks = [robbins_sandwich(n) for n in range(1, self.robbins_max_n + 1)]
        residuals = [max(0.0, -c.lower_gap, -c.upper_gap) for c in checks]
        printed_failures = [c.n for c in checks if not c.printed_holds]
        details = [
            {'item': 'smallest upper gap', 'value': min(c.upper_gap for c in checks)},
            {'item': 'printed exponents fail at n', 'value': len(printed_failures)},
        ]
        return _result('robbins_sandwich', residuals, 0.0, details)

    def _check_factorial_decay(self) -> Dict:
        """The decay sqrt((2j-1)!!)/j! < a^-j sets in no later than the reported K(a)."""
        residuals = []
        details = []
        for a in (1.0, 1.5, 2.0):
            onset = None
            for j in range(self.factorial_max_j, 0, -1):
                if not factorial_decay_holds(a, j):
                    break
                onset = j
            k = appendix_d_k(a)
            residuals.append(0.0 if onset is not None and onset <= k else 1.0)
            details.append({'item': f'a={a}', 'K': k, 'onset': onset})
        return _result('factorial_decay', residuals, 0.0, details)

    def _check_moment_norms(self) -> Dict:
        """||q^j|Q>|| = Delta^j sqrt((2j-1)!!) against quadrature."""
        residuals = []
        for delta in (0.5, 1.0):
            g = GaussianParams(delta=delta)
            for j in range(1, self.moment_max_j + 1):
                closed = moment_norm_gaussian(j, g).value
                residuals.append(abs(math.sqrt(quad_probe_moment(j, g, self.quadrature)) - closed) / max(1.0, closed))
        return _result('moment_norms', residuals, 1e-7, [{'item': 'j range', 'value': [1, self.moment_max_j]}])

    def _check_series_dominance(self) -> Dict:
        """
        Postselected error <= |<phi|psi>| * partial bound <= |<phi|psi>| * closed bound,
        at r = 1/4 on seeded dim-3 instances with Delta = 1.
        """
        g = GaussianParams(delta=1.0)
        residuals = []
        worst_ratio = 0.0
        for seed in range(self.dominance_instances):
            A, psi, basis = random_instance(3, seed).astuple()
            phi = basis.state(0)
            overlap = abs(np.vdot(phi.amps, psi.amps))
            epsilon = 0.25 * overlap / A.operator_norm
            cfg = CouplingConfig(epsilon=epsilon)
            inp = AppendixBInputs(op_norm=A.operator_norm, overlap_mag=overlap, a_max=A.operator_norm, nu=0.5,
                                  epsilon_delta=epsilon * g.delta)
            actual = postselected_difference(A, psi, phi, cfg, g)
            partial = overlap * series_error_partial(A, psi, phi, inp, cfg)
            closed = overlap * series_error_bound(inp, cfg, weak_value(A, psi, phi, cfg))
            residuals.append(max(0.0, actual - partial, partial - closed))
            worst_ratio = max(worst_ratio, actual / closed)
        return _result('series_dominance', residuals, 1e-14, [{'item': 'worst actual/bound', 'value': worst_ratio}])


class OracleChecks:
    """
    Closed forms against independent numerical engines
    """

    def __init__(self, cases: int = 1000, seed: int = 0, quadrature: Optional[QuadratureSpec] = None,
                 matexp: Optional[MatExpSpec] = None):
        self.cases = cases
        self.seed = seed
        self.quadrature = quadrature or QuadratureSpec()
        self.matexp = matexp or MatExpSpec()

    def run(self) -> Dict:
        checks: List[Dict] = []
        runners: List[Callable[[np.random.Generator], Dict]] = [
            self._check_gaussian_overlaps,
            self._check_gaussian_normalization,
            self._check_readout_densities,
            self._check_qubit_overlaps,
            self._check_qubit_probabilities,
            self._check_qubit_composite,
            self._check_series_sums,
        ]
        for offset, runner in enumerate(runners):
            checks.append(runner(np.random.default_rng([self.seed, offset])))
            logger.info(f"oracle check {checks[-1]['name']}: passed={checks[-1]['passed']}, "
                        f"max_residual={checks[-1]['max_residual']:.3e}")
        return _summarize(checks)

    @staticmethod
    def _random_tilt(rng: np.random.Generator, delta: float) -> complex:
        return complex(rng.uniform(-3.0, 3.0) / delta, rng.uniform(-0.75, 0.75) / delta)

    def _check_gaussian_overlaps(self, rng: np.random.Generator) -> Dict:
        residuals = []
        for _ in range(self.cases):
            g = GaussianParams(delta=float(rng.uniform(0.3, 2.0)))
            x = TiltedGaussian(tilt=self._random_tilt(rng, g.delta), prefactor=complex(rng.uniform(0.5, 1.5)))
            y = TiltedGaussian(tilt=self._random_tilt(rng, g.delta))
            closed = tilted_overlap(x, y, g)
            residuals.append(abs(closed - quad_overlap(x, y, g, QuadratureSpec.covering(x, y, g))) / max(1.0, abs(closed)))
        return _result('gaussian_overlaps', residuals, 1e-7, [])

    def _check_gaussian_normalization(self, rng: np.random.Generator) -> Dict:
        residuals = []
        for _ in range(self.cases):
            g = GaussianParams(delta=float(rng.uniform(0.3, 2.0)))
            beta = float(rng.uniform(-1.5, 1.5)) / g.delta
            residuals.append(abs(gaussian_normalization(beta, g) - quad_normalization(beta, g)))
        return _result('gaussian_normalization', residuals, 1e-7, [])

    def _check_readout_densities(self, rng: np.random.Generator) -> Dict:
        """Mass 1 and shifted means of both readout densities."""
        residuals = []
        for _ in range(self.cases):
            g = GaussianParams(delta=float(rng.uniform(0.5, 2.0)))
            cfg = CouplingConfig(epsilon=float(rng.uniform(0.01, 0.5)), hbar=float(rng.uniform(0.5, 2.0)))
            w = WeakValue.from_value(complex(rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)), cfg)
            q_center = -2.0 * g.delta ** 2 * w.beta
            mass, mean, _ = quad_density_moments(lambda q: position_density(q, w, g), q_center, g.delta, self.quadrature)
            residuals += [abs(mass - 1.0), abs(mean - q_center)]
            p_center = cfg.epsilon * w.value.real
            spread = cfg.hbar / (2.0 * g.delta)
            mass, mean, _ = quad_density_moments(lambda p: momentum_density(p, w, g, cfg), p_center, spread, self.quadrature)
            residuals += [abs(mass - 1.0), abs(mean - p_center)]
        return _result('readout_densities', residuals, 1e-8, [])

    def _check_qubit_overlaps(self, rng: np.random.Generator) -> Dict:
        residuals = []
        for _ in range(self.cases):
            cfg = CouplingConfig(epsilon=float(rng.uniform(0.0, 1.0)))
            w = WeakValue.from_value(complex(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)), cfg)
            a = float(rng.uniform(-2.0, 2.0))
            residuals.append(abs(overlap_qubit(a, w, cfg) - dense_qubit_overlap(a, w, cfg)))
        return _result('qubit_overlaps', residuals, 1e-12, [])

    def _check_qubit_probabilities(self, rng: np.random.Generator) -> Dict:
        residuals = []
        for _ in range(self.cases):
            cfg = CouplingConfig(epsilon=float(rng.uniform(0.0, 1.0)))
            w = WeakValue.from_value(complex(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)), cfg)
            axis = BlochAxis(theta=float(rng.uniform(0.0, math.pi)), eta=float(rng.uniform(0.0, 2.0 * math.pi)))
            residuals.append(abs(prob_plus_axis(w, axis) - dense_qubit_probability(w, axis)))
        return _result('qubit_probabilities', residuals, 1e-12, [])

    def _check_qubit_composite(self, rng: np.random.Generator) -> Dict:
        """Exact qubit composite against the dense 2n x 2n exponential, per amplitude."""
        residuals = []
        for dim in (2, 3, 4):
            A, psi, _ = random_instance(dim, int(rng.integers(0, 1000))).astuple()
            cfg = CouplingConfig(epsilon=float(rng.uniform(0.01, 1.0)))
            dense = dense_expm_apply(A, cfg, psi, self.matexp)
            residuals.append(float(np.max(np.abs(exact_composite_qubit(A, psi, cfg).amps - dense.amps))))
        return _result('qubit_composite', residuals, 1e-10, [])

    def _check_series_sums(self, rng: np.random.Generator) -> Dict:
        """Dense-power Taylor sums against the spectral sums and the closed-form projected amplitude."""
        residuals = []
        order = 20
        g = GaussianParams(delta=1.0)
        for _ in range(3):
            A, psi, basis = random_instance(3, int(rng.integers(0, 1000))).astuple()
            phi = basis.state(0)
            cfg = CouplingConfig(epsilon=0.1)
            weights = np.conj(A.coefficients(phi)) * A.coefficients(psi)

            moments = qubit_probe_moments(order)
            dense = series_partial_sums(A, psi, phi, cfg, moments, order)
            spectral = taylor_partial_sums(A, psi, phi, cfg, moments, order)
            closed = sum(w * evolve_qubit(cfg.scale * a, QubitState.plus_z()).up for w, a in zip(weights, A.eigenvalues))
            residuals += [float(np.max(np.abs(dense - spectral))), abs(dense[-1] - closed)]

            moments = gaussian_probe_moments(order, g.delta)
            dense = series_partial_sums(A, psi, phi, cfg, moments, order)
            closed = sum(w * tilted_overlap(TiltedGaussian(), TiltedGaussian.pointer(float(a), cfg), g)
                         for w, a in zip(weights, A.eigenvalues))
            residuals.append(abs(dense[-1] - closed))
        return _result('series_sums', residuals, 1e-10, [])

