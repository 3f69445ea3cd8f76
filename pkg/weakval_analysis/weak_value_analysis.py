"""
Weak Value Approximation Pipeline
Builds seeded instances, sweeps the coupling, certifies error bounds and runs the check suites

This pipeline:
1. Builds a seeded (observable, preselection, postselection basis) instance
2. Sweeps epsilon and tabulates exact-vs-approximate norm differences with the log-log slope
3. Certifies an epsilon against the conservative error bound for a tolerance xi
4. Tabulates readout densities (Gaussian probe) and readout probabilities (qubit probe)
5. Runs the special-function/bound checks and the oracle cross-checks
6. Emits CSV/JSON tables to stdout or --out; status lines go to stderr
"""
import argparse
import functools
import io
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator

from . import __version__
from .services.appendix_checks import AppendixChecks, OracleChecks
from .services.common import DimensionMismatchError, UndefinedWeakValueError
from .services.gaussian_probe import (
    GaussianParams,
    approx_composite,
    bound_chain_slack,
    certify_epsilon,
    exact_composite,
    momentum_density,
    position_density,
    triangle_split,
)
from .services.hilbert import (
    Observable,
    PostselectionBasis,
    SystemState,
    hermitian_spectral,
    load_matrix_file,
    random_instance,
)
from .services.qubit_probe import (
    approx_composite_qubit,
    certify_epsilon_qubit,
    exact_composite_qubit,
    prob_axis_table,
    triangle_split_qubit,
)
from .services.weakcore import CertificationParams, CouplingConfig, choose_thresholds, weak_value
from .utils import LabConfig, load_lab_config, resolve_jobs, resolve_seed, setup_logging

logger = logging.getLogger(__name__)

# Status lines go to stderr, flushed immediately; stdout carries data only
def status(*args, **kwargs):
    print(*args, file=sys.stderr, flush=True, **kwargs)

SWEEP_COLUMNS = ['epsilon', 'norm_diff', 'restricted_diff', 'eigen_tail', 'weak_tail', 'slope_running']
CERTIFY_COLUMNS = ['abar', 'wbar', 'xi', 'epsilon', 'achieved', 'conservative_bound', 'paper_bound', 'pass']
PROBS_COLUMNS = ['epsilon', 're_aw', 'im_aw', 'p_plus_z', 'p_minus_z', 'p_plus_x', 'phi_index']
CHECK_COLUMNS = ['name', 'max_residual', 'tolerance', 'passed', 'cases']


class SweepPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: Literal["gaussian", "qubit"]
    dim: int = Field(ge=2)
    seed: int = Field(ge=0)
    epsilons: List[float] = Field(min_length=1)
    delta: float = Field(default=1.0, gt=0.0, allow_inf_nan=False)
    hbar: float = Field(default=1.0, gt=0.0, allow_inf_nan=False)
    basis: Literal["eigen", "random", "supplied"] = "random"
    matrix_file: Optional[str] = None
    basis_file: Optional[str] = Field(default=None, validate_default=True)

    @field_validator("epsilons")
    @classmethod
    def _descending_positive(cls, values: List[float]) -> List[float]:
        if any(not math.isfinite(e) or e <= 0.0 for e in values):
            raise ValueError("every epsilon must be finite and > 0")
        if any(b >= a for a, b in zip(values, values[1:])):
            raise ValueError("epsilons must be strictly descending")
        return values

    @field_validator("basis_file")
    @classmethod
    def _supplied_needs_file(cls, value: Optional[str], info: ValidationInfo) -> Optional[str]:
        if info.data.get("basis") == "supplied" and not value:
            raise ValueError("basis 'supplied' requires --basis-file")
        return value


class Report(BaseModel):
    """Rows plus run metadata; `single` reports serialize their one row as a JSON object."""

    columns: List[str]
    rows: List[Dict[str, Any]]
    metadata: Dict[str, Any]
    single: bool = False

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=self.columns)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        self.to_frame().to_csv(buffer, index=False, float_format="%.17g", na_rep="nan", lineterminator="\n")
        return buffer.getvalue()

    def to_json(self) -> str:
        frame = self.to_frame().astype(object)
        records = frame.where(frame.notna(), None).to_dict(orient="records")
        payload = {**records[0], "metadata": self.metadata} if self.single else {"metadata": self.metadata, "rows": records}
        return json.dumps(payload, indent=2, default=_json_default) + "\n"

    def render(self, fmt: str) -> str:
        return self.to_json() if fmt == "json" else self.to_csv()


def _json_default(value: Any) -> Any:
    if hasattr(value, "item"):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    return str(value)


class Instance(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    observable: Observable
    psi: SystemState
    basis: PostselectionBasis
    salt: int


def fitted_slope(epsilons: List[float], diffs: List[float]) -> float:
    """Least-squares slope of log(diff) against log(epsilon); nan with fewer than two positive points."""
    points = [(math.log(e), math.log(d)) for e, d in zip(epsilons, diffs) if d > 0.0]
    if len(points) < 2:
        return math.nan
    x, y = zip(*points)
    return float(np.polyfit(x, y, 1)[0])


def running_slopes(epsilons: List[float], diffs: List[float]) -> List[float]:
    slopes = [math.nan]
    for k in range(1, len(epsilons)):
        if diffs[k] > 0.0 and diffs[k - 1] > 0.0:
            slopes.append(math.log(diffs[k] / diffs[k - 1]) / math.log(epsilons[k] / epsilons[k - 1]))
        else:
            slopes.append(math.nan)
    return slopes


class WeakValueAnalyzer:
    """
    Seeded weak value approximation experiments
    """

    def __init__(self, config: Optional[LabConfig] = None, jobs: int = 1):
        self.config = config or load_lab_config()
        self.jobs = max(1, jobs)
        self.stats = {
            'points_evaluated': 0,
            'checks_run': 0,
            'checks_failed': 0,
            'start_time': None,
            'end_time': None
        }

    # =========================
    # === Instances         ===
    # =========================
    def build_instance(self, plan: SweepPlan) -> Instance:
        """
        Seeded instance for the plan; a --matrix file replaces the observable and
        --basis picks the postselection basis.

        Raises:
            DimensionMismatchError: If a supplied matrix or basis does not match plan.dim
        """
        generated = random_instance(plan.dim, plan.seed)
        observable = generated.observable
        if plan.matrix_file:
            observable = hermitian_spectral(load_matrix_file(plan.matrix_file))
            if observable.dim != plan.dim:
                raise DimensionMismatchError(plan.dim, observable.dim)

        if plan.basis == "eigen":
            basis = PostselectionBasis.eigenbasis(observable)
        elif plan.basis == "supplied":
            basis = PostselectionBasis.from_matrix(load_matrix_file(plan.basis_file))
            if basis.dim != plan.dim:
                raise DimensionMismatchError(plan.dim, basis.dim)
        else:
            basis = generated.basis
        return Instance(observable=observable, psi=generated.psi, basis=basis, salt=generated.salt)

    def _metadata(self, plan: SweepPlan, instance: Instance, **extra) -> Dict[str, Any]:
        return {
            'seed': plan.seed,
            'salt': instance.salt,
            'dim': plan.dim,
            'model': plan.model,
            'version': __version__,
            **extra,
        }

    # =========================
    # === Sweep             ===
    # =========================
    def _sweep_point(self, plan: SweepPlan, instance: Instance, params: CertificationParams, epsilon: float) -> Dict:
        A, psi, basis = instance.observable, instance.psi, instance.basis
        cfg = CouplingConfig(epsilon=epsilon, hbar=plan.hbar)
        if plan.model == "gaussian":
            g = GaussianParams(delta=plan.delta)
            split = triangle_split(exact_composite(A, psi, cfg, g), approx_composite(A, psi, basis, cfg, g), params)
        else:
            split = triangle_split_qubit(exact_composite_qubit(A, psi, cfg), approx_composite_qubit(A, psi, basis, cfg), params)
        logger.debug(f"sweep point eps={epsilon:.3e}: norm_diff={split.full:.3e}")
        return {
            'epsilon': epsilon,
            'norm_diff': split.full,
            'restricted_diff': split.restricted,
            'eigen_tail': split.eigen_tail,
            'weak_tail': split.weak_tail,
        }

    def run_sweep(self, plan: SweepPlan) -> Report:
        """
        Norm differences and triangle pieces at every epsilon of the plan.

        Points run concurrently with jobs > 1; rows are merged in descending
        epsilon order regardless of completion order.
        """
        instance = self.build_instance(plan)
        params = choose_thresholds(instance.observable, instance.psi, instance.basis, self.config.certify_xi)
        status(f"[SWEEP] model={plan.model} dim={plan.dim} seed={plan.seed} points={len(plan.epsilons)} jobs={self.jobs}")

        results: Dict[float, Dict] = {}
        if self.jobs > 1:
            with ThreadPoolExecutor(max_workers=self.jobs) as executor:
                futures = {executor.submit(self._sweep_point, plan, instance, params, e): e for e in plan.epsilons}
                for future in as_completed(futures):
                    results[futures[future]] = future.result()
        else:
            for e in plan.epsilons:
                results[e] = self._sweep_point(plan, instance, params, e)
        self.stats['points_evaluated'] += len(results)

        rows = [results[e] for e in plan.epsilons]
        diffs = [r['norm_diff'] for r in rows]
        for row, slope in zip(rows, running_slopes(plan.epsilons, diffs)):
            row['slope_running'] = slope
        slope = fitted_slope(plan.epsilons, diffs)
        status(f"[OK] fitted log-log slope: {slope:.4f}")
        return Report(
            columns=SWEEP_COLUMNS,
            rows=rows,
            metadata=self._metadata(plan, instance, slope=slope, abar=params.abar, wbar=params.wbar),
        )

    # =========================
    # === Certification     ===
    # =========================
    def run_certify(self, plan: SweepPlan, xi: float) -> Report:
        """Thresholds for xi, the certified epsilon and the achieved difference against both bounds."""
        instance = self.build_instance(plan)
        A, psi, basis = instance.observable, instance.psi, instance.basis
        params = choose_thresholds(A, psi, basis, xi)
        status(f"[CERTIFY] model={plan.model} xi={xi} abar={params.abar:.6g} wbar={params.wbar:.6g}")

        extra: Dict[str, Any] = {}
        if plan.model == "gaussian":
            g = GaussianParams(delta=plan.delta)
            certificate = certify_epsilon(A, psi, basis, g, params, plan.hbar)
            cfg = CouplingConfig(epsilon=certificate.epsilon, hbar=plan.hbar)
            extra['bound_chain_slack'] = bound_chain_slack(A, psi, basis, g, cfg, params)
        else:
            certificate = certify_epsilon_qubit(A, psi, basis, params, plan.hbar)

        extra['certified'] = certificate.passes
        if certificate.passes:
            status(f"[OK] achieved {certificate.achieved_norm_diff:.3e} <= bound {certificate.conservative_bound:.3e}")
        else:
            status(f"[ERROR] achieved {certificate.achieved_norm_diff:.3e} exceeds bound {certificate.conservative_bound:.3e}")
            extra['failed'] = ['certificate']
        return Report(
            columns=CERTIFY_COLUMNS,
            rows=[certificate.to_record()],
            metadata=self._metadata(plan, instance, **extra),
            single=True,
        )

    # =========================
    # === Readout tables    ===
    # =========================
    def run_density(self, plan: SweepPlan, phi_index: int = 0, space: str = "position", points: Optional[int] = None) -> Report:
        """
        Readout density of the Gaussian pointer for one postselection at the
        largest epsilon of the plan, floored at the configured absolute floor.
        """
        if plan.model != "gaussian":
            raise ValueError("density tables exist for the gaussian model only")
        instance = self.build_instance(plan)
        if not 0 <= phi_index < instance.basis.dim:
            raise ValueError(f"phi_index {phi_index} outside 0..{instance.basis.dim - 1}")
        settings = self.config.density
        points = points or settings.points
        g = GaussianParams(delta=plan.delta)
        cfg = CouplingConfig(epsilon=plan.epsilons[0], hbar=plan.hbar)
        w = weak_value(instance.observable, instance.psi, instance.basis.state(phi_index), cfg)

        if space == "position":
            center, spread, column = -2.0 * g.delta ** 2 * w.beta, g.delta, 'q'
            density = lambda x: position_density(x, w, g)
        else:
            center, spread, column = cfg.epsilon * w.value.real, cfg.hbar / (2.0 * g.delta), 'p'
            density = lambda x: momentum_density(x, w, g, cfg)
        grid = np.linspace(center - settings.half_width * spread, center + settings.half_width * spread, points)
        values = np.maximum(density(grid), settings.floor)
        status(f"[OK] {space} density for phi={phi_index}: center={center:.6g}, spread={spread:.6g}")
        return Report(
            columns=[column, 'density'],
            rows=[{column: float(x), 'density': float(v)} for x, v in zip(grid, values)],
            metadata=self._metadata(plan, instance, phi_index=phi_index, epsilon=cfg.epsilon,
                                    aw=[w.value.real, w.value.imag]),
        )

    def run_probs(self, plan: SweepPlan, phi_index: Optional[int] = None) -> Report:
        """Qubit readout probabilities P(+z), P(-z), P(+x) per epsilon and postselection."""
        if plan.model != "qubit":
            raise ValueError("probability tables exist for the qubit model only")
        instance = self.build_instance(plan)
        if phi_index is not None and not 0 <= phi_index < instance.basis.dim:
            raise ValueError(f"phi_index {phi_index} outside 0..{instance.basis.dim - 1}")
        indices = range(instance.basis.dim) if phi_index is None else [phi_index]
        rows = []
        for epsilon in plan.epsilons:
            cfg = CouplingConfig(epsilon=epsilon, hbar=plan.hbar)
            for k in indices:
                try:
                    w = weak_value(instance.observable, instance.psi, instance.basis.state(k), cfg)
                except UndefinedWeakValueError:
                    status(f"[WARNING] phi={k} is orthogonal to psi; skipped")
                    continue
                rows.append({'epsilon': epsilon, 're_aw': w.value.real, 'im_aw': w.value.imag,
                             **prob_axis_table(w), 'phi_index': k})
        return Report(columns=PROBS_COLUMNS, rows=rows, metadata=self._metadata(plan, instance))

    # =========================
    # === Check suites      ===
    # =========================
    def _check_report(self, summary: Dict, suite: str) -> Report:
        rows = []
        for check in summary['checks']:
            self.stats['checks_run'] += 1
            if check['passed']:
                status(f"[CHECK] {check['name']}: ok (max residual {check['max_residual']:.3e})")
            else:
                self.stats['checks_failed'] += 1
                status(f"[ERROR] check failed: {check['name']} (max residual {check['max_residual']:.3e} "
                       f"> {check['tolerance']:.1e})")
            rows.append({c: check[c] for c in CHECK_COLUMNS})
        details = {c['name']: c['details'] for c in summary['checks'] if c['details']}
        return Report(
            columns=CHECK_COLUMNS,
            rows=rows,
            metadata={'suite': suite, 'version': __version__, 'passed': summary['passed'],
                      'failed': summary['failed'], 'details': details},
        )

    def run_appendix_checks(self) -> Report:
        checks = self.config.checks
        suite = AppendixChecks(
            gamma_max_j=checks.gamma_max_j,
            factorial_max_j=checks.factorial_max_j,
            robbins_max_n=checks.robbins_max_n,
            dominance_instances=checks.dominance_instances,
            quadrature=self.config.quadrature,
        )
        return self._check_report(suite.run(), 'appendix')

    def run_verify(self, seed: Optional[int] = None) -> Report:
        checks = self.config.checks
        suite = OracleChecks(
            cases=checks.verify_cases,
            seed=checks.verify_seed if seed is None else seed,
            quadrature=self.config.quadrature,
            matexp=self.config.matrix_exponential,
        )
        return self._check_report(suite.run(), 'verify')

    def print_statistics(self):
        duration = self.stats['end_time'] - self.stats['start_time']
        status(f"[TIME] Duration: {duration}")
        if self.stats['points_evaluated']:
            status(f"[TOTAL] Sweep points evaluated: {self.stats['points_evaluated']}")
        if self.stats['checks_run']:
            status(f"[TOTAL] Checks run: {self.stats['checks_run']}, failed: {self.stats['checks_failed']}")


# =========================
# === CLI               ===
# =========================
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--model', choices=['gaussian', 'qubit'], help='Probe model')
    common.add_argument('--dim', type=int, help='System dimension')
    common.add_argument('--seed', type=int, help='Instance seed (WEAKVAL_SEED overrides)')
    common.add_argument('--epsilons', type=float, nargs='+', help='Couplings, strictly descending')
    common.add_argument('--delta', type=float, help='Gaussian pointer spread')
    common.add_argument('--hbar', type=float, help='Reduced Planck constant')
    common.add_argument('--xi', type=float, help='Certification tolerance in (0, 1)')
    common.add_argument('--basis', choices=['eigen', 'random', 'supplied'], help='Postselection basis')
    common.add_argument('--matrix', type=str, help='Observable as a JSON [re, im] matrix file')
    common.add_argument('--basis-file', type=str, help='Postselection basis (columns) as a JSON [re, im] matrix file')
    common.add_argument('--phi-index', type=int, help='Postselection index for density/probs tables')
    common.add_argument('--space', choices=['position', 'momentum'], default='position', help='Density readout space')
    common.add_argument('--points', type=int, help='Density grid points')
    common.add_argument('--jobs', type=int, help='Concurrent sweep points (WEAKVAL_JOBS default)')
    common.add_argument('--out', type=str, help='Output file (stdout when omitted)')
    common.add_argument('--format', choices=['csv', 'json'], help='Output format')
    common.add_argument('--config', type=str, help='Lab config JSON (WEAKVAL_CONFIG default)')
    common.add_argument('--log-level', type=str, help='Logging level (WEAKVAL_LOG_LEVEL default)')

    parser = argparse.ArgumentParser(description='Weak Value Approximation Lab')
    subparsers = parser.add_subparsers(dest='command', required=True)
    subparsers.add_parser('sweep', parents=[common], help='Norm differences over an epsilon sweep')
    subparsers.add_parser('certify', parents=[common], help='Certify epsilon for a tolerance xi')
    subparsers.add_parser('density', parents=[common], help='Gaussian readout density table')
    subparsers.add_parser('probs', parents=[common], help='Qubit readout probability table')
    subparsers.add_parser('appendix', parents=[common], help='Special-function and bound checks')
    subparsers.add_parser('verify', parents=[common], help='Closed forms against oracles')
    return parser


def plan_from_args(args: argparse.Namespace, config: LabConfig) -> SweepPlan:
    """
    Merge CLI flags over the config's sweep defaults.

    Raises:
        ValidationError: Naming the offending plan field
    """
    defaults = config.sweep
    fields = {
        'model': args.model or defaults.model,
        'dim': args.dim if args.dim is not None else defaults.dim,
        'seed': resolve_seed(args.seed if args.seed is not None else defaults.seed),
        'epsilons': args.epsilons if args.epsilons is not None else defaults.epsilons,
        'delta': args.delta if args.delta is not None else defaults.delta,
        'hbar': args.hbar if args.hbar is not None else defaults.hbar,
        'basis': args.basis or defaults.basis,
        'matrix_file': args.matrix,
        'basis_file': args.basis_file,
    }
    return SweepPlan(**fields)


def _invalid_field(error: ValidationError) -> str:
    first = error.errors()[0]
    name = '.'.join(str(part) for part in first['loc'] if not isinstance(part, int)) or 'plan'
    return f"[ERROR] invalid plan field '{name}': {first['msg']}"


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main entry point

    Exit status: 0 on success, 1 when a check or certificate fails, 2 on invalid input.
    """
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)

    try:
        config = load_lab_config(args.config)
    except ValueError as e:
        status(f"[ERROR] {e}")
        return 2

    analyzer = WeakValueAnalyzer(config, jobs=resolve_jobs(args.jobs))
    analyzer.stats['start_time'] = datetime.now()
    fmt = args.format or ('json' if args.command in ('certify', 'appendix', 'verify') else 'csv')

    try:
        if args.command == 'appendix':
            report = analyzer.run_appendix_checks()
        elif args.command == 'verify':
            report = analyzer.run_verify(resolve_seed(args.seed))
        else:
            plan = plan_from_args(args, config)
            if args.command == 'sweep':
                report = analyzer.run_sweep(plan)
            elif args.command == 'certify':
                xi = args.xi if args.xi is not None else config.certify_xi
                if not 0.0 < xi < 1.0:
                    status(f"[ERROR] invalid plan field 'xi': must lie in (0, 1), got {xi}")
                    return 2
                report = analyzer.run_certify(plan, xi)
            elif args.command == 'density':
                report = analyzer.run_density(plan, args.phi_index or 0, args.space, args.points)
            else:
                report = analyzer.run_probs(plan, args.phi_index)
    except ValidationError as e:
        status(_invalid_field(e))
        return 2
    except (ValueError, OSError) as e:
        status(f"[ERROR] {e}")
        return 2

    text = report.render(fmt)
    if args.out:
        Path(args.out).write_text(text, encoding='utf-8')
        status(f"[OK] wrote {args.out}")
    else:
        sys.stdout.write(text)

    analyzer.stats['end_time'] = datetime.now()
    analyzer.print_statistics()
    if report.metadata.get('failed'):
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
