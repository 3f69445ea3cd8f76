import json
import math

import pytest
from pydantic import ValidationError

from weakval_analysis import __version__, weak_value_analysis
from weakval_analysis import services
from weakval_analysis.services.gaussian_probe import ErrorCertificate, conservative_bound, tight_bound
from weakval_analysis.utils import LabConfig, load_lab_config, resolve_jobs, resolve_seed
from weakval_analysis.weak_value_analysis import (
    CERTIFY_COLUMNS,
    SweepPlan,
    WeakValueAnalyzer,
    fitted_slope,
    main,
    running_slopes,
)


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("WEAKVAL_SEED", "WEAKVAL_JOBS", "WEAKVAL_CONFIG", "WEAKVAL_LOG_DIR", "WEAKVAL_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def analyzer():
    return WeakValueAnalyzer(LabConfig())


def gaussian_plan(**overrides):
    fields = dict(model="gaussian", dim=4, seed=7, epsilons=[1e-1, 1e-2, 1e-3, 1e-4])
    fields.update(overrides)
    return SweepPlan(**fields)


def test_plan_rejects_bad_epsilons():
    with pytest.raises(ValidationError):
        gaussian_plan(epsilons=[0.0])
    with pytest.raises(ValidationError):
        gaussian_plan(epsilons=[1e-2, 1e-1])
    with pytest.raises(ValidationError):
        gaussian_plan(epsilons=[])


def test_supplied_basis_needs_file():
    with pytest.raises(ValidationError):
        gaussian_plan(basis="supplied")


def test_slope_helpers():
    epsilons = [1e-1, 1e-2, 1e-3]
    diffs = [3e-2, 3e-4, 3e-6]
    assert fitted_slope(epsilons, diffs) == pytest.approx(2.0)
    slopes = running_slopes(epsilons, diffs)
    assert slopes[1] == pytest.approx(2.0) and slopes[2] == pytest.approx(2.0)
    assert math.isnan(fitted_slope([1e-1], [1e-2]))
    assert math.isnan(slopes[0])


@pytest.mark.parametrize("model", ["gaussian", "qubit"])
def test_sweep_slope(analyzer, model):
    report = analyzer.run_sweep(gaussian_plan(model=model))
    assert [r['epsilon'] for r in report.rows] == [1e-1, 1e-2, 1e-3, 1e-4]
    assert 1.7 <= report.metadata['slope'] <= 2.3
    assert report.metadata['seed'] == 7
    assert report.metadata['version'] == __version__


def test_eigen_basis_sweep_is_exact(analyzer):
    report = analyzer.run_sweep(gaussian_plan(basis="eigen"))
    assert all(row['norm_diff'] < 1e-12 for row in report.rows)


def test_sweep_is_deterministic_across_jobs():
    plan = gaussian_plan(epsilons=[0.5, 0.2, 0.1, 0.05, 0.01, 0.005])
    serial = WeakValueAnalyzer(LabConfig(), jobs=1).run_sweep(plan).to_csv()
    parallel = WeakValueAnalyzer(LabConfig(), jobs=3).run_sweep(plan).to_csv()
    assert serial == parallel
    assert serial == WeakValueAnalyzer(LabConfig(), jobs=1).run_sweep(plan).to_csv()


def test_sweep_cli_csv(capsys):
    assert main(["sweep", "--model", "gaussian", "--dim", "3", "--seed", "1", "--epsilons", "0.1", "0.01"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "epsilon,norm_diff,restricted_diff,eigen_tail,weak_tail,slope_running"
    assert len(lines) == 3
    assert lines[1].startswith("0.10000000000000001,")
    assert lines[1].endswith(",nan")


def test_invalid_epsilon_exits_2(capsys):
    assert main(["sweep", "--epsilons", "0"]) == 2
    assert "invalid plan field 'epsilons'" in capsys.readouterr().err


def test_invalid_xi_exits_2(capsys):
    assert main(["certify", "--xi", "1.5"]) == 2
    assert "invalid plan field 'xi'" in capsys.readouterr().err


@pytest.mark.parametrize("model", ["gaussian", "qubit"])
def test_certify_json(capsys, model):
    assert main(["certify", "--model", model, "--dim", "3", "--seed", "2", "--xi", "0.1"]) == 0
    payload = json.loads(capsys.readouterr().out)
    for key in CERTIFY_COLUMNS:
        assert key in payload
    assert payload['pass'] is True
    assert payload['metadata']['certified'] is True
    assert payload['xi'] == 0.1
    assert payload['metadata']['model'] == model
    assert ('bound_chain_slack' in payload['metadata']) == (model == "gaussian")


@pytest.mark.parametrize("space,column", [("position", "q"), ("momentum", "p")])
def test_density_table(capsys, space, column):
    assert main(["density", "--model", "gaussian", "--space", space, "--points", "11"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == f"{column},density"
    assert len(lines) == 12


def test_density_rejects_qubit(capsys):
    assert main(["density", "--model", "qubit"]) == 2
    assert "gaussian model only" in capsys.readouterr().err


def test_density_floor(analyzer):
    report = analyzer.run_density(gaussian_plan(epsilons=[0.5]), points=51)
    assert all(row['density'] >= 1e-15 for row in report.rows)
    mid = report.rows[25]
    assert mid['density'] == max(row['density'] for row in report.rows)


def test_probs_rows_sum_to_one(analyzer):
    report = analyzer.run_probs(gaussian_plan(model="qubit", epsilons=[0.3, 0.1]))
    assert len(report.rows) == 8
    for row in report.rows:
        assert row['p_plus_z'] + row['p_minus_z'] == pytest.approx(1.0, abs=1e-15)
        assert 0.0 <= row['p_plus_x'] <= 1.0


def test_probs_rejects_bad_index(analyzer):
    with pytest.raises(ValueError):
        analyzer.run_probs(gaussian_plan(model="qubit"), phi_index=9)


def test_probs_cli_header(capsys):
    assert main(["probs", "--model", "qubit", "--dim", "2", "--phi-index", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "epsilon,re_aw,im_aw,p_plus_z,p_minus_z,p_plus_x,phi_index"
    assert len(lines) == 5


def test_seed_env_override(monkeypatch, capsys):
    monkeypatch.setenv("WEAKVAL_SEED", "11")
    assert resolve_seed(3) == 11
    assert main(["certify", "--seed", "3", "--dim", "3", "--xi", "0.5"]) == 0
    assert json.loads(capsys.readouterr().out)['metadata']['seed'] == 11


def test_jobs_resolution(monkeypatch):
    assert resolve_jobs(None) == 1
    monkeypatch.setenv("WEAKVAL_JOBS", "4")
    assert resolve_jobs(None) == 4
    assert resolve_jobs(2) == 2


def test_bad_config_exits_2(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{"certify_xi": 3}', encoding="utf-8")
    assert main(["sweep", "--config", str(path)]) == 2
    assert "invalid lab config" in capsys.readouterr().err
    with pytest.raises(ValueError):
        load_lab_config(str(tmp_path / "missing.json"))


def test_bundled_config_matches_defaults():
    assert load_lab_config() == LabConfig()


def test_matrix_file_dimension_mismatch(tmp_path, capsys):
    path = tmp_path / "sigma_z.json"
    path.write_text("[[1, 0], [0, -1]]", encoding="utf-8")
    assert main(["sweep", "--dim", "3", "--matrix", str(path)]) == 2
    assert "dimension mismatch" in capsys.readouterr().err
    assert main(["sweep", "--dim", "2", "--matrix", str(path), "--epsilons", "0.1", "0.01"]) == 0


def test_out_file(tmp_path, capsys):
    out = tmp_path / "sweep.json"
    assert main(["sweep", "--dim", "2", "--epsilons", "0.1", "0.01", "--format", "json", "--out", str(out)]) == 0
    payload = json.loads(out.read_text(encoding="utf-8"))
    assert len(payload['rows']) == 2
    assert payload['rows'][0]['slope_running'] is None
    assert capsys.readouterr().out == ""


def test_appendix_cli(capsys):
    assert main(["appendix"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload['metadata']['suite'] == 'appendix'
    assert payload['metadata']['failed'] == []


def test_verify_cli_with_small_config(tmp_path, capsys):
    config = LabConfig().model_dump()
    config['checks']['verify_cases'] = 10
    path = tmp_path / "small.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    assert main(["verify", "--config", str(path)]) == 0
    captured = capsys.readouterr()
    payload = json.loads(captured.out)
    assert payload['metadata']['passed'] is True
    assert len(payload['rows']) == 7
    assert "[CHECK] gaussian_overlaps: ok" in captured.err


def test_certify_json_keys_are_fixed(capsys):
    assert main(["certify", "--dim", "4", "--seed", "7", "--xi", "0.01"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert [key for key in payload if key != 'metadata'] == [
        'abar', 'wbar', 'xi', 'epsilon', 'achieved', 'conservative_bound', 'paper_bound', 'pass',
    ]
    assert payload['paper_bound'] == pytest.approx(0.01 * (6.0 + 4.0 * 0.01))


def test_failed_certificate_exits_1(monkeypatch, capsys):
    def overshooting(A, psi, basis, params, hbar=1.0):
        return ErrorCertificate(params=params, epsilon=0.1, achieved_norm_diff=5.0,
                                conservative_bound=conservative_bound(params.xi), tight_bound=tight_bound(params.xi),
                                model="qubit")

    monkeypatch.setattr(weak_value_analysis, "certify_epsilon_qubit", overshooting)
    assert main(["certify", "--model", "qubit", "--dim", "3", "--xi", "0.1"]) == 1
    captured = capsys.readouterr()
    payload = json.loads(captured.out)
    assert payload['pass'] is False
    assert payload['metadata']['certified'] is False
    assert payload['metadata']['failed'] == ['certificate']
    assert "[ERROR] achieved" in captured.err


def test_service_exports_resolve():
    assert all(hasattr(services, name) for name in services.__all__)
    report = services.AppendixChecks(dominance_instances=2).run()
    assert report['passed'], report['failed']
