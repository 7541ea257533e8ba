import json

import numpy as np
import pytest

from robustmc import cli
from robustmc.core import ErrorReport
from robustmc.harness import (
    ConfigError, ExperimentConfig, RunRecord, _run_task, fit_rate_slope, generate, load_config,
    mean_by_axis, run_experiment, write_outputs,
)
from robustmc.tuning import lambdas_columnwise


def tiny_config(**kw):
    base = dict(dims=[8, 8], rank_r=1, sparsity_s=1, sigma=0.05, n_grid=[200, 400],
                n_tilde_rule={"kind": "proportional", "rho": 0.05}, lambda_C=0.4,
                replications=2, seed=3, rel_tol=1e-6)
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def fake_records(axis, values, errors):
    out = []
    for v, e in zip(values, errors):
        out.append(RunRecord("h", "robust", axis, v, 0, 0, 0, ErrorReport(e, e, e), None, 0.0,
                             0.0, True, 1, 0.0))
    return out


def test_exact_power_slopes():
    ns = [100, 200, 400, 800, 1600]
    slope, _ = fit_rate_slope(fake_records("n", ns, [3.0 / n for n in ns]), "n")
    assert slope == pytest.approx(-1.0, abs=1e-10)
    ss = [1, 2, 4, 8]
    slope, _ = fit_rate_slope(fake_records("s", ss, [0.01 * s for s in ss]), "s", "err_S")
    assert slope == pytest.approx(1.0, abs=1e-10)


def test_slope_needs_four_points():
    with pytest.raises(ValueError):
        fit_rate_slope(fake_records("n", [1, 2, 3], [1.0, 0.5, 0.3]), "n")


def test_mean_by_axis_groups_replications():
    recs = fake_records("n", [10, 10, 20], [1.0, 3.0, 5.0])
    xs, means, se = mean_by_axis(recs, "err_L")
    assert xs.tolist() == [10, 20] and means.tolist() == [2.0, 5.0]
    assert se[0] == pytest.approx(1.0) and np.isnan(se[1])


def test_config_validation():
    with pytest.raises(ConfigError):
        tiny_config(n_grid=[400, 200])
    with pytest.raises(ConfigError):
        tiny_config(bogus=1)
    with pytest.raises(ConfigError):
        tiny_config(axis="s", s_grid=None)
    with pytest.raises(ConfigError):
        tiny_config(estimator_variants=["lasso"])
    cfg = tiny_config()
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    assert ExperimentConfig.from_dict(cfg.to_dict()).hash() == cfg.hash()
    assert cfg.n_tilde(401) == 21


def test_noiseless_smoke_run():
    cfg = tiny_config(dims=[6, 6], sparsity_s=0, sigma=0.0, n_grid=[2000], replications=1,
                      lambda_C=0.05, rel_tol=1e-9)
    (rec,) = run_experiment(cfg)
    assert rec.n_tilde == 0
    assert rec.report.normalized_frob_L < 1e-3


def test_runs_are_deterministic(tmp_path):
    cfg = tiny_config(estimator_variants=["robust", "nuclear_only"])
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert [(r.variant, r.axis_value, r.replication, r.report) for r in a] == \
           [(r.variant, r.axis_value, r.replication, r.report) for r in b]
    write_outputs(tmp_path / "a", cfg, a)
    write_outputs(tmp_path / "b", cfg, b)
    for name in ("records_robust.csv", "records_nuclear_only.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = (tmp_path / "a" / "records_robust.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 2


def test_grid_points_share_instances():
    cfg = tiny_config()
    inst0, _, _ = generate(cfg, 0, 1)
    inst1, _, _ = generate(cfg, 1, 1)
    np.testing.assert_array_equal(inst0.L0, inst1.L0)
    other, _, _ = generate(cfg, 0, 0)
    assert not np.array_equal(inst0.L0, other.L0)


def test_process_pool_matches_serial():
    cfg = tiny_config(replications=1)
    serial = run_experiment(cfg, threads=1)
    pooled = run_experiment(cfg, threads=2)
    assert [r.report for r in serial] == [r.report for r in pooled]

# ------------------------------------------------------------ CLI

def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_cli_pipeline_matches_in_process(tmp_path):
    cfg = tiny_config()
    raw = dict(cfg.to_dict(), grid_index=1, replication=1)
    conf = write_json(tmp_path / "exp.json", raw)
    out = tmp_path / "run"
    assert cli.main(["generate", "--config", conf, "--out", str(out)]) == 0
    assert cli.main(["solve", "--config", str(out / "solve_config.json"), "--out", str(out)]) == 0
    assert cli.main(["evaluate", "--config", str(out / "evaluate_config.json"),
                     "--out", str(out)]) == 0
    report = json.loads((out / "error_report.json").read_text())
    (rec,) = _run_task((cfg, 1, 1))
    assert report == rec.report.as_dict()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["final_objective"] == rec.final_objective


def test_cli_predict_lambda_identity(tmp_path):
    conf = write_json(tmp_path / "p.json", {
        "dims": [50, 60], "r": 2, "s": 2, "n": 3000, "n_tilde": 60, "sigma": 0.1, "a": 1.0,
        "kind": "columnwise", "C": 0.8,
        "constants": {"mu": 1.0, "L_const": 1.2, "gamma": 1.1, "mu1": 1.0}})
    assert cli.main(["predict", "--config", conf, "--out", str(tmp_path)]) == 0
    pred = json.loads((tmp_path / "prediction.json").read_text())
    lam1, _ = lambdas_columnwise(0.1, 1.0, 1.2, 1.1, 3060, 50, 60, C=0.8)
    assert pred["lambda1"] == pytest.approx(lam1, rel=1e-12, abs=1e-12)


def test_cli_experiment_and_diagnose(tmp_path):
    conf = write_json(tmp_path / "exp.json", tiny_config().to_dict())
    assert cli.main(["experiment", "--config", conf, "--out", str(tmp_path / "e")]) == 0
    rows = (tmp_path / "e" / "records_robust.csv").read_text().splitlines()
    assert len(rows) - 1 >= 2 * 2
    conf = write_json(tmp_path / "d.json", {"dims": [5, 5], "sigma": 1.0,
                                            "N_grid": [100, 200], "replications": 20})
    assert cli.main(["diagnose", "--config", conf, "--out", str(tmp_path / "d")]) == 0
    assert (tmp_path / "d" / "scaling.csv").exists()


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["experiment", "--config", str(bad)]) == cli.EXIT_CONFIG
    conf = write_json(tmp_path / "unknown.json", {"dims": [4, 4], "rank_r": 1, "sparsity_s": 0,
                                                  "colour": "red"})
    assert cli.main(["experiment", "--config", conf]) == cli.EXIT_CONFIG
    assert cli.main(["solve", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_IO
    conf = write_json(tmp_path / "solve.json", {
        "observations": "nowhere.csv", "dims": [4, 4], "lambda1": 0.1, "lambda2": 0.1,
        "regularizer": "l1", "a_bound": 1.0})
    assert cli.main(["solve", "--config", conf, "--out", str(tmp_path)]) == cli.EXIT_IO
    (tmp_path / "garbled.csv").write_text("row,col,value,flag\n0,zero,1.0,0\n")
    conf = write_json(tmp_path / "solve2.json", {
        "observations": "garbled.csv", "dims": [4, 4], "lambda1": 0.1, "lambda2": 0.1,
        "regularizer": "l1", "a_bound": 1.0})
    assert cli.main(["solve", "--config", conf, "--out", str(tmp_path)]) == cli.EXIT_IO

    raw = dict(tiny_config().to_dict())
    out = tmp_path / "gen"
    assert cli.main(["generate", "--config", write_json(tmp_path / "g.json", raw),
                     "--out", str(out)]) == 0
    solve = json.loads((out / "solve_config.json").read_text())
    solve.update(max_iters=1, rel_tol=0.0)
    conf = write_json(out / "strict.json", solve)
    assert cli.main(["solve", "--config", conf, "--out", str(out)]) == 0
    assert cli.main(["solve", "--config", conf, "--out", str(out), "--strict"]) == \
        cli.EXIT_NOT_CONVERGED


def test_generate_writes_every_variant(tmp_path):
    raw = tiny_config(estimator_variants=["robust", "nuclear_only"]).to_dict()
    out = tmp_path / "gen"
    assert cli.main(["generate", "--config", write_json(tmp_path / "g.json", raw),
                     "--out", str(out)]) == 0
    nuc = json.loads((out / "solve_config_nuclear_only.json").read_text())
    assert nuc["lambda2"] == "inf"
    assert load_config(tmp_path / "g.json") == tiny_config(estimator_variants=["robust",
                                                                             "nuclear_only"])
