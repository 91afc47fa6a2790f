"""Command-line contract: files, exit codes, determinism and round trips."""

import json
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats

from gcm import cli, estimators, fileio, inference, mc, model
from gcm.errors import ConfigError, MatrixParseError

TIMES4 = [1.0, 2.0, 3.0, 4.0]


def _ar_sigma(p, rho=0.3):
    idx = np.arange(p)
    return (rho ** np.abs(np.subtract.outer(idx, idx))).tolist()


def _scenario_dict(equal_curves=False, contrast="equality", family="gaussian", df=None):
    theta = [[1.0, 0.5], [1.0, 0.5]] if equal_curves else [[1.0, 0.5], [2.0, 0.25]]
    return {
        "m": 2,
        "q": 2,
        "times": TIMES4,
        "theta": theta,
        "sigma": _ar_sigma(4),
        "noise": {"family": family, "df": df},
        "contrast": contrast,
    }


@pytest.fixture
def sim_files(tmp_path):
    """Simulated dataset on disk plus contrast files, ready for estimate/test."""
    config = {"scenario": _scenario_dict(), "r": 8, "seed": 42}
    cfg_path = tmp_path / "sim.json"
    cfg_path.write_text(json.dumps(config))
    out = tmp_path / "data"
    assert cli.main(["simulate", "--config", str(cfg_path), "--out", str(out)]) == 0
    fileio.write_matrix_csv(str(out / "C.csv"), np.array([[1.0, -1.0]]))
    fileio.write_matrix_csv(str(out / "D.csv"), np.array([[0.0, 1.0]]))
    return out


def _estimation_argv(out, extra=()):
    return [
        "--y", str(out / "Y.csv"),
        "--x", str(out / "X.csv"),
        "--z", str(out / "Z.csv"),
        "--c", str(out / "C.csv"),
        "--d", str(out / "D.csv"),
        *extra,
    ]


# ---------------------------------------------------------------------------
# simulate


def test_simulate_writes_expected_shapes(sim_files):
    y = fileio.read_matrix_csv(str(sim_files / "Y.csv"))
    x = fileio.read_matrix_csv(str(sim_files / "X.csv"))
    z = fileio.read_matrix_csv(str(sim_files / "Z.csv"))
    assert y.shape == (16, 4)
    assert x.shape == (16, 2)
    assert z.shape == (4, 2)
    truth = fileio.read_json(str(sim_files / "truth.json"))
    assert truth["seed"] == 42
    assert np.asarray(truth["sigma_cholesky"]).shape == (4, 4)


def test_simulate_is_deterministic(tmp_path):
    config = {"scenario": _scenario_dict(), "r": 4, "seed": 7}
    cfg_path = tmp_path / "sim.json"
    cfg_path.write_text(json.dumps(config))
    for out in ("a", "b"):
        assert cli.main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path / out)]) == 0
    for name in ("Y.csv", "X.csv", "Z.csv", "truth.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_seed_flag_overrides_config(tmp_path):
    config = {"scenario": _scenario_dict(), "r": 4, "seed": 7}
    cfg_path = tmp_path / "sim.json"
    cfg_path.write_text(json.dumps(config))
    assert cli.main(["simulate", "--config", str(cfg_path), "--seed", "8",
                     "--out", str(tmp_path / "o")]) == 0
    truth = fileio.read_json(str(tmp_path / "o" / "truth.json"))
    assert truth["seed"] == 8


def test_simulate_requires_seed(tmp_path):
    config = {"scenario": _scenario_dict(), "r": 4}
    cfg_path = tmp_path / "sim.json"
    cfg_path.write_text(json.dumps(config))
    assert cli.main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 2


# ---------------------------------------------------------------------------
# estimate


def test_estimate_report_matches_library_exactly(sim_files, tmp_path):
    out = tmp_path / "est"
    code = cli.main(
        ["estimate", *_estimation_argv(sim_files),
         "--truth", str(sim_files / "truth.json"), "--out", str(out)]
    )
    assert code == 0
    report = fileio.read_report(str(out / "report.json"))
    results = report["results"]

    y = fileio.read_matrix_csv(str(sim_files / "Y.csv"))
    x = fileio.read_matrix_csv(str(sim_files / "X.csv"))
    z = fileio.read_matrix_csv(str(sim_files / "Z.csv"))
    data = model.Dataset(Y=y, design=model.Design(X=x, Z=z))
    contrast = model.Contrast(C=np.array([[1.0, -1.0]]), D=np.array([[0.0, 1.0]]))
    gamma = estimators.two_stage_gamma(data, contrast).value
    law = inference.plugin_cov(data, contrast)
    assert np.array_equal(np.asarray(results["gamma"]), gamma)
    assert np.array_equal(np.asarray(results["cov_left"]), law.left)
    assert np.array_equal(np.asarray(results["cov_right"]), law.right)
    assert np.array_equal(
        np.asarray(results["std_errors"]), inference.standard_errors(law)
    )

    truth = fileio.read_json(str(sim_files / "truth.json"))
    theta_true = np.asarray(truth["theta"])
    expected_gamma_err = float(np.linalg.norm(gamma - contrast.apply(theta_true)))
    assert results["truth_errors"]["gamma_err_fro"] == expected_gamma_err


def test_estimate_with_known_sigma_matches_ols(tmp_path):
    # Z = [I_q; 0] and identity covariance reduce the estimator to OLS on the
    # first q response columns
    rng = np.random.default_rng(3)
    n, m, p, q = 12, 2, 4, 2
    x = rng.standard_normal((n, m))
    z = np.vstack([np.eye(q), np.zeros((p - q, q))])
    y = rng.standard_normal((n, p))
    d = tmp_path
    fileio.write_matrix_csv(str(d / "Y.csv"), y)
    fileio.write_matrix_csv(str(d / "X.csv"), x)
    fileio.write_matrix_csv(str(d / "Z.csv"), z)
    fileio.write_matrix_csv(str(d / "C.csv"), np.eye(m))
    fileio.write_matrix_csv(str(d / "D.csv"), np.eye(q))
    fileio.write_matrix_csv(str(d / "S0.csv"), np.eye(p))
    out = d / "est"
    code = cli.main(
        ["estimate", *_estimation_argv(d), "--sigma0", str(d / "S0.csv"), "--out", str(out)]
    )
    assert code == 0
    report = fileio.read_report(str(out / "report.json"))
    assert report["results"]["estimator"] == "known_sigma"
    ols = np.linalg.lstsq(x, y[:, :q], rcond=None)[0]
    assert np.allclose(np.asarray(report["results"]["gamma"]), ols, atol=1e-10)


def test_estimate_zero_contrast_gives_zero_gamma(sim_files, tmp_path):
    fileio.write_matrix_csv(str(sim_files / "C.csv"), np.zeros((1, 2)))
    out = tmp_path / "est"
    assert cli.main(["estimate", *_estimation_argv(sim_files), "--out", str(out)]) == 0
    report = fileio.read_report(str(out / "report.json"))
    assert np.array_equal(np.asarray(report["results"]["gamma"]), np.zeros((1, 1)))


def test_estimate_header_flag(tmp_path, sim_files):
    # prepend a header row to every input and re-run with --header
    for name in ("Y", "X", "Z", "C", "D"):
        path = sim_files / f"{name}.csv"
        body = path.read_text()
        width = len(body.splitlines()[0].split(","))
        header = ",".join(f"col{i}" for i in range(width))
        path.write_text(header + "\n" + body)
    out = tmp_path / "est"
    code = cli.main(["estimate", *_estimation_argv(sim_files), "--header", "--out", str(out)])
    assert code == 0


# ---------------------------------------------------------------------------
# test command


def test_test_command_fields_are_consistent(sim_files, tmp_path):
    out = tmp_path / "tst"
    code = cli.main(
        ["test", *_estimation_argv(sim_files), "--alpha", "0.05", "--out", str(out)]
    )
    assert code == 0
    results = fileio.read_report(str(out / "report.json"))["results"]
    # the p-value must be recomputable from chi_sq and dof by an external table
    reference = stats.chi2.sf(results["chi_sq"], results["dof"])
    assert results["p_value"] == pytest.approx(reference, abs=1e-12)
    assert results["reject"] == (results["p_value"] < 0.05)
    t_stat = np.asarray(results["t_stat"])
    assert results["chi_sq"] == pytest.approx(float((t_stat**2).sum()), abs=1e-12)


def test_test_command_null_data_accepts(tmp_path):
    # equal group curves: gamma = 0 exactly, the test should not reject
    config = {"scenario": _scenario_dict(equal_curves=True), "r": 50, "seed": 3}
    cfg_path = tmp_path / "sim.json"
    cfg_path.write_text(json.dumps(config))
    out = tmp_path / "data"
    assert cli.main(["simulate", "--config", str(cfg_path), "--out", str(out)]) == 0
    fileio.write_matrix_csv(str(out / "C.csv"), np.array([[1.0, -1.0]]))
    fileio.write_matrix_csv(str(out / "D.csv"), np.array([[0.0, 1.0]]))
    tst = tmp_path / "tst"
    assert cli.main(["test", *_estimation_argv(out), "--out", str(tst)]) == 0
    results = fileio.read_report(str(tst / "report.json"))["results"]

    y = fileio.read_matrix_csv(str(out / "Y.csv"))
    x = fileio.read_matrix_csv(str(out / "X.csv"))
    z = fileio.read_matrix_csv(str(out / "Z.csv"))
    data = model.Dataset(Y=y, design=model.Design(X=x, Z=z))
    contrast = model.Contrast(C=np.array([[1.0, -1.0]]), D=np.array([[0.0, 1.0]]))
    expected = inference.test_gamma_zero(data, contrast, 0.05)
    assert results["chi_sq"] == expected.chi_sq
    assert results["p_value"] == expected.p_value
    assert results["reject"] is False


def test_test_command_alpha_one_always_rejects(sim_files, tmp_path):
    out = tmp_path / "tst"
    code = cli.main(["test", *_estimation_argv(sim_files), "--alpha", "1.0", "--out", str(out)])
    assert code == 0
    results = fileio.read_report(str(out / "report.json"))["results"]
    assert results["p_value"] < 1.0
    assert results["reject"] is True


# ---------------------------------------------------------------------------
# mc commands


def _mc_config(tmp_path, kind="consistency", **overrides):
    doc = {
        "scenario": _scenario_dict(
            equal_curves=(kind == "level"),
            contrast="equality" if kind == "level" else "identity",
        ),
        "sample_sizes": [4, 8, 16] if kind == "consistency" else [20],
        "replications": 40,
        "seed": 2718,
    }
    doc.update(overrides)
    path = tmp_path / f"{kind}.json"
    path.write_text(json.dumps(doc))
    return path


def test_mc_consistency_table_has_one_row_per_size(tmp_path):
    cfg = _mc_config(tmp_path)
    out = tmp_path / "mc"
    assert cli.main(["mc-consistency", "--config", str(cfg), "--out", str(out)]) == 0
    table = (out / "tables" / "consistency.csv").read_text().splitlines()
    assert table[0] == "n,median_sigma_err,median_gamma_err,h_gap"
    assert len(table) == 4


def test_mc_report_bytes_are_reproducible(tmp_path, monkeypatch):
    cfg = _mc_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    monkeypatch.delenv("GCM_THREADS", raising=False)
    assert cli.main(["mc-consistency", "--config", str(cfg), "--out", str(a)]) == 0
    monkeypatch.setenv("GCM_THREADS", "2")
    assert cli.main(["mc-consistency", "--config", str(cfg), "--out", str(b)]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert (a / "tables" / "consistency.csv").read_bytes() == (
        b / "tables" / "consistency.csv"
    ).read_bytes()


def test_mc_normality_table_matches_report(tmp_path):
    cfg = _mc_config(tmp_path, kind="normality")
    out = tmp_path / "mc"
    assert cli.main(["mc-normality", "--config", str(cfg), "--out", str(out)]) == 0
    report = fileio.read_report(str(out / "report.json"))
    lines = (out / "tables" / "covariance_match.csv").read_text().splitlines()
    assert lines[0] == "relative_frobenius"
    assert float(lines[1]) == report["results"]["cells"][0]["rel_frobenius"]
    norm_lines = (out / "tables" / "normality.csv").read_text().splitlines()
    assert norm_lines[0] == "coordinate,ks_distance,mean,variance,skewness,ex_kurtosis"
    assert len(norm_lines) == 1 + 4  # identity contrast on a 2x2 theta


def test_mc_level_table_columns(tmp_path):
    cfg = _mc_config(tmp_path, kind="level")
    out = tmp_path / "mc"
    assert cli.main(["mc-level", "--config", str(cfg), "--out", str(out)]) == 0
    lines = (out / "tables" / "level.csv").read_text().splitlines()
    assert lines[0] == "alpha,rejection_rate,n_replicates"
    alpha, rate, reps = lines[1].split(",")
    assert float(alpha) == 0.05
    assert 0.0 <= float(rate) <= 1.0
    assert int(reps) == 40


def test_mc_dump_resummarizes_to_the_same_report(tmp_path):
    cfg = _mc_config(tmp_path)
    out = tmp_path / "mc"
    code = cli.main(
        ["mc-consistency", "--config", str(cfg), "--out", str(out), "--dump-replicates"]
    )
    assert code == 0
    report = fileio.read_report(str(out / "report.json"))
    config = mc.McConfig.from_dict(
        {k: v for k, v in report["inputs"].items() if k != "dump_replicates"}
    )
    contrast = config.scenario.contrast()
    cols = mc.record_columns("consistency", contrast.s, contrast.t)
    for cell_doc in report["results"]["cells"]:
        dump = fileio.read_matrix_csv(
            str(out / "tables" / f"replicates_r{cell_doc['r']}.csv"), skip_header=True
        )
        records = {c: dump[:, 1 + i] for i, c in enumerate(cols)}
        redone = mc.summarize_cell("consistency", records, config.scenario, cell_doc["r"])
        assert redone.to_dict() == cell_doc


def test_mc_seed_and_alpha_flags_override_config(tmp_path):
    cfg = _mc_config(tmp_path, kind="level")
    out = tmp_path / "mc"
    code = cli.main(
        ["mc-level", "--config", str(cfg), "--seed", "5", "--alpha", "0.1", "--out", str(out)]
    )
    assert code == 0
    report = fileio.read_report(str(out / "report.json"))
    assert report["meta"]["seed"] == 5
    assert report["inputs"]["alpha"] == 0.1


# ---------------------------------------------------------------------------
# exit codes


def test_exit_2_on_malformed_csv(sim_files, tmp_path, capsys):
    (sim_files / "Y.csv").write_text("1.0,2.0\n3.0,not_a_number\n")
    code = cli.main(["estimate", *_estimation_argv(sim_files), "--out", str(tmp_path / "o")])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "MatrixParseError"
    assert ":2:" in err["error"]["message"]  # line number of the bad row


def test_exit_2_on_ragged_csv(sim_files, tmp_path):
    (sim_files / "Y.csv").write_text("1.0,2.0\n3.0\n")
    code = cli.main(["estimate", *_estimation_argv(sim_files), "--out", str(tmp_path / "o")])
    assert code == 2


def test_exit_2_on_invalid_design(tmp_path):
    # square Z violates p > q
    d = tmp_path
    fileio.write_matrix_csv(str(d / "Y.csv"), np.random.default_rng(0).standard_normal((6, 2)))
    fileio.write_matrix_csv(str(d / "X.csv"), np.vstack([np.eye(2)] * 3))
    fileio.write_matrix_csv(str(d / "Z.csv"), np.array([[1.0, 1.0], [1.0, 2.0]]))
    fileio.write_matrix_csv(str(d / "C.csv"), np.eye(2))
    fileio.write_matrix_csv(str(d / "D.csv"), np.eye(2))
    assert cli.main(["estimate", *_estimation_argv(d), "--out", str(d / "o")]) == 2


def test_exit_2_on_unknown_config_key(tmp_path):
    cfg = _mc_config(tmp_path, bogus=1)
    assert cli.main(["mc-consistency", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_exit_2_on_bad_alpha(sim_files, tmp_path):
    code = cli.main(
        ["test", *_estimation_argv(sim_files), "--alpha", "0.0", "--out", str(tmp_path / "o")]
    )
    assert code == 2


def test_exit_3_on_missing_input(sim_files, tmp_path, capsys):
    argv = _estimation_argv(sim_files)
    argv[1] = str(sim_files / "nope.csv")
    code = cli.main(["estimate", *argv, "--out", str(tmp_path / "o")])
    assert code == 3
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["exit_code"] == 3


def test_exit_4_on_too_few_samples(tmp_path):
    rng = np.random.default_rng(1)
    d = tmp_path
    fileio.write_matrix_csv(str(d / "Y.csv"), rng.standard_normal((5, 4)))
    fileio.write_matrix_csv(str(d / "X.csv"), rng.standard_normal((5, 2)))
    fileio.write_matrix_csv(str(d / "Z.csv"), np.vander(np.array(TIMES4), 2, increasing=True))
    fileio.write_matrix_csv(str(d / "C.csv"), np.array([[1.0, -1.0]]))
    fileio.write_matrix_csv(str(d / "D.csv"), np.array([[0.0, 1.0]]))
    assert cli.main(["estimate", *_estimation_argv(d), "--out", str(d / "o")]) == 4


def test_exit_4_on_noise_free_data(tmp_path):
    design = model.potthoff_roy_design(2, 5, TIMES4, 2)
    theta = np.array([[1.0, 0.5], [2.0, 0.25]])
    d = tmp_path
    fileio.write_matrix_csv(str(d / "Y.csv"), design.X @ theta @ design.Z.T)
    fileio.write_matrix_csv(str(d / "X.csv"), design.X)
    fileio.write_matrix_csv(str(d / "Z.csv"), design.Z)
    fileio.write_matrix_csv(str(d / "C.csv"), np.array([[1.0, -1.0]]))
    fileio.write_matrix_csv(str(d / "D.csv"), np.array([[0.0, 1.0]]))
    code = cli.main(["estimate", *_estimation_argv(d), "--out", str(d / "o")])
    assert code == 4
    # the error report still lands, machine readable
    report = fileio.read_report(str(d / "o" / "report.json"))
    assert report["errors"][0]["type"] == "NotSpd"
    assert report["results"] is None


def test_exit_5_on_singular_standardizer(sim_files, tmp_path):
    fileio.write_matrix_csv(
        str(sim_files / "C.csv"), np.array([[1.0, -1.0], [1.0, -1.0]])
    )
    code = cli.main(["test", *_estimation_argv(sim_files), "--out", str(tmp_path / "o")])
    assert code == 5


# ---------------------------------------------------------------------------
# file round trips and schema

def test_matrix_csv_round_trip_is_bit_exact(tmp_path):
    tricky = np.array(
        [
            [np.pi, 1.0 / 3.0, 1e-15],
            [-0.0, 2.0**-1074, 1.7976931348623157e308],
            [123456789.123456789, -1e-300, 0.1],
        ]
    )
    path = tmp_path / "m.csv"
    fileio.write_matrix_csv(str(path), tricky)
    back = fileio.read_matrix_csv(str(path))
    assert np.array_equal(back, tricky)
    assert back.tobytes() == tricky.tobytes()  # -0.0 round-trips too


def test_report_schema_rejects_unknown_keys(tmp_path):
    path = tmp_path / "report.json"
    doc = fileio.make_report(1, {}, {"ok": True})
    fileio.write_json(str(path), doc)
    assert fileio.read_report(str(path))["meta"]["seed"] == 1
    doc["surprise"] = 1
    fileio.write_json(str(path), doc)
    with pytest.raises(ConfigError):
        fileio.read_report(str(path))
    doc = fileio.make_report(1, {}, None)
    doc["meta"]["extra"] = 1
    fileio.write_json(str(path), doc)
    with pytest.raises(ConfigError):
        fileio.read_report(str(path))


def test_matrix_parse_error_carries_line_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1.0,2.0\n\n3.0,4.0\n")
    with pytest.raises(MatrixParseError) as excinfo:
        fileio.read_matrix_csv(str(path))
    assert excinfo.value.line == 2


def test_console_script_is_installed():
    proc = subprocess.run(
        [sys.executable, "-m", "gcm.cli", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "simulate" in proc.stdout
