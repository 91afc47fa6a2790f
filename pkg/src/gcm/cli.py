"""Command-line front end: simulate, estimate, test and Monte Carlo runs.

Exit codes: 0 success, 2 validation failure (bad config, malformed files,
invalid designs), 3 I/O failure, 4 singular first stage, 5 singular
standardizer in the test statistic.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import estimators, fileio, inference, linalg, mc, model
from .errors import (
    ConfigError,
    MatrixParseError,
    NotSpd,
    TooFewSamples,
    ValidationError,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_SINGULAR_FIRST_STAGE = 4
EXIT_SINGULAR_STANDARDIZER = 5


class CommandError(Exception):
    """Command failure carrying the exit code and a machine-readable kind."""

    def __init__(self, code: int, kind: str, message: str):
        self.code = code
        self.kind = kind
        super().__init__(message)


def _listify(a: np.ndarray) -> list:
    return [[float(v) for v in row] for row in np.atleast_2d(a)]


def _require_seed(value) -> int:
    seed = int(value)
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def _load_scenario_config(path: str) -> dict:
    doc = fileio.read_json(path)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return doc


def _cov_factors(design: model.Design, contrast: model.Contrast, sigma: np.ndarray):
    """Covariance factors C (X'X)^{-1} C' and D (Z' sigma^{-1} Z)^{-1} D'."""
    x, z = design.X, design.Z
    c, d = contrast.C, contrast.D
    left = c @ linalg.solve_spd(x.T @ x, c.T, "X'X")
    g = z.T @ linalg.solve_spd(sigma, z, "sigma")
    right = d @ linalg.solve_spd(g, d.T, "Z' sigma^{-1} Z")
    return (left + left.T) / 2.0, (right + right.T) / 2.0


def cmd_simulate(args) -> int:
    config = _load_scenario_config(args.config)
    allowed = {"scenario", "r", "seed"}
    unknown = set(config) - allowed
    if unknown:
        raise ConfigError(f"unknown simulate config keys: {sorted(unknown)}")
    if "scenario" not in config or "r" not in config:
        raise ConfigError("simulate config requires 'scenario' and 'r'")
    scenario = mc.Scenario.from_dict(config["scenario"])
    r = int(config["r"])
    seed = args.seed if args.seed is not None else config.get("seed")
    if seed is None:
        raise ConfigError("a seed is required: pass --seed or set 'seed' in the config")
    seed = _require_seed(seed)
    design = scenario.design(r)
    data = model.simulate(design, scenario.params(), scenario.noise(), seed)
    out = args.out
    fileio.write_matrix_csv(os.path.join(out, "Y.csv"), data.Y)
    fileio.write_matrix_csv(os.path.join(out, "X.csv"), design.X)
    fileio.write_matrix_csv(os.path.join(out, "Z.csv"), design.Z)
    truth = {
        "theta": _listify(scenario.theta),
        "sigma": _listify(scenario.sigma),
        "sigma_cholesky": _listify(np.linalg.cholesky(scenario.sigma)),
        "noise": {"family": scenario.noise_family, "df": scenario.noise_df},
        "seed": seed,
    }
    fileio.write_json(os.path.join(out, "truth.json"), truth)
    return EXIT_OK


def _load_estimation_inputs(args):
    y = fileio.read_matrix_csv(args.y, args.header)
    x = fileio.read_matrix_csv(args.x, args.header)
    z = fileio.read_matrix_csv(args.z, args.header)
    c = fileio.read_matrix_csv(args.c, args.header)
    d = fileio.read_matrix_csv(args.d, args.header)
    design = model.Design(X=x, Z=z)
    model.validate(design)
    data = model.Dataset(Y=y, design=design)
    contrast = model.Contrast(C=c, D=d)
    estimators._check_contrast(contrast, design)
    return data, contrast


def _truth_errors(args, data, contrast, theta, sigma_value):
    if not args.truth:
        return None
    truth = fileio.read_json(args.truth)
    if not isinstance(truth, dict) or "theta" not in truth:
        raise ConfigError(f"{args.truth}: truth file must be an object with a 'theta' key")
    theta_true = linalg.as_matrix(np.asarray(truth["theta"], dtype=np.float64), "theta")
    gamma_true = contrast.apply(theta_true)
    gamma = contrast.apply(theta)
    errors = {
        "theta_err_fro": float(np.linalg.norm(theta - theta_true)),
        "gamma_err_fro": float(np.linalg.norm(gamma - gamma_true)),
    }
    if sigma_value is not None and "sigma" in truth:
        sigma_true = np.asarray(truth["sigma"], dtype=np.float64)
        errors["sigma_err_fro"] = float(np.linalg.norm(sigma_value - sigma_true))
    return errors


def _estimate_results(args):
    data, contrast = _load_estimation_inputs(args)
    if args.sigma0:
        try:
            sigma0 = linalg.check_spd(fileio.read_matrix_csv(args.sigma0, args.header), "sigma0")
        except NotSpd as exc:
            raise CommandError(EXIT_VALIDATION, "NotSpd", str(exc)) from exc
        theta = estimators.theta_hat_known(data, sigma0)
        sigma_value = None
        estimator_name = "known_sigma"
        left, right = _cov_factors(data.design, contrast, sigma0)
    else:
        try:
            sig = estimators.sigma_hat(data)
        except (TooFewSamples, NotSpd) as exc:
            raise CommandError(
                EXIT_SINGULAR_FIRST_STAGE, type(exc).__name__, str(exc)
            ) from exc
        theta = estimators.theta_hat_known(data, sig.value)
        sigma_value = sig.value
        estimator_name = "two_stage"
        left, right = _cov_factors(data.design, contrast, sig.value)
    gamma = contrast.apply(theta)
    results = {
        "estimator": estimator_name,
        "gamma": _listify(gamma),
        "theta": _listify(theta),
        "cov_left": _listify(left),
        "cov_right": _listify(right),
        "std_errors": _listify(np.sqrt(np.outer(np.diag(left), np.diag(right)))),
    }
    if sigma_value is not None:
        results["sigma_hat"] = _listify(sigma_value)
    truth_errors = _truth_errors(args, data, contrast, theta, sigma_value)
    if truth_errors is not None:
        results["truth_errors"] = truth_errors
    return data, contrast, results


def _estimation_inputs_echo(args) -> dict:
    echo = {
        "y": args.y,
        "x": args.x,
        "z": args.z,
        "c": args.c,
        "d": args.d,
        "header": bool(args.header),
        "sigma0": args.sigma0,
        "truth": args.truth,
    }
    if hasattr(args, "alpha"):
        echo["alpha"] = args.alpha
    return echo


def cmd_estimate(args) -> int:
    _, _, results = _estimate_results(args)
    report = fileio.make_report(None, _estimation_inputs_echo(args), results)
    fileio.write_json(os.path.join(args.out, "report.json"), report)
    return EXIT_OK


def cmd_test(args) -> int:
    if not 0.0 < args.alpha <= 1.0:
        raise ConfigError(f"--alpha must be in (0, 1], got {args.alpha}")
    if args.sigma0:
        raise ConfigError("the test statistic is defined for the two-stage estimator; "
                          "--sigma0 is not supported here")
    data, contrast, results = _estimate_results(args)
    try:
        outcome = inference.test_gamma_zero(data, contrast, args.alpha)
    except NotSpd as exc:
        raise CommandError(EXIT_SINGULAR_STANDARDIZER, "NotSpd", str(exc)) from exc
    results.update(
        {
            "t_stat": _listify(outcome.T_stat),
            "chi_sq": outcome.chi_sq,
            "dof": outcome.dof,
            "p_value": outcome.p_value,
            "alpha": outcome.alpha,
            "reject": outcome.reject,
        }
    )
    report = fileio.make_report(None, _estimation_inputs_echo(args), results)
    fileio.write_json(os.path.join(args.out, "report.json"), report)
    return EXIT_OK


_MC_RUNNERS = {
    "consistency": mc.run_consistency,
    "normality": mc.run_normality,
    "level": mc.run_level,
}


def cmd_mc(args, kind: str) -> int:
    raw = _load_scenario_config(args.config)
    conf = dict(raw)
    out = args.out if args.out is not None else conf.pop("out_dir", None) or "."
    dump = bool(conf.pop("dump_replicates", False)) or args.dump_replicates
    if args.seed is not None:
        conf["seed"] = _require_seed(args.seed)
    if args.alpha is not None:
        conf["alpha"] = args.alpha
    cfg = mc.McConfig.from_dict(conf)
    try:
        report = _MC_RUNNERS[kind](cfg)
    except (TooFewSamples, NotSpd) as exc:
        raise CommandError(EXIT_SINGULAR_FIRST_STAGE, type(exc).__name__, str(exc)) from exc
    inputs = cfg.to_dict()
    inputs["dump_replicates"] = dump
    doc = fileio.make_report(cfg.seed, inputs, report.to_dict())
    tables = _mc_tables(kind, report)
    fileio.write_json(os.path.join(out, "report.json"), doc)
    for name, (header, rows) in tables.items():
        fileio.write_table_csv(os.path.join(out, "tables", name), header, rows)
    if dump:
        _write_dumps(out, report)
    return EXIT_OK


def _mc_tables(kind: str, report: mc.McReport) -> dict:
    tables = {}
    if kind == "consistency":
        rows = [
            (cell.n, cell.median_sigma_err, cell.median_gamma_err, cell.median_h_gap)
            for cell in report.cells
        ]
        tables["consistency.csv"] = (
            ["n", "median_sigma_err", "median_gamma_err", "h_gap"],
            rows,
        )
    elif kind == "normality":
        rows = []
        for cell in report.cells:
            for j in range(cell.ks_distance.size):
                rows.append(
                    (
                        j,
                        cell.ks_distance[j],
                        cell.coord_mean[j],
                        cell.coord_variance[j],
                        cell.coord_skewness[j],
                        cell.coord_ex_kurtosis[j],
                    )
                )
        tables["normality.csv"] = (
            ["coordinate", "ks_distance", "mean", "variance", "skewness", "ex_kurtosis"],
            rows,
        )
        tables["covariance_match.csv"] = (
            ["relative_frobenius"],
            [(cell.rel_frobenius,) for cell in report.cells],
        )
    elif kind == "level":
        tables["level.csv"] = (
            ["alpha", "rejection_rate", "n_replicates"],
            [
                (report.config.alpha, cell.rejection_rate, cell.replications)
                for cell in report.cells
            ],
        )
    return tables


def _write_dumps(out: str, report: mc.McReport) -> None:
    contrast = report.config.scenario.contrast()
    cols = mc.record_columns(report.kind, contrast.s, contrast.t)
    for cell, records in zip(report.cells, report.records):
        rows = []
        for i in range(cell.replications):
            rows.append([i] + [records[c][i] for c in cols])
        path = os.path.join(out, "tables", f"replicates_r{cell.r}.csv")
        fileio.write_table_csv(path, ["replicate"] + cols, rows)


def _emit_error(args, kind: str, message: str, code: int) -> None:
    payload = {"error": {"type": kind, "message": message, "exit_code": code}}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    out = getattr(args, "out", None)
    if out:
        try:
            report = fileio.make_report(
                getattr(args, "seed", None), {}, None, [payload["error"]]
            )
            fileio.write_json(os.path.join(out, "report.json"), report)
        except OSError:
            pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gcm",
        description="Growth curve model estimation and Monte Carlo verification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate a dataset and write Y/X/Z/truth files")
    sim.add_argument("--config", required=True, help="scenario config JSON")
    sim.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed")
    sim.add_argument("--out", default=".", help="output directory")
    sim.set_defaults(func=cmd_simulate)

    def add_estimation_args(p):
        p.add_argument("--y", required=True, help="observations CSV (n x p)")
        p.add_argument("--x", required=True, help="between-individual design CSV (n x m)")
        p.add_argument("--z", required=True, help="within-individual design CSV (p x q)")
        p.add_argument("--c", required=True, help="left contrast CSV (s x m)")
        p.add_argument("--d", required=True, help="right contrast CSV (t x q)")
        p.add_argument("--sigma0", default=None, help="known covariance CSV (p x p)")
        p.add_argument("--truth", default=None, help="truth.json for error reporting")
        p.add_argument("--header", action="store_true", help="skip one header row in input CSVs")
        p.add_argument("--out", default=".", help="output directory")

    est = sub.add_parser("estimate", help="estimate gamma = C theta D' from CSV data")
    add_estimation_args(est)
    est.set_defaults(func=cmd_estimate)

    tst = sub.add_parser("test", help="chi-square test of C theta D' = 0")
    add_estimation_args(tst)
    tst.add_argument("--alpha", type=float, default=0.05, help="test level")
    tst.set_defaults(func=cmd_test)

    for kind in ("consistency", "normality", "level"):
        p = sub.add_parser(f"mc-{kind}", help=f"Monte Carlo {kind} run")
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--alpha", type=float, default=None, help="override the config alpha")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument(
            "--dump-replicates",
            action="store_true",
            help="write per-replicate records to tables/replicates_r*.csv",
        )
        p.set_defaults(func=lambda a, k=kind: cmd_mc(a, k))

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        _emit_error(args, exc.kind, str(exc), exc.code)
        return exc.code
    except MatrixParseError as exc:
        _emit_error(args, "MatrixParseError", str(exc), EXIT_VALIDATION)
        return EXIT_VALIDATION
    except ValidationError as exc:
        _emit_error(args, type(exc).__name__, str(exc), EXIT_VALIDATION)
        return EXIT_VALIDATION
    except ValueError as exc:
        _emit_error(args, "ValueError", str(exc), EXIT_VALIDATION)
        return EXIT_VALIDATION
    except TooFewSamples as exc:
        _emit_error(args, "TooFewSamples", str(exc), EXIT_SINGULAR_FIRST_STAGE)
        return EXIT_SINGULAR_FIRST_STAGE
    except NotSpd as exc:
        _emit_error(args, "NotSpd", str(exc), EXIT_SINGULAR_FIRST_STAGE)
        return EXIT_SINGULAR_FIRST_STAGE
    except OSError as exc:
        _emit_error(args, type(exc).__name__, str(exc), EXIT_IO)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
