"""Command-line entry point: ``robustmc <subcommand> --config FILE [--out DIR]``.

Relative paths inside a config file are resolved against the file's
directory.  Exit codes: 1 malformed config, 2 I/O failure, 3 solver
non-convergence under ``--strict``.
"""
import argparse
import json
import math
import os
import sys

from . import harness, sampling, synth, tuning
from .core import IndexSet, error_report, read_matrix_csv, write_matrix_csv
from .solver import SolverConfig, fit, write_summary_json

EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_NOT_CONVERGED = 3


class _ConfigError(Exception):
    pass


def _load_json(path):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise _ConfigError(f"{path}: {exc}") from exc


def _require(cfg, *keys):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise _ConfigError(f"missing config keys: {missing}")


def _read(reader, *args):
    # a file that exists but does not parse is reported as an I/O failure
    try:
        return reader(*args)
    except ValueError as exc:
        raise OSError(str(exc)) from exc


def _resolve(base, path):
    return path if os.path.isabs(path) else os.path.join(base, path)


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _experiment_config(raw, seed):
    if seed is not None:
        raw = dict(raw, seed=seed)
    try:
        return harness.ExperimentConfig.from_dict(raw)
    except (harness.ConfigError, TypeError, ValueError) as exc:
        raise _ConfigError(str(exc)) from exc


def cmd_generate(args, raw, base):
    grid_index = raw.pop("grid_index", 0)
    replication = raw.pop("replication", 0)
    cfg = _experiment_config(raw, args.seed)
    if not 0 <= grid_index < len(cfg.grid()):
        raise _ConfigError("grid_index outside the grid")
    inst, obs, pred = harness.generate(cfg, grid_index, replication)
    eff = synth.effective_instance(inst, obs)
    out = args.out
    write_matrix_csv(os.path.join(out, "L0.csv"), eff.L0)
    write_matrix_csv(os.path.join(out, "S0.csv"), eff.S0)
    write_matrix_csv(os.path.join(out, "support.csv"), inst.corrupted_support.mask.astype(float))
    synth.write_observations_csv(os.path.join(out, "observations.csv"), obs)
    _dump(os.path.join(out, "prediction.json"), pred.as_dict())
    variants = {}
    for variant in cfg.estimator_variants:
        scfg = harness.solver_config(cfg, pred, variant)
        variants[variant] = {
            "observations": "observations.csv", "dims": list(cfg.dims),
            "lambda1": scfg.lambda1,
            "lambda2": "inf" if math.isinf(scfg.lambda2) else scfg.lambda2,
            "regularizer": scfg.regularizer, "a_bound": scfg.a_bound,
            "max_iters": scfg.max_iters, "rel_tol": scfg.rel_tol,
        }
    name = "solve_config.json"
    for variant, scfg in variants.items():
        _dump(os.path.join(out, name if variant == cfg.estimator_variants[0]
                           else f"solve_config_{variant}.json"), scfg)
    _dump(os.path.join(out, "evaluate_config.json"), {
        "L_hat": "L_hat.csv", "S_hat": "S_hat.csv", "L0": "L0.csv", "S0": "S0.csv",
        "support": "support.csv"})
    return 0


def cmd_solve(args, raw, base):
    _require(raw, "observations", "dims", "lambda1", "lambda2", "regularizer", "a_bound")
    try:
        dims = tuple(int(v) for v in raw["dims"])
        lam2 = math.inf if raw["lambda2"] == "inf" else float(raw["lambda2"])
        cfg = SolverConfig(float(raw["lambda1"]), lam2, raw["regularizer"], float(raw["a_bound"]),
                           max_iters=int(raw.get("max_iters", 5000)),
                           rel_tol=float(raw.get("rel_tol", 1e-9)))
    except (TypeError, ValueError) as exc:
        raise _ConfigError(str(exc)) from exc
    samples = _read(synth.read_samples, _resolve(base, raw["observations"]), dims)
    res = fit(samples, cfg)
    write_matrix_csv(os.path.join(args.out, "L_hat.csv"), res.L_hat)
    write_matrix_csv(os.path.join(args.out, "S_hat.csv"), res.S_hat)
    write_summary_json(os.path.join(args.out, "summary.json"), res, cfg)
    if args.strict and not res.converged:
        print(f"solver did not converge in {res.iterations} iterations", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return 0


def cmd_evaluate(args, raw, base):
    _require(raw, "L_hat", "S_hat", "L0", "S0", "support")
    mats = {k: _read(read_matrix_csv, _resolve(base, raw[k])) for k in ("L_hat", "S_hat", "L0", "S0", "support")}
    support = IndexSet(mats["support"] != 0)
    report = error_report(mats["L_hat"], mats["S_hat"], mats["L0"], mats["S0"], support.complement())
    _dump(os.path.join(args.out, "error_report.json"), report.as_dict())
    return 0


def _distribution(raw, base, dims):
    choice = raw.get("sampling", {"kind": "uniform"})
    if "csv" in choice:
        return _read(sampling.read_distribution_csv, _resolve(base, choice["csv"]), dims)
    full = IndexSet.full(dims)
    if choice.get("kind") == "uniform":
        return sampling.uniform_on(full)
    if choice.get("kind") == "tilt":
        return sampling.tilt(full, float(choice["beta"]))
    raise _ConfigError("sampling must be uniform, tilt or a csv path")


def cmd_diagnose(args, raw, base):
    _require(raw, "dims", "sigma", "N_grid", "replications")
    dims = tuple(int(v) for v in raw["dims"])
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    try:
        pi = _distribution(raw, base, dims)
        table = tuning.diagnose_scaling(pi, float(raw["sigma"]), raw["N_grid"],
                                        int(raw["replications"]), seed)
    except (TypeError, ValueError, KeyError) as exc:
        raise _ConfigError(str(exc)) from exc
    table.write_csv(os.path.join(args.out, "scaling.csv"))
    _dump(os.path.join(args.out, "scaling_slopes.json"), table.slopes)
    return 0


def cmd_experiment(args, raw, base):
    cfg = _experiment_config(raw, args.seed)
    records = harness.run_experiment(cfg, threads=args.threads)
    harness.write_outputs(args.out, cfg, records)
    if args.strict and not all(r.converged for r in records):
        print("some fits did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return 0


def cmd_predict(args, raw, base):
    _require(raw, "dims", "r", "s", "n", "n_tilde", "sigma", "a", "kind")
    try:
        m1, m2 = (int(v) for v in raw["dims"])
        if "constants" in raw:
            constants = sampling.AssumptionConstants(**raw["constants"])
        else:
            constants = sampling.measure_constants(_distribution(raw, base, (m1, m2)))
        pred = tuning.predict(m1=m1, m2=m2, r=int(raw["r"]), s=int(raw["s"]), n=int(raw["n"]),
                              n_tilde=int(raw["n_tilde"]), sigma=float(raw["sigma"]),
                              a=float(raw["a"]), kind=raw["kind"], constants=constants,
                              C=float(raw.get("C", 1.0)))
    except (TypeError, ValueError) as exc:
        raise _ConfigError(str(exc)) from exc
    _dump(os.path.join(args.out, "prediction.json"), pred.as_dict())
    return 0


COMMANDS = {
    "generate": cmd_generate, "solve": cmd_solve, "evaluate": cmd_evaluate,
    "diagnose": cmd_diagnose, "experiment": cmd_experiment, "predict": cmd_predict,
}


def build_parser():
    p = argparse.ArgumentParser(prog="robustmc", description="Robust matrix completion toolkit.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--strict", action="store_true", help="exit 3 if a fit does not converge")
    p.add_argument("--threads", type=int, default=1, help="worker processes (0 = one per CPU)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    base = os.path.dirname(os.path.abspath(args.config))
    try:
        raw = _load_json(args.config)
        if not isinstance(raw, dict):
            raise _ConfigError("config must be a JSON object")
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](args, raw, base)
    except _ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
