"""Monte-Carlo sweeps: generate, tune, fit and score over a grid of one axis.

A sweep varies one of ``n``, ``r`` or ``s`` while the others stay fixed.
Replication ``k`` draws its instance from ``SeedSequence([seed, k])`` and
its observations at grid point ``i`` from ``SeedSequence([seed, k, i])``,
so grid points share instances (common random numbers) whenever the axis
does not change the instance itself.
"""
import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import sampling, synth, tuning
from .core import ErrorReport, error_report
from .solver import SolverConfig, fit

AXES = ("n", "r", "s")
VARIANTS = ("robust", "nuclear_only")
RECORD_HEADER = ["axis", "axis_value", "replication", "err_L", "err_S",
                 "err_S_noncorrupted", "psi_pred", "converged", "iters", "seconds"]
METRICS = {"err_L": "normalized_frob_L", "err_S": "normalized_frob_S",
           "err_S_noncorrupted": "noncorrupted_S_error"}
MIN_SLOPE_POINTS = 4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep.  ``n_grid`` holds a single value when the axis is ``r`` or ``s``."""

    dims: tuple
    rank_r: int
    sparsity_s: int
    corruption_kind: str = "columnwise"
    adversary: str = "uniform_support"
    sigma: float = 0.1
    a_bound: float = 1.0
    sampling: dict = field(default_factory=lambda: {"kind": "uniform"})
    n_grid: tuple = (1000,)
    n_tilde_rule: dict = field(default_factory=lambda: {"kind": "fixed", "k": 0})
    lambda_C: float = 1.0
    replications: int = 1
    seed: int = 0
    estimator_variants: tuple = ("robust",)
    axis: str = "n"
    r_grid: tuple = None
    s_grid: tuple = None
    signed_values: bool = False
    max_iters: int = 5000
    rel_tol: float = 1e-9
    record_time: bool = False

    def __post_init__(self):
        # normalize list-valued fields so configs loaded from JSON hash and compare alike
        for name in ("dims", "n_grid", "estimator_variants", "r_grid", "s_grid"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(value))
        self._validate()

    def _validate(self):
        if len(self.dims) != 2 or min(self.dims) < 2:
            raise ConfigError("dims must be two integers >= 2")
        if self.corruption_kind not in synth.CORRUPTION_KINDS:
            raise ConfigError(f"corruption_kind must be one of {synth.CORRUPTION_KINDS}")
        if self.adversary not in synth.ADVERSARIES:
            raise ConfigError(f"adversary must be one of {synth.ADVERSARIES}")
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}")
        if not self.n_grid or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigError("n_grid must be non-empty and strictly increasing")
        if self.axis != "n" and len(self.n_grid) != 1:
            raise ConfigError("n_grid must hold one value when sweeping r or s")
        other = {"r": self.r_grid, "s": self.s_grid}.get(self.axis)
        if self.axis != "n":
            if not other or any(b <= a for a, b in zip(other, other[1:])):
                raise ConfigError(f"{self.axis}_grid must be non-empty and strictly increasing")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not self.estimator_variants or any(v not in VARIANTS for v in self.estimator_variants):
            raise ConfigError(f"estimator_variants must be a non-empty subset of {VARIANTS}")
        if self.sigma < 0 or self.a_bound <= 0 or self.lambda_C <= 0:
            raise ConfigError("need sigma >= 0, a_bound > 0 and lambda_C > 0")
        kind = self.sampling.get("kind")
        if kind not in ("uniform", "tilt"):
            raise ConfigError("sampling.kind must be 'uniform' or 'tilt'")
        if kind == "tilt" and not 0 <= self.sampling.get("beta", -1) < 1:
            raise ConfigError("sampling.beta must lie in [0, 1)")
        rule = self.n_tilde_rule.get("kind")
        if rule == "fixed":
            if int(self.n_tilde_rule.get("k", -1)) < 0:
                raise ConfigError("n_tilde_rule.k must be >= 0")
        elif rule == "proportional":
            if not self.n_tilde_rule.get("rho", -1) >= 0:
                raise ConfigError("n_tilde_rule.rho must be >= 0")
        else:
            raise ConfigError("n_tilde_rule.kind must be 'fixed' or 'proportional'")

    @property
    def regularizer(self):
        return "l21" if self.corruption_kind == "columnwise" else "l1"

    def grid(self):
        return {"n": self.n_grid, "r": self.r_grid, "s": self.s_grid}[self.axis]

    def point(self, value):
        """``(n, r, s)`` at one grid value."""
        n, r, s = self.n_grid[0], self.rank_r, self.sparsity_s
        if self.axis == "n":
            n = value
        elif self.axis == "r":
            r = value
        else:
            s = value
        return int(n), int(r), int(s)

    def n_tilde(self, n):
        if self.n_tilde_rule["kind"] == "fixed":
            return int(self.n_tilde_rule["k"])
        return int(math.ceil(self.n_tilde_rule["rho"] * n))

    def to_dict(self):
        d = asdict(self)
        for name in ("dims", "n_grid", "estimator_variants", "r_grid", "s_grid"):
            if d[name] is not None:
                d[name] = list(d[name])
        return d

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("experiment config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_config(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return ExperimentConfig.from_dict(data)


@dataclass
class RunRecord:
    config_hash: str
    variant: str
    axis: str
    axis_value: int
    replication: int
    n: int
    n_tilde: int
    report: ErrorReport
    prediction: tuning.RatePrediction
    psi_pred: float
    seconds: float
    converged: bool
    iters: int
    final_objective: float

    def metric(self, name):
        return getattr(self.report, METRICS[name])


def build_distribution(cfg, support):
    noncorrupted = support.complement()
    if cfg.sampling["kind"] == "uniform":
        return sampling.uniform_on(noncorrupted)
    return sampling.tilt(noncorrupted, cfg.sampling["beta"])


def solver_config(cfg, prediction, variant):
    lam2 = math.inf if variant == "nuclear_only" else prediction.lambda2
    return SolverConfig(prediction.lambda1, lam2, cfg.regularizer, cfg.a_bound,
                        max_iters=cfg.max_iters, rel_tol=cfg.rel_tol)


def generate(cfg, grid_index, replication):
    """Instance, observations, distribution and prediction for one task."""
    m1, m2 = cfg.dims
    n, r, s = cfg.point(cfg.grid()[grid_index])
    inst = synth.gen_instance(m1, m2, r, s, cfg.a_bound, cfg.corruption_kind,
                              [cfg.seed, replication])
    pi = build_distribution(cfg, inst.corrupted_support)
    n_tilde = cfg.n_tilde(n) if s > 0 else 0
    obs = synth.gen_observations(inst, pi, n, n_tilde, cfg.sigma, cfg.adversary,
                                 [cfg.seed, replication, grid_index],
                                 signed_values=cfg.signed_values)
    prediction = tuning.predict(
        m1=m1, m2=m2, r=r, s=s, n=n, n_tilde=n_tilde, sigma=cfg.sigma, a=cfg.a_bound,
        kind=cfg.corruption_kind, constants=sampling.measure_constants(pi), C=cfg.lambda_C)
    return inst, obs, prediction


def _run_task(args):
    cfg, grid_index, replication = args
    inst, obs, prediction = generate(cfg, grid_index, replication)
    eff = synth.effective_instance(inst, obs)
    psi = prediction.psi_GS if cfg.corruption_kind == "columnwise" else prediction.psi_S
    value = int(cfg.grid()[grid_index])
    out = []
    for variant in cfg.estimator_variants:
        t0 = time.perf_counter()
        res = fit(obs, solver_config(cfg, prediction, variant))
        seconds = time.perf_counter() - t0
        report = error_report(res.L_hat, res.S_hat, eff.L0, eff.S0, eff.noncorrupted_set)
        out.append(RunRecord(cfg.hash(), variant, cfg.axis, value, replication, obs.n, obs.n_tilde,
                             report, prediction, psi, seconds, res.converged, res.iterations,
                             res.final_objective))
    return out


def run_experiment(cfg, threads=1):
    """Run every (grid point, replication) task; records come back sorted.

    ``threads=0`` uses one worker process per CPU.  The order of the result
    (variant, axis value, replication) does not depend on scheduling.
    """
    tasks = [(cfg, i, k) for i in range(len(cfg.grid())) for k in range(cfg.replications)]
    workers = (os.cpu_count() or 1) if threads == 0 else threads
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    records = [rec for chunk in chunks for rec in chunk]
    order = {v: i for i, v in enumerate(cfg.estimator_variants)}
    records.sort(key=lambda rec: (order[rec.variant], rec.axis_value, rec.replication))
    return records


def mean_by_axis(records, metric):
    """Sorted axis values with the mean, standard error and count of `metric`."""
    groups = {}
    for rec in records:
        groups.setdefault(rec.axis_value, []).append(rec.metric(metric))
    xs = sorted(groups)
    means = np.array([np.mean(groups[x]) for x in xs])
    se = np.array([np.std(groups[x], ddof=1) / math.sqrt(len(groups[x])) if len(groups[x]) > 1
                   else math.nan for x in xs])
    return np.array(xs, dtype=np.float64), means, se


def fit_rate_slope(records, axis, metric="err_L"):
    """Least-squares slope (and its standard error) of log mean `metric` against log axis value."""
    records = [rec for rec in records if rec.axis == axis]
    xs, means, _ = mean_by_axis(records, metric)
    if len(xs) < MIN_SLOPE_POINTS:
        raise ValueError(f"need at least {MIN_SLOPE_POINTS} grid points on axis {axis!r}, got {len(xs)}")
    return tuning.loglog_slope(xs, means)


def write_records_csv(path, records, record_time=False):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_HEADER)
        for rec in records:
            w.writerow([rec.axis, rec.axis_value, rec.replication,
                        repr(rec.report.normalized_frob_L), repr(rec.report.normalized_frob_S),
                        repr(rec.report.noncorrupted_S_error), repr(rec.psi_pred),
                        int(rec.converged), rec.iters,
                        repr(rec.seconds) if record_time else ""])


def summarize(cfg, records):
    out = {"config_hash": cfg.hash(), "axis": cfg.axis, "variants": {}}
    for variant in cfg.estimator_variants:
        recs = [r for r in records if r.variant == variant]
        entry = {"non_converged": sum(not r.converged for r in recs), "metrics": {}}
        for metric in METRICS:
            xs, means, se = mean_by_axis(recs, metric)
            m = {"axis_values": xs.tolist(), "mean": means.tolist(),
                 "stderr": [None if math.isnan(v) else v for v in se.tolist()]}
            if len(xs) >= MIN_SLOPE_POINTS:
                slope, slope_se = fit_rate_slope(recs, cfg.axis, metric)
                m["slope"] = None if math.isnan(slope) else slope
                m["slope_stderr"] = None if math.isnan(slope_se) else slope_se
            entry["metrics"][metric] = m
        out["variants"][variant] = entry
    return out


def write_outputs(out_dir, cfg, records):
    """Write ``records_<variant>.csv`` per variant and ``summary.json`` into `out_dir`."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for variant in cfg.estimator_variants:
        path = os.path.join(out_dir, f"records_{variant}.csv")
        write_records_csv(path, [r for r in records if r.variant == variant], cfg.record_time)
        paths.append(path)
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w") as fh:
        json.dump(summarize(cfg, records), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(path)
    return paths
