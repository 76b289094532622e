"""Experiment configuration, Monte Carlo drivers and CSV/JSON output.

Config files are INI with one ``[experiment]`` section::

    [experiment]
    kind = linear            ; bounds | linear | power | verify
    n = 150                  ; measurements (linear, verify)
    m = 60                   ; states (linear, verify)
    network = ieee30         ; builtin name or path to a CDF file (power)
    measurements = 100       ; plan size (power)
    sigmas = 0, 0.5, 1       ; dense noise grid
    rhos = 0.05, 0.2         ; bad-data fraction grid
    error_sigma = 4          ; std of the gross errors
    trials = 100
    seed = 42
    eps_rule = chi           ; chi (0.98 quantile) | fixed
    eps = 0                  ; radius when eps_rule = fixed (also verify)
    deltas = 0.1, 0.5, 0.9   ; bounds sweep
    mus = 0.002, 0.004       ; bounds sweep
    varpi_delta = 0.5
    k_max = 10               ; verify
    workers = 1
    output = results.csv

Every trial draws from its own RNG stream keyed by (trial, sigma, rho), so
adding a grid value does not change the draws of the existing cells. Trial
results are reduced in trial order, so the worker count never changes the
output bytes.
"""
import configparser
import csv
import dataclasses
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .aep_bounds import NoRecovery, alpha_star, balancedness_C, sparsity_threshold, varpi
from .errors import ConfigError, NoCertificate, NonConvergence, RankDeficient
from .estimators import (LinearModel, NoiseModel, bhat_test_estimate, chi_eps,
                         decode_iterative, decode_linear, relative_error,
                         wls_estimate)
from .numerics import make_rng
from .power_model import (NonlinearModel, build_admittance, default_plan,
                          load_builtin, load_cdf)
from .verification import certify_region

KINDS = ("bounds", "linear", "power", "verify")
SUCCESS_TOL = 1e-5

_DEFAULT_TRIALS = {"bounds": 1, "linear": 100, "power": 50, "verify": 10}
_DEFAULT_ERROR_SIGMA = {"linear": 4.0, "power": 0.5}


def _grid(start, stop, count):
    return tuple(round(float(v), 12) for v in np.linspace(start, stop, count))


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    n: int = 150
    m: int = 60
    network: str = "ieee30"
    measurements: int = 100
    sigmas: tuple = (0.0,)
    rhos: tuple = (0.2,)
    error_sigma: float = None
    trials: int = None
    seed: int = 42
    eps_rule: str = "chi"
    eps: float = 0.0
    deltas: tuple = _grid(0.1, 0.9, 9)
    mus: tuple = _grid(0.002, 0.02, 10)
    varpi_delta: float = 0.5
    k_max: int = 10
    max_outer: int = 25
    workers: int = 1
    output: str = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {', '.join(KINDS)}, got {self.kind!r}")
        if self.trials is None:
            object.__setattr__(self, "trials", _DEFAULT_TRIALS[self.kind])
        if self.error_sigma is None:
            object.__setattr__(self, "error_sigma", _DEFAULT_ERROR_SIGMA.get(self.kind, 4.0))
        for name in ("sigmas", "rhos", "deltas", "mus"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ConfigError(f"{name} must not be empty")
            object.__setattr__(self, name, vals)
        if self.trials < 1:
            raise ConfigError(f"trials must be at least 1, got {self.trials}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.eps_rule not in ("chi", "fixed"):
            raise ConfigError(f"eps_rule must be chi or fixed, got {self.eps_rule!r}")
        if self.eps < 0 or any(s < 0 for s in self.sigmas) or self.error_sigma < 0:
            raise ConfigError("eps, sigmas and error_sigma must be nonnegative")
        if any(not 0 <= r <= 1 for r in self.rhos):
            raise ConfigError("rhos must lie in [0, 1]")
        if any(not 0 < d < 1 for d in self.deltas) or not 0 < self.varpi_delta < 1:
            raise ConfigError("deltas must lie in (0, 1)")
        if any(not 0 < u < 1 for u in self.mus):
            raise ConfigError("mus must lie in (0, 1)")
        if self.kind in ("linear", "verify") and not self.n > self.m >= 1:
            raise ConfigError(f"need n > m >= 1, got n={self.n}, m={self.m}")
        if self.k_max < 1 or self.workers < 1 or self.max_outer < 1 or self.measurements < 1:
            raise ConfigError("k_max, workers, max_outer and measurements must be positive")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def canonical(self):
        """Fields that determine the results (not the output path or worker count)."""
        d = dataclasses.asdict(self)
        d.pop("output")
        d.pop("workers")
        return d

    def digest(self):
        text = json.dumps(self.canonical(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
_TUPLE_FIELDS = {"sigmas", "rhos", "deltas", "mus"}
_INT_FIELDS = {"n", "m", "measurements", "trials", "seed", "k_max", "max_outer", "workers"}
_FLOAT_FIELDS = {"error_sigma", "eps", "varpi_delta"}


def coerce(name, value):
    """Convert a config string (or CLI value) for field ``name``."""
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {name!r}")
    try:
        if name in _TUPLE_FIELDS:
            if isinstance(value, str):
                return tuple(float(v) for v in value.replace(",", " ").split())
            return tuple(float(v) for v in value)
        if name in _INT_FIELDS:
            return int(value)
        if name in _FLOAT_FIELDS:
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc
    return str(value).strip()


def load_config(path, kind=None, **overrides):
    """Read an INI config; ``overrides`` (already typed, ``None`` = unset) win."""
    values = {}
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not parser.has_section("experiment"):
            raise ConfigError(f"{path}: missing [experiment] section")
        for key, val in parser.items("experiment"):
            values[key] = coerce(key, val)
    for key, val in overrides.items():
        if val is not None:
            values[key] = coerce(key, val)
    if kind is not None:
        if "kind" in values and values["kind"] != kind:
            raise ConfigError(f"config kind {values['kind']!r} does not match command {kind!r}")
        values["kind"] = kind
    if "kind" not in values:
        raise ConfigError("config does not name an experiment kind")
    return ExperimentConfig(**values)


# ---------------------------------------------------------------- results

@dataclass
class Table:
    columns: list
    rows: list
    summary: dict = field(default_factory=dict)
    trials: list = field(default_factory=list)  # per-trial records, not written to CSV


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.12g}"
    return str(v)


def render_csv(table, config):
    buf = io.StringIO()
    buf.write(f"# robustse {__version__}\n")
    buf.write(f"# kind {config.kind}\n")
    buf.write(f"# config_hash {config.digest()}\n")
    buf.write(f"# seed {config.seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_fmt(row.get(c)) for c in table.columns])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def write_outputs(table, config, path=None):
    """Write the CSV (and a ``.json`` sidecar next to it). Returns the CSV text."""
    text = render_csv(table, config)
    path = path or config.output
    if path:
        path = Path(path)
        sidecar = {"version": __version__, "config_hash": config.digest(),
                   "seed": config.seed, "config": config.canonical(),
                   "summary": table.summary}
        try:
            path.write_text(text)
            path.with_suffix(path.suffix + ".json").write_text(
                json.dumps(_jsonable(sidecar), indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return text


def _map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def _cell_key(sigma, rho):
    return int(round(sigma * 1e6)), int(round(rho * 1e6))


def _mean(vals):
    vals = [v for v in vals if v is not None and math.isfinite(v)]
    return float(np.mean(vals)) if vals else math.nan


# ---------------------------------------------------------------- bounds

def run_bounds_sweep(config):
    """alpha* over the delta grid, then C and varpi over the mu grid."""
    cols = ["table", "delta", "alpha_star", "mu", "C", "varpi", "mu_threshold"]
    rows = []
    for d in config.deltas:
        a = alpha_star(d)
        rows.append({"table": "alpha", "delta": d, "alpha_star": a,
                     "mu_threshold": sparsity_threshold(a)})
    d = config.varpi_delta
    a = alpha_star(d)
    for mu in config.mus:
        row = {"table": "varpi", "delta": d, "alpha_star": a, "mu": mu}
        try:
            C = balancedness_C(mu, a)
            if isinstance(C, NoRecovery):
                row.update(C=C.C, varpi=math.inf)
            else:
                row.update(C=C, varpi=varpi(d, mu, a))
        except (ValueError, NoCertificate):
            row.update(C=math.nan, varpi=math.inf)
        rows.append(row)
    summary = {"alpha_star": {str(r["delta"]): r["alpha_star"] for r in rows if r["table"] == "alpha"},
               "mu_threshold": sparsity_threshold(a)}
    return Table(cols, rows, summary)


# ---------------------------------------------------------------- linear

def linear_trial(config, sigma, rho, trial):
    """One draw of the linear experiment; returns a dict of errors."""
    rng = make_rng(config.seed, trial, *_cell_key(sigma, rho))
    n, m = config.n, config.m
    H = rng.standard_normal((n, m))
    x = rng.uniform(-1.0, 1.0, m)
    v, e, support = NoiseModel(sigma, rho, config.error_sigma).sample(rng, n)
    y = H @ x + e + v
    eps = chi_eps(n, sigma) if config.eps_rule == "chi" else config.eps
    out = {"trial": trial, "eps": eps, "n_errors": len(support)}
    for name, radius in (("mixed", eps), ("l1", 0.0)):
        try:
            res = decode_linear(y, H, radius)
            out[name] = relative_error(res.x_hat, x)
        except (NonConvergence, RankDeficient) as exc:
            out[name] = None
            out[name + "_failure"] = type(exc).__name__
    return out


def _linear_job(args):
    return linear_trial(*args)


def run_linear_experiment(config):
    cols = ["sigma", "rho", "trials", "n_errors", "eps_mean", "mixed_mean", "l1_mean",
            "mixed_success", "l1_success", "mixed_failures", "l1_failures", "seed"]
    rows, records = [], []
    for sigma in config.sigmas:
        for rho in config.rhos:
            jobs = [(config, sigma, rho, t) for t in range(config.trials)]
            res = _map(_linear_job, jobs, config.workers)
            row = {"sigma": sigma, "rho": rho, "trials": config.trials, "seed": config.seed,
                   "n_errors": res[0]["n_errors"], "eps_mean": _mean([r["eps"] for r in res])}
            for name in ("mixed", "l1"):
                errs = [r[name] for r in res]
                ok = [e for e in errs if e is not None]
                row[name + "_mean"] = _mean(ok)
                row[name + "_success"] = sum(e < SUCCESS_TOL for e in ok) / len(errs)
                row[name + "_failures"] = len(errs) - len(ok)
            rows.append(row)
            records.append({"sigma": sigma, "rho": rho, "trials": res})
    return Table(cols, rows, {"cells": len(rows)}, records)


# ---------------------------------------------------------------- power

def power_model_for(config):
    if config.network.endswith(".cdf") or "/" in config.network:
        try:
            net = load_cdf(config.network)
        except OSError as exc:
            raise ConfigError(f"cannot read network {config.network}: {exc.strerror}") from exc
    else:
        try:
            net = load_builtin(config.network)
        except (FileNotFoundError, ValueError) as exc:
            raise ConfigError(f"unknown builtin network {config.network!r}") from exc
    tables = build_admittance(net)
    return NonlinearModel(net, tables, default_plan(net, config.measurements))


def _strictly_decreasing(trace):
    """Errors after the first iteration strictly decrease (until they hit
    rounding level)."""
    t = list(trace)
    for a, b in zip(t, t[1:]):
        if a < 1e-13:
            break
        if not b < a:
            return False
    return True


def power_trial(config, sigma, rho, trial, model=None):
    model = model if model is not None else power_model_for(config)
    rng = make_rng(config.seed, trial, *_cell_key(sigma, rho))
    x = model.net.solved_state()
    x0 = model.net.flat_state()
    n = model.n_measurements
    v, e, support = NoiseModel(sigma, rho, config.error_sigma).sample(rng, n)
    y = model.measure(x) + v + e
    eps = chi_eps(n, sigma) if config.eps_rule == "chi" else config.eps
    out = {"trial": trial, "eps": eps, "support": [int(s) for s in support]}
    try:
        r = decode_iterative(model, y, eps, x0, max_outer=config.max_outer, x_true=x)
        out.update(iterative=r.trace[-1], trace=r.trace, iterative_converged=True)
    except NonConvergence as exc:
        r = exc.result
        if r is not None and r.trace:
            out.update(iterative=r.trace[-1], trace=r.trace)
        else:
            out.update(iterative=None, trace=[])
        out["iterative_converged"] = False
    except RankDeficient as exc:
        out.update(iterative=None, trace=[], iterative_converged=False,
                   iterative_failure=type(exc).__name__)
    # WLS with the true bad-data support removed, and the residual test
    w = np.full(n, 1.0 / max(sigma, 1e-6) ** 2)
    try:
        r = wls_estimate(model, y, w, x0, known_bad=support, x_true=x)
        out["wls_oracle"] = relative_error(r.x_hat, x)
    except NonConvergence as exc:
        out["wls_oracle"] = relative_error(exc.result.x_hat, x)
    except RankDeficient:
        out["wls_oracle"] = None
    try:
        r, removed = bhat_test_estimate(model, y, sigma, x0=x0, x_true=x)
        out["bhat"] = relative_error(r.x_hat, x)
        out["bhat_removed"] = removed
    except RankDeficient:
        out["bhat"] = None
    return out


_POWER_MODEL = {}


def _power_job(args):
    config = args[0]
    key = (config.network, config.measurements)
    if key not in _POWER_MODEL:
        _POWER_MODEL[key] = power_model_for(config)
    return power_trial(*args, model=_POWER_MODEL[key])


def run_power_experiment(config):
    cols = ["sigma", "rho", "trials", "eps", "iterative_mean", "iterative_median",
            "iterative_success", "iterative_nonconverged", "trace_decreasing",
            "wls_oracle_mean", "bhat_mean", "failures", "seed"]
    power_model_for(config)  # surface network errors before any work
    rows, records = [], []
    for sigma in config.sigmas:
        for rho in config.rhos:
            jobs = [(config, sigma, rho, t) for t in range(config.trials)]
            res = _map(_power_job, jobs, config.workers)
            it = [r["iterative"] for r in res]
            ok = [e for e in it if e is not None]
            failures = sum(r.get(k) is None for r in res for k in ("iterative", "wls_oracle", "bhat"))
            rows.append({
                "sigma": sigma, "rho": rho, "trials": config.trials, "seed": config.seed,
                "eps": res[0]["eps"],
                "iterative_mean": _mean(ok),
                "iterative_median": float(np.median(ok)) if ok else math.nan,
                "iterative_success": sum(e < SUCCESS_TOL for e in ok) / len(res),
                "iterative_nonconverged": sum(not r["iterative_converged"] for r in res),
                "trace_decreasing": sum(_strictly_decreasing(r["trace"]) for r in res) / len(res),
                "wls_oracle_mean": _mean([r["wls_oracle"] for r in res]),
                "bhat_mean": _mean([r["bhat"] for r in res]),
                "failures": failures,
            })
            records.append({"sigma": sigma, "rho": rho, "trials": res})
    return Table(cols, rows, {"cells": len(rows)}, records)


# ---------------------------------------------------------------- verification

def verify_trial(config, index):
    rng = make_rng(config.seed, index)
    H = rng.standard_normal((config.n, config.m))
    return certify_region(LinearModel(H), np.zeros(config.m), config.eps, config.k_max)


def _verify_job(args):
    return verify_trial(*args)


def run_verification_sweep(config):
    cols = ["instance", "k", "C", "beta", "passed", "alpha_max", "alpha_mean", "sigma_min", "seed"]
    reports = _map(_verify_job, [(config, i) for i in range(config.trials)], config.workers)
    rows = []
    for i, rep in enumerate(reports):
        for k in range(1, config.k_max + 1):
            C = rep.C_of_k.get(k, math.nan)
            beta = rep.beta_of_k.get(k, math.inf)
            rows.append({"instance": i, "k": k, "C": C, "beta": beta, "passed": beta < 1.0,
                         "alpha_max": float(rep.alphas.max()),
                         "alpha_mean": float(rep.alphas.mean()),
                         "sigma_min": rep.sigma_min, "seed": config.seed})
    mean_C = {k: _mean([r.C_of_k.get(k, math.nan) for r in reports])
              for k in range(1, config.k_max + 1)}
    summary = {"mean_C": mean_C, "certified_k": [r.certified_k for r in reports]}
    return Table(cols, rows, summary, reports)


RUNNERS = {"bounds": run_bounds_sweep, "linear": run_linear_experiment,
           "power": run_power_experiment, "verify": run_verification_sweep}


def run(config):
    return RUNNERS[config.kind](config)
