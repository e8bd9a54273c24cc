"""Build problems and methods from a :class:`RunConfig` and execute runs."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from . import baselines, deterministic, stochastic
from .data import (
    ConfigError,
    RunConfig,
    estimate_H_logistic,
    gen_logsumexp,
    gen_random_logistic,
    gen_separable_logistic,
    load_libsvm,
)
from .oracle import Budgets, Oracle, Trace
from .problems import CubicNormProblem, LogisticProblem, QuadraticProblem
from .stochastic import NoisyOracle
from .validation import estimate_fstar

PROBLEMS = ("logistic", "synthetic_logistic", "separable_logistic", "logsumexp", "quadratic",
            "cubic_norm")


@dataclass
class BuiltProblem:
    oracle: Oracle
    x0: np.ndarray
    # constant from the problem structure (logistic only); None when unknown
    H_estimate: Optional[float] = None
    f_star: Optional[float] = None
    base: Optional[Oracle] = None  # the noiseless oracle when noise is injected


def _need(cfg: RunConfig, *names):
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise ConfigError(f"problem {cfg.problem!r} needs: {', '.join(missing)}")


def _scalar_seed(cfg: RunConfig) -> int:
    if isinstance(cfg.seed, list):
        raise ConfigError("seed lists are only valid for sweeps")
    return int(cfg.seed)


def build_problem(cfg: RunConfig, with_fstar: bool = True) -> BuiltProblem:
    seed = _scalar_seed(cfg)
    H_est = None
    if cfg.problem == "logistic":
        _need(cfg, "dataset_path")
        ds = load_libsvm(cfg.dataset_path, dim=cfg.d, normalize_rows=cfg.normalize_rows)
        oracle = LogisticProblem.from_dataset(ds, cfg.l2)
        oracle.name = f"logistic({ds.name})"
        H_est = estimate_H_logistic(ds)
    elif cfg.problem in ("synthetic_logistic", "separable_logistic"):
        _need(cfg, "n", "d")
        if cfg.problem == "synthetic_logistic":
            ds = gen_random_logistic(cfg.n, cfg.d, seed=seed)
        else:
            ds = gen_separable_logistic(cfg.n, cfg.d, margin=0.1, seed=seed)
        oracle = LogisticProblem.from_dataset(ds, cfg.l2)
        oracle.name = cfg.problem
        H_est = estimate_H_logistic(ds)
    elif cfg.problem == "logsumexp":
        _need(cfg, "n", "d", "rho")
        oracle = gen_logsumexp(cfg.n, cfg.d, cfg.rho, seed=seed)
    elif cfg.problem == "quadratic":
        _need(cfg, "d")
        rng = np.random.default_rng(seed)
        Q = np.diag(np.logspace(-2, 0, cfg.d))
        oracle = QuadraticProblem(Q, rng.standard_normal(cfg.d))
    elif cfg.problem == "cubic_norm":
        _need(cfg, "d")
        oracle = CubicNormProblem(coeff=1.0, d=cfg.d)
    else:
        raise ConfigError(f"unknown problem {cfg.problem!r}; choose from {', '.join(PROBLEMS)}")
    x0 = np.ones(oracle.dim()) if cfg.problem == "cubic_norm" else np.zeros(oracle.dim())
    f_star = None
    if with_fstar and oracle.has_hessian:
        f_star = float(estimate_fstar(oracle))
    base = oracle
    if cfg.sigma_g > 0:
        oracle = NoisyOracle(base, cfg.sigma_g, seed=np.random.SeedSequence(seed).spawn(1)[0])
    return BuiltProblem(oracle, x0, H_est, f_star, base)


def _H(cfg: RunConfig, bp: BuiltProblem, default: Optional[float] = None) -> float:
    if cfg.H0 is not None:
        return float(cfg.H0)
    if bp.H_estimate is not None and bp.H_estimate > 0:
        return bp.H_estimate
    if default is not None:
        return default
    raise ConfigError(f"method {cfg.method!r} needs H0 for problem {cfg.problem!r}")


def _batch_size(cfg: RunConfig, oracle: Oracle) -> Optional[int]:
    n = oracle.n_samples
    return None if n is None else max(1, int(cfg.batch_frac * n))


def _scalar(v, name):
    if isinstance(v, list):
        raise ConfigError(f"{name} lists are only valid for sweeps")
    return v


MethodFn = Callable[[RunConfig, BuiltProblem, Budgets], Trace]


def _stoch(cfg, bp, budgets, fn, *consts):
    vals = [_scalar(getattr(cfg, c), c) for c in consts]
    if any(v is None for v in vals):
        raise ConfigError(f"method {cfg.method!r} needs: {', '.join(consts)}")
    seed = _scalar_seed(cfg)
    return fn(bp.oracle, bp.x0, *vals, budgets=budgets, seed=seed,
              batch_size=_batch_size(cfg, bp.oracle))


def _lr(cfg):
    if cfg.lr is None:
        raise ConfigError("method 'gd' needs lr")
    return cfg.lr


def _fstar(bp):
    if bp.f_star is None:
        raise ConfigError("method 'polyak' needs a reference f_star (problem without Hessian)")
    return bp.f_star


METHODS: dict[str, MethodFn] = {
    "cacun": lambda c, p, b: deterministic.run_cacun(p.oracle, p.x0, _H(c, p), b),
    "acc_cacun": lambda c, p, b: deterministic.run_acc_cacun(p.oracle, p.x0, _H(c, p), budgets=b),
    "cacuadan": lambda c, p, b: deterministic.run_cacuadan(p.oracle, p.x0, _H(c, p, 1.0), b),
    "cacuadan_plus": lambda c, p, b: deterministic.run_cacuadan_plus(p.oracle, p.x0, _H(c, p, 1.0), b),
    "cacuadgd": lambda c, p, b: deterministic.run_cacuadgd(p.oracle, p.x0, c.H0 or 1.0, c.alpha, b),
    "cubic_newton": lambda c, p, b: baselines.run_cubic_newton(p.oracle, p.x0, _H(c, p), b),
    "acc_cubic": lambda c, p, b: baselines.run_acc_cubic(p.oracle, p.x0, _H(c, p), b),
    "reg_newton": lambda c, p, b: baselines.run_reg_newton(p.oracle, p.x0, _H(c, p), b),
    "adan": lambda c, p, b: baselines.run_adan(p.oracle, p.x0, _H(c, p, 1.0), b),
    "adan_plus": lambda c, p, b: baselines.run_adan_plus(p.oracle, p.x0, _H(c, p, 1.0), b),
    "gd": lambda c, p, b: baselines.run_gd(p.oracle, p.x0, _lr(c), b),
    "polyak": lambda c, p, b: baselines.run_polyak(p.oracle, p.x0, _fstar(p), b),
    "adgd": lambda c, p, b: baselines.run_adgd(p.oracle, p.x0, budgets=b),
    "nesterov_ls": lambda c, p, b: baselines.run_nesterov_ls(p.oracle, p.x0, budgets=b),
    "sgd": lambda c, p, b: _stoch(c, p, b, stochastic.run_sgd, "L_hat"),
    "cacusgd": lambda c, p, b: _stoch(c, p, b, stochastic.run_cacusgd, "L_hat", "H_hat"),
}


def budgets_of(cfg: RunConfig) -> Budgets:
    return Budgets(max_iters=cfg.max_iters, max_seconds=cfg.max_seconds, grad_tol=cfg.grad_tol)


def config_hash(cfg: RunConfig) -> str:
    """sha256 over the canonical config and the bytes of any input dataset."""
    h = hashlib.sha256(json.dumps(cfg.to_dict(), sort_keys=True, default=str).encode())
    if cfg.dataset_path:
        with open(cfg.dataset_path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


def execute(cfg: RunConfig) -> Trace:
    """Run one configured experiment and return its trace with full metadata."""
    if cfg.method not in METHODS:
        raise ConfigError(f"unknown method {cfg.method!r}; choose from {', '.join(sorted(METHODS))}")
    bp = build_problem(cfg)
    trace = METHODS[cfg.method](cfg, bp, budgets_of(cfg))
    meta = trace.metadata
    meta["seed"] = cfg.seed
    meta["f_star_reference"] = bp.f_star
    meta["config"] = cfg.to_dict()
    meta["input_hash"] = config_hash(cfg)
    if bp.H_estimate is not None:
        meta["H_estimate"] = bp.H_estimate
    return trace


def expand_sweep(cfg: RunConfig) -> list[RunConfig]:
    """Cartesian product over ``L_hat`` x ``H_hat`` x ``seed`` lists."""
    as_list = lambda v: v if isinstance(v, list) else [v]  # noqa: E731
    cells = []
    for L in as_list(cfg.L_hat):
        for H in as_list(cfg.H_hat):
            for s in as_list(cfg.seed):
                cells.append(replace(cfg, L_hat=L, H_hat=H, seed=s))
    return cells


def final_window_gap(trace: Trace, frac: float = 0.1) -> float:
    """Median optimality gap over the last ``frac`` of the records."""
    f = trace.f_values
    if len(f) == 0:
        return math.nan
    f_star = trace.f_star if trace.f_star is not None else 0.0
    w = max(1, int(math.ceil(frac * len(f))))
    return float(np.median(f[-w:] - f_star))
