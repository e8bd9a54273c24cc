"""Reference methods the casual cubic schemes are compared against."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .deterministic import _adan_step, _start, _stop, adan_threshold, run_acc_cacun
from .oracle import Budgets, Oracle, StepKind, Trace
from .subproblem import crn_step, reg_newton_step


def run_cubic_newton(oracle: Oracle, x0, H: float, budgets: Optional[Budgets] = None) -> Trace:
    """Exact cubic-regularized Newton with constant regularization ``H``."""
    if not H > 0:
        raise ValueError("H must be positive")
    rec, x, f, g, gnorm = _start(oracle, x0, budgets, "cubic_newton", {"H": H})
    while not _stop(rec, gnorm):
        x = crn_step(oracle, x, H, g=g).T
        f, g = oracle.value_and_gradient(x)
        gnorm = float(np.linalg.norm(g))
        rec.record(f, gnorm, StepKind.CRN, H)
    return rec.finish(x=x)


def run_acc_cubic(oracle: Oracle, x0, H: float, budgets: Optional[Budgets] = None) -> Trace:
    """Accelerated cubic Newton: the accelerated scheme with every step a CRN step."""
    return run_acc_cacun(oracle, x0, H, budgets=budgets, certificate=False)


def run_reg_newton(oracle: Oracle, x0, H: float, budgets: Optional[Budgets] = None) -> Trace:
    """Global regularized Newton ``x - (hess + sqrt(H|g|) I)^{-1} g`` with fixed ``H``."""
    if not H > 0:
        raise ValueError("H must be positive")
    rec, x, f, g, gnorm = _start(oracle, x0, budgets, "reg_newton", {"H": H})
    while not _stop(rec, gnorm):
        lam = math.sqrt(H * gnorm)
        x = reg_newton_step(oracle, x, lam, g=g)
        f, g = oracle.value_and_gradient(x)
        gnorm = float(np.linalg.norm(g))
        rec.record(f, gnorm, StepKind.REG_NEWTON, lam)
    return rec.finish(x=x)


def run_adan(oracle: Oracle, x0, H0: float, budgets: Optional[Budgets] = None) -> Trace:
    """Adaptive regularized Newton: grow ``H`` by 4 until the descent test holds, halve on success."""
    if not H0 > 0:
        raise ValueError("H0 must be positive")
    rec, x, f, g, gnorm = _start(oracle, x0, budgets, "adan", {"H0": H0})
    H = float(H0)
    while not _stop(rec, gnorm):
        x, f, H_acc, lam, retries = _adan_step(oracle, x, f, g, gnorm, H)
        H = H_acc / 2.0
        g = oracle.gradient(x)
        gnorm = float(np.linalg.norm(g))
        rec.record(f, gnorm, StepKind.REG_NEWTON, lam, retries)
    return rec.finish(x=x)


def run_adan_plus(oracle: Oracle, x0, H0: float, budgets: Optional[Budgets] = None) -> Trace:
    """AdaN without rejection: always step; halve ``H`` after a passing descent test, double otherwise."""
    if not H0 > 0:
        raise ValueError("H0 must be positive")
    rec, x, f, g, gnorm = _start(oracle, x0, budgets, "adan_plus", {"H0": H0})
    H = float(H0)
    while not _stop(rec, gnorm):
        lam = math.sqrt(H * gnorm)
        x_new = reg_newton_step(oracle, x, lam, g=g)
        f_new, g = oracle.value_and_gradient(x_new)
        H = H / 2.0 if f_new <= f - adan_threshold(gnorm, H) else 2.0 * H
        x, f = x_new, f_new
        gnorm = float(np.linalg.norm(g))
        rec.record(f, gnorm, StepKind.REG_NEWTON, lam)
    return rec.finish(x=x)


def run_gd(oracle: Oracle, x0, lr: float, budgets: Optional[Budgets] = None) -> Trace:
    if not lr > 0:
        raise ValueError("lr must be positive")
    rec, x, f, g, gnorm = _start(oracle, x0, budgets, "gd", {"lr": lr})
    while not _stop(rec, gnorm):
        x = x - lr * g
        g = oracle.gradient(x)
        gnorm = float(np.linalg.norm(g))
        rec.record(oracle.untracked_value(x), gnorm, StepKind.GD, lr)
    return rec.finish(x=x)


def run_polyak(oracle: Oracle, x0, f_star: float, budgets: Optional[Budgets] = None) -> Trace:
    """Gradient descent with the Polyak step ``(f - f_star) / |g|^2``."""
    rec, x, f, g, gnorm = _start(oracle, x0, budgets, "polyak", {"f_star": f_star})
    while not _stop(rec, gnorm):
        lr = (f - f_star) / gnorm**2
        x = x - lr * g
        f, g = oracle.value_and_gradient(x)
        gnorm = float(np.linalg.norm(g))
        rec.record(f, gnorm, StepKind.POLYAK, lr)
    return rec.finish(x=x)


@dataclass
class AdgdState:
    lambda_prev: float
    lambda_prev2: float
    x_prev: np.ndarray
    g_prev: np.ndarray


def adgd_step_size(state: AdgdState, x, g) -> float:
    """``min(1/(2 L), sqrt(1 + theta) lambda_prev)`` with ``L`` from the last two gradients."""
    theta = state.lambda_prev / state.lambda_prev2 if state.lambda_prev2 > 0 else math.inf
    growth = math.sqrt(1.0 + theta) * state.lambda_prev
    dx = float(np.linalg.norm(x - state.x_prev))
    dg = float(np.linalg.norm(g - state.g_prev))
    local = dx / (2.0 * dg) if dg > 0 else math.inf
    lam = min(growth, local)
    if not math.isfinite(lam):
        lam = state.lambda_prev
    return lam


def run_adgd(oracle: Oracle, x0, lambda0: float = 1e-10, budgets: Optional[Budgets] = None) -> Trace:
    """Adaptive gradient descent without line search."""
    if not lambda0 > 0:
        raise ValueError("lambda0 must be positive")
    rec, x, f, g, gnorm = _start(oracle, x0, budgets, "adgd", {"lambda0": lambda0})
    # theta_0 = +inf: the first adaptive step is governed by the local estimate only
    state = AdgdState(lambda_prev=lambda0, lambda_prev2=0.0, x_prev=x, g_prev=g)
    lam = lambda0
    first = True
    while not _stop(rec, gnorm):
        if not first:
            lam = adgd_step_size(state, x, g)
            state = AdgdState(lambda_prev=lam, lambda_prev2=state.lambda_prev, x_prev=x, g_prev=g)
        first = False
        x = x - lam * g
        g = oracle.gradient(x)
        gnorm = float(np.linalg.norm(g))
        rec.record(oracle.untracked_value(x), gnorm, StepKind.ADGD, lam)
    return rec.finish(x=x)


def run_nesterov_ls(oracle: Oracle, x0, L0: float = 1.0, budgets: Optional[Budgets] = None,
                    max_backtracks: int = 60) -> Trace:
    """Accelerated gradient method with Armijo-like doubling/halving of ``L``."""
    if not L0 > 0:
        raise ValueError("L0 must be positive")
    rec, x, f, g, gnorm = _start(oracle, x0, budgets, "nesterov_ls", {"L0": L0})
    v = x.copy()
    A = 0.0
    L = float(L0)
    while not _stop(rec, gnorm):
        L_try = L
        for bt in range(max_backtracks + 1):
            a = (1.0 + math.sqrt(1.0 + 2.0 * A * L_try)) / L_try
            y = (A * x + a * v) / (A + a)
            fy, gy = oracle.value_and_gradient(y)
            x_new = y - gy / L_try
            f_new = oracle.value(x_new)
            d = x_new - y
            if f_new <= fy + float(gy @ d) + 0.5 * L_try * float(d @ d):
                break
            L_try *= 2.0
        g = oracle.gradient(x_new)
        v = v - a * g
        A += a
        x, f = x_new, f_new
        L = L_try / 2.0
        gnorm = float(np.linalg.norm(g))
        rec.record(f, gnorm, StepKind.NESTEROV_LS, L_try, bt)
    return rec.finish(x=x)


BASELINES = {
    "cubic_newton": (run_cubic_newton, ("H",)),
    "acc_cubic": (run_acc_cubic, ("H",)),
    "reg_newton": (run_reg_newton, ("H",)),
    "adan": (run_adan, ("H0",)),
    "adan_plus": (run_adan_plus, ("H0",)),
    "gd": (run_gd, ("lr",)),
    "polyak": (run_polyak, ("f_star",)),
    "adgd": (run_adgd, ()),
    "nesterov_ls": (run_nesterov_ls, ()),
}


def run_baseline(method: str, oracle: Oracle, x0, params: dict, budgets: Optional[Budgets] = None) -> Trace:
    try:
        fn, required = BASELINES[method]
    except KeyError:
        raise ValueError(f"unknown baseline {method!r}; choose from {sorted(BASELINES)}") from None
    missing = [p for p in required if params.get(p) is None]
    if missing:
        raise ValueError(f"{method} needs parameter(s): {', '.join(missing)}")
    kwargs = {k: v for k, v in params.items() if v is not None}
    return fn(oracle, x0, budgets=budgets, **kwargs)
