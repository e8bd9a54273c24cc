"""Casual cubic methods: gradient steps certified by HVPs, second-order work only on demand."""

from __future__ import annotations

import math
from typing import Callable, Optional, Union

import numpy as np

from .certificate import (
    CertificateInputs,
    backtrack_H,
    grad_cubic_step,
    hat_H,
)
from .oracle import BacktrackOverflow, Budgets, Oracle, Recorder, StepKind, Trace
from .subproblem import crn_step, reg_newton_step

# CaCuN tests the gradient step with M = 3H/4 against the classical CRN decrease.
CACUN_STEP_FACTOR = 0.75
# AdaN descent test: f(x+) <= f(x) - 2/(3*64 sqrt(H)) |g|^{3/2}
ADAN_TEST_CONST = 2.0 / (3.0 * 64.0)


def _start(oracle, x0, budgets, method, params):
    rec = Recorder(oracle, budgets or Budgets(), method, params)
    x = np.array(x0, dtype=float)
    f, g = oracle.value_and_gradient(x)
    gnorm = float(np.linalg.norm(g))
    rec.record(f, gnorm, StepKind.INIT)
    return rec, x, f, g, gnorm


def _stop(rec: Recorder, gnorm: float) -> bool:
    if gnorm == 0.0:
        rec.trace.metadata["status"] = "converged"
        return True
    return rec.should_stop(gnorm)


def cacun_threshold(gnorm: float, H: float) -> float:
    """Decrease demanded by CaCuN's test: ``(2/3)^{3/2} |g|^{3/2} / sqrt(2H)``."""
    return (2.0 / 3.0) ** 1.5 / math.sqrt(2.0 * H) * gnorm**1.5


def adan_threshold(gnorm: float, H: float) -> float:
    return ADAN_TEST_CONST / math.sqrt(H) * gnorm**1.5


def run_cacun(oracle: Oracle, x0, H: float, budgets: Optional[Budgets] = None,
              certificate: bool = True) -> Trace:
    """Casual Cubic Newton.

    Each iteration first tries ``x - 2g / sqrt(3H|g|)``; when it achieves the
    classical cubic Newton decrease the Hessian is never touched, otherwise an
    exact CRN step with regularization ``H`` is taken. ``certificate=False``
    replaces the test by constant false (pure cubic Newton).
    """
    if not H > 0:
        raise ValueError("H must be positive")
    rec, x, f, g, gnorm = _start(oracle, x0, budgets, "cacun", {"H": H})
    while not _stop(rec, gnorm):
        passed = False
        if certificate:
            x_try = x - 2.0 * g / math.sqrt(3.0 * H * gnorm)
            f_try = oracle.value(x_try)
            passed = f_try <= f - cacun_threshold(gnorm, H)
        if passed:
            x, f = x_try, f_try
            g = oracle.gradient(x)
            kind, reg = StepKind.GRAD_CUBIC, CACUN_STEP_FACTOR * H
        else:
            x = crn_step(oracle, x, H, g=g).T
            f, g = oracle.value_and_gradient(x)
            kind, reg = StepKind.CRN, H
        gnorm = float(np.linalg.norm(g))
        rec.record(f, gnorm, kind, reg)
    return rec.finish(x=x)


def _psi_star(const: float, s: np.ndarray, x0: np.ndarray, N: float) -> float:
    # min_x const + <s, x> + (N/3)|x - x0|^3, attained at x0 - s / sqrt(N|s|)
    snorm = float(np.linalg.norm(s))
    return const + float(s @ x0) - (2.0 / 3.0) * snorm**1.5 / math.sqrt(N)


def estimate_minimizer(s: np.ndarray, x0: np.ndarray, N: float) -> np.ndarray:
    """``argmin_x <s, x> + (N/3)|x - x0|^3 = x0 - s / sqrt(N |s|)``."""
    snorm = float(np.linalg.norm(s))
    if snorm == 0.0:
        return np.array(x0, dtype=float)
    return x0 - s / math.sqrt(N * snorm)


def scaling_A(k: int) -> float:
    return k * (k + 1) * (k + 2) / 6.0


def weight_a(k: int) -> float:
    return (k + 1) * (k + 2) / 2.0


def mixing_point(k: int, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``y = (k x + 3 v) / (k + 3)``, i.e. weights ``A_k / A_{k+1}`` and ``a_k / A_{k+1}``."""
    return (k * x + 3.0 * v) / (k + 3.0)


def run_acc_cacun(oracle: Oracle, x0, H: float,
                  M_schedule: Union[None, float, Callable[[int], float]] = None,
                  budgets: Optional[Budgets] = None, certificate: bool = True) -> Trace:
    """Accelerated Casual Cubic Newton.

    The estimate function ``psi_k(x) = const + <s, x> + (N/3)|x - x0|^3`` with
    ``N = 12H`` is kept in closed form. Per iteration the trace metadata gets
    ``A_k``, ``A_k f(x^k)`` and ``psi_k*`` so the invariant
    ``A_k f(x^k) <= psi_k*`` can be audited afterwards.
    """
    if not H > 0:
        raise ValueError("H must be positive")
    if M_schedule is None:
        M_of = lambda k: H  # noqa: E731
    elif callable(M_schedule):
        M_of = M_schedule
    else:
        M_of = lambda k, _m=float(M_schedule): _m  # noqa: E731
    N = 12.0 * H
    method = "acc_cacun" if certificate else "acc_cubic"
    rec, x, f, g, gnorm = _start(oracle, x0, budgets, method, {"H": H, "N": N})
    x0 = x.copy()
    log = rec.trace.metadata.setdefault("estimate_log", {"k": [], "A": [], "A_f": [], "psi_star": []})
    if _stop(rec, gnorm):
        return rec.finish(x=x)

    def _M(k):
        M = float(M_of(k))
        if not 0 < M <= H:
            raise ValueError(f"M_k must lie in (0, H]; got M_{k} = {M}")
        return M

    # initial step from y0 = x0
    passed = False
    if certificate:
        M0 = _M(0)
        x_try = x - g / math.sqrt(M0 * gnorm)
        f_try = oracle.value(x_try)
        passed = f_try <= f - math.sqrt(2.0) / (3.0 * math.sqrt(M0)) * gnorm**1.5
    if passed:
        x, f = x_try, f_try
        g = oracle.gradient(x)
        kind, reg = StepKind.GRAD_CUBIC, M0
    else:
        x = crn_step(oracle, x, 2.0 * H, g=g).T
        f, g = oracle.value_and_gradient(x)
        kind, reg = StepKind.CRN, 2.0 * H
    gnorm = float(np.linalg.norm(g))
    rec.record(f, gnorm, kind, reg)

    A = 1.0
    s = np.zeros_like(x0)
    const = f

    def _log(k, A, f, psi):
        log["k"].append(k)
        log["A"].append(A)
        log["A_f"].append(A * f)
        log["psi_star"].append(psi)

    _log(1, A, f, _psi_star(const, s, x0, N))

    k = 1
    while not _stop(rec, gnorm):
        v = estimate_minimizer(s, x0, N)
        y = mixing_point(k, x, v)
        fy, gy = oracle.value_and_gradient(y)
        gy_norm = float(np.linalg.norm(gy))
        a = weight_a(k)
        passed = False
        if certificate and gy_norm > 0:
            Mk = _M(k)
            x_try = y - gy / math.sqrt(Mk * gy_norm)
            f_try = oracle.value(x_try)
            passed = f_try <= fy - gy_norm**1.5 / math.sqrt(3.0 * Mk)
        elif gy_norm == 0.0:
            # y is stationary: accept it, the linear model adds a flat piece
            x_try, f_try, passed, Mk = y, fy, True, _M(k)
        if passed:
            x, f = x_try, f_try
            g = oracle.gradient(x) if gy_norm > 0 else gy
            s = s + a * gy
            const += a * (fy - float(gy @ y))
            kind, reg = StepKind.GRAD_CUBIC, Mk
        else:
            x = crn_step(oracle, y, 2.0 * H, g=gy).T
            f, g = oracle.value_and_gradient(x)
            s = s + a * g
            const += a * (f - float(g @ x))
            kind, reg = StepKind.CRN, 2.0 * H
        A += a
        k += 1
        gnorm = float(np.linalg.norm(g))
        rec.record(f, gnorm, kind, reg)
        _log(k, A, f, _psi_star(const, s, x0, N))
    return rec.finish(x=x)


def _adan_step(oracle, x, f, g, gnorm, H, max_retries=60):
    """One AdaN iteration: regularized Newton with a growing ``H`` until the descent test holds."""
    B = oracle.hessian(x)
    for retries in range(max_retries + 1):
        lam = math.sqrt(H * gnorm)
        x_try = reg_newton_step(oracle, x, lam, g=g, B=B)
        f_try = oracle.value(x_try)
        if f_try <= f - adan_threshold(gnorm, H):
            return x_try, f_try, H, lam, retries
        H *= 4.0
    raise BacktrackOverflow(f"AdaN descent test failing after {max_retries} increases")


def run_cacuadan(oracle: Oracle, x0, H0: float, budgets: Optional[Budgets] = None) -> Trace:
    """Casual Cubic AdaN.

    Stage one takes certified gradient steps while they pass the AdaN descent
    test; at the first failure the method switches for good to AdaN, warm
    started with the calibrated ``H``.
    """
    if not H0 > 0:
        raise ValueError("H0 must be positive")
    rec, x, f, g, gnorm = _start(oracle, x0, budgets, "cacuadan", {"H0": H0})
    H = float(H0)
    switched = False
    while not _stop(rec, gnorm):
        backtracks = 0
        if not switched:
            ci = CertificateInputs.at(oracle, x, f, g)
            bt = backtrack_H(oracle, x, ci, H / 2.0)
            H, backtracks = bt.H, bt.backtracks
            if bt.f_trial >= f - adan_threshold(gnorm, H):
                switched = True
                rec.trace.metadata["switch_iteration"] = rec.k - 1
            else:
                x, f = bt.x_trial, bt.f_trial
                g = oracle.gradient(x)
                kind, reg = StepKind.GRAD_CUBIC, H
        if switched:
            x, f, H_acc, lam, retries = _adan_step(oracle, x, f, g, gnorm, H)
            backtracks += retries
            H = H_acc / 2.0
            g = oracle.gradient(x)
            kind, reg = StepKind.REG_NEWTON, lam
        gnorm = float(np.linalg.norm(g))
        rec.record(f, gnorm, kind, reg, backtracks)
    return rec.finish(x=x)


def run_cacuadan_plus(oracle: Oracle, x0, H0: float, budgets: Optional[Budgets] = None) -> Trace:
    """Casual Cubic AdaN+: HVP backtracking calibrates ``H``, then one regularized Newton step."""
    if not H0 > 0:
        raise ValueError("H0 must be positive")
    rec, x, f, g, gnorm = _start(oracle, x0, budgets, "cacuadan_plus", {"H0": H0})
    H = float(H0)
    while not _stop(rec, gnorm):
        ci = CertificateInputs.at(oracle, x, f, g)
        bt = backtrack_H(oracle, x, ci, H / 8.0)
        H = bt.H
        lam = math.sqrt(H * gnorm)
        x = reg_newton_step(oracle, x, lam, g=g)
        f, g = oracle.value_and_gradient(x)
        gnorm = float(np.linalg.norm(g))
        rec.record(f, gnorm, StepKind.REG_NEWTON, lam, bt.backtracks)
    return rec.finish(x=x)


def run_cacuadgd(oracle: Oracle, x0, H_init: float = 1.0, alpha: float = 0.7,
                 budgets: Optional[Budgets] = None) -> Trace:
    """Casual Cubic Adaptive Gradient Descent.

    Per iteration one HVP gives the curvature bound ``H_hat``; ``H`` is shrunk
    by 16 and doubled while the per-condition test fails and ``H`` still
    exceeds ``H_hat``. The step uses ``M = max(H, H_hat)``, so near a solution
    it behaves like gradient descent with step ``4 alpha / (3 L_k)``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not H_init > 0:
        raise ValueError("H_init must be positive")
    rec, x, f, g, gnorm = _start(oracle, x0, budgets, "cacuadgd",
                                 {"H_init": H_init, "alpha": alpha})
    H = float(H_init)
    hat_log = rec.trace.metadata.setdefault("hat_H", [])
    while not _stop(rec, gnorm):
        ci = CertificateInputs.at(oracle, x, f, g, alpha)
        Hh = hat_H(ci)
        bt = backtrack_H(oracle, x, ci, H / 16.0, stop_when=lambda h: Hh >= h)
        M = max(bt.H, Hh)
        # H follows the regularization actually applied; without this the
        # /16 shrink underflows while the curvature guard keeps firing
        H = bt.H if bt.passed else M
        if bt.passed:
            x, f = bt.x_trial, bt.f_trial
        else:
            x = grad_cubic_step(x, g, M)
            f = oracle.value(x)
        g = oracle.gradient(x)
        gnorm = float(np.linalg.norm(g))
        hat_log.append(Hh)
        rec.record(f, gnorm, StepKind.GRAD_CUBIC, M, bt.backtracks)
    return rec.finish(x=x)
