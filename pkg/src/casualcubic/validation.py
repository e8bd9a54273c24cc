"""Numeric cross-checks of the oracles, the curvature assumptions and the auxiliary inequalities.

Validators only use the public oracle interface, so they check the problem
formulas independently. Every validator has a falsifiability control: the
same check with a perturbed constant must fail.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.special import expit

from .oracle import Oracle
from .problems import (
    CubicNormProblem,
    LogisticProblem,
    LogSumExpProblem,
    QuadraticProblem,
    SeparableCubicProblem,
)
from .subproblem import crn_step

INEQ_SLACK = 1e-10
EQ_RTOL = 1e-12
GRAD_RTOL = 1e-6
HVP_RTOL = 1e-5
# floor on the denominator of a relative error
FD_ABS_FLOOR = 1e-300


@dataclass
class CheckReport:
    name: str
    trials: int
    worst_violation: float
    passed: bool
    details: str = ""
    tolerance: float = 0.0

    CSV_COLUMNS = ("name", "trials", "worst_violation", "tolerance", "pass", "details")

    def row(self) -> list:
        return [self.name, self.trials, f"{self.worst_violation:.6e}", f"{self.tolerance:.1e}",
                str(self.passed).lower(), self.details]


def _report(name, violations, tol, details="", expect_fail=False) -> CheckReport:
    v = np.asarray(list(violations), dtype=float)
    worst = float(np.max(v)) if v.size else -math.inf
    if np.isnan(v).any():
        worst = math.nan
    ok = bool(worst <= tol)
    if expect_fail:
        # a control passes when the perturbed check is caught
        return CheckReport(name, int(v.size), worst, not ok, details or "control: must fail", tol)
    return CheckReport(name, int(v.size), worst, ok, details, tol)


def reports_to_csv(reports: Iterable[CheckReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CheckReport.CSV_COLUMNS)
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue()


def sample_points(d: int, n: int, rng, r_min: float = 1e-2, r_max: float = 1e2) -> np.ndarray:
    """``x = r u`` with ``u`` uniform on the sphere and log-uniform ``r``."""
    u = rng.standard_normal((n, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = np.exp(rng.uniform(math.log(r_min), math.log(r_max), size=n))
    return u * r[:, None]


# -- finite differences ------------------------------------------------------

def _rel_err(approx, exact, noise: float = 0.0, rtol: float = 1.0) -> float:
    """Relative error; differences within the rounding ``noise`` of the quotient are not penalized."""
    denom = max(float(np.linalg.norm(exact)), noise / rtol, FD_ABS_FLOOR)
    return float(np.linalg.norm(approx - exact)) / denom


def _rounding_noise(scale: float, h: float) -> float:
    # cancellation error of a central difference of quantities of size `scale`
    return 16.0 * np.finfo(float).eps * scale / (2.0 * h)


def _default_h_grad(x):
    return 1e-5 * (1.0 + np.linalg.norm(x))


def _default_h_hvp(x, v):
    return 1e-5 * (1.0 + np.linalg.norm(x)) / (1.0 + np.linalg.norm(v))


def fd_gradient(oracle: Oracle, x, h: Optional[float] = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    h = _default_h_grad(x) if h is None else h
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (oracle.untracked_value(x + e) - oracle.untracked_value(x - e)) / (2.0 * h)
    return out


def fd_hvp(oracle: Oracle, x, v, h: Optional[float] = None) -> np.ndarray:
    x, v = np.asarray(x, dtype=float), np.asarray(v, dtype=float)
    h = _default_h_hvp(x, v) if h is None else h
    return (oracle.untracked_gradient(x + h * v) - oracle.untracked_gradient(x - h * v)) / (2.0 * h)


def fd_gradient_check(oracle: Oracle, points: Sequence, h: Optional[float] = None,
                      name: str = "fd_gradient") -> CheckReport:
    if h is not None and not h > 0:
        raise ValueError("h must be positive")
    errs = []
    for x in points:
        x = np.asarray(x, dtype=float)
        hx = _default_h_grad(x) if h is None else h
        noise = math.sqrt(x.size) * _rounding_noise(abs(oracle.untracked_value(x)), hx)
        errs.append(_rel_err(fd_gradient(oracle, x, hx), oracle.gradient(x), noise, GRAD_RTOL))
    return _report(f"{name}:{oracle.name}", errs, GRAD_RTOL)


def fd_hvp_check(oracle: Oracle, points: Sequence, seed=0, name: str = "fd_hvp") -> CheckReport:
    rng = np.random.default_rng(seed)
    errs = []
    for x in points:
        x = np.asarray(x, dtype=float)
        v = rng.standard_normal(len(x))
        h = _default_h_hvp(x, v)
        noise = _rounding_noise(float(np.linalg.norm(oracle.untracked_gradient(x))), h)
        errs.append(_rel_err(fd_hvp(oracle, x, v, h), oracle.hvp(x, v), noise, HVP_RTOL))
    return _report(f"{name}:{oracle.name}", errs, HVP_RTOL)


def hessian_hvp_check(oracle: Oracle, points: Sequence, seed=0) -> CheckReport:
    """``hessian(x) v`` against ``hvp(x, v)``, absolute 1e-10 after scaling by ``1 + |H|``."""
    rng = np.random.default_rng(seed)
    errs = []
    for x in points:
        x = np.asarray(x, float)
        v = rng.standard_normal(len(x))
        B = oracle.hessian(x)
        scale = 1.0 + np.linalg.norm(B, 2) * np.linalg.norm(v)
        errs.append(float(np.linalg.norm(B @ v - oracle.hvp(x, v))) / scale)
    return _report(f"hessian_vs_hvp:{oracle.name}", errs, 1e-10)


# -- curvature assumptions ---------------------------------------------------

def _curvature(oracle: Oracle, x):
    g = oracle.untracked_gradient(x)
    gn = float(np.linalg.norm(g))
    if gn == 0.0:
        return None, 0.0
    return float(g @ oracle.hvp(x, g)) / gn**2, gn


def check_vanishing_curvature(problem: Oracle, C: float, n_points: int = 10_000, seed=0,
                              equality: bool = False, expect_fail: bool = False,
                              name: Optional[str] = None) -> CheckReport:
    """Directional curvature ``<g, H g>/|g|^2 <= sqrt(C |g|)`` at sampled points.

    With ``equality=True`` the relative gap to the bound must also be below 1e-12.
    """
    rng = np.random.default_rng(seed)
    worst_ineq, worst_eq, count = -math.inf, 0.0, 0
    for x in sample_points(problem.dim(), n_points, rng):
        curv, gn = _curvature(problem, x)
        if curv is None:
            continue
        bound = math.sqrt(C * gn)
        worst_ineq = max(worst_ineq, curv - bound)
        if equality:
            worst_eq = max(worst_eq, abs(curv - bound) / bound)
        count += 1
    name = name or f"vanishing_curvature:{problem.name}"
    if equality:
        # fold both criteria into one violation measured against the equality tolerance
        viol = max(worst_eq, worst_ineq / INEQ_SLACK * EQ_RTOL)
        rep = _report(name, [viol], EQ_RTOL, f"C={C:.6g}, equality", expect_fail)
    else:
        rep = _report(name, [worst_ineq], INEQ_SLACK, f"C={C:.6g}", expect_fail)
    rep.trials = count
    return rep


def check_directional_L0L1(problem: Oracle, L0: float, L1: float, n_points: int = 10_000,
                           seed=0, f_star: float = 0.0, expect_fail: bool = False,
                           name: Optional[str] = None) -> CheckReport:
    """``<g, H g>/|g|^2 <= L0 + L1 sqrt(f(x) - f_star)`` at sampled points."""
    rng = np.random.default_rng(seed)
    viol, count = [], 0
    for x in sample_points(problem.dim(), n_points, rng):
        curv, _ = _curvature(problem, x)
        if curv is None:
            continue
        gap = max(problem.untracked_value(x) - f_star, 0.0)
        viol.append(curv - (L0 + L1 * math.sqrt(gap)))
        count += 1
    rep = _report(name or f"directional_L0L1:{problem.name}", viol, INEQ_SLACK,
                  f"L0={L0:.6g}, L1={L1:.6g}", expect_fail)
    rep.trials = count
    return rep


def logistic_L1_single(a) -> float:
    return 2.0 / (3.0 * math.sqrt(3.0)) * float(np.dot(a, a))


def logistic_L1_empirical(A) -> float:
    A = np.asarray(A.toarray() if hasattr(A, "toarray") else A, dtype=float)
    return 2.0 / (3.0 * math.sqrt(3.0)) * math.sqrt(float(np.mean(np.sum(A * A, axis=1) ** 2)))


def logistic_C_single(a) -> float:
    return 4.0 / 27.0 * float(np.linalg.norm(a)) ** 3


# -- auxiliary inequalities --------------------------------------------------

def _softplus_neg(s):
    # log(1 + e^{-s}) without overflow
    return np.logaddexp(0.0, -s)


def scalar_logistic_gap(s, const: float = 2.0 / (3.0 * math.sqrt(3.0))):
    """``sigma(s) sigma(-s) - const sqrt(log(1 + e^{-s}))``; nonpositive when the bound holds."""
    s = np.asarray(s, dtype=float)
    return expit(s) * expit(-s) - const * np.sqrt(_softplus_neg(s))


def check_auxiliary_inequalities(n_trials: int = 100_000, seed=0, d: int = 5,
                                 perturb: float = 1.0) -> list[CheckReport]:
    """Three-halves split, the weighted AM-GM bound and the scalar logistic bound.

    ``perturb`` scales each right-hand-side constant; values below 1 are the
    falsifiability controls.
    """
    rng = np.random.default_rng(seed)
    expect_fail = perturb != 1.0
    tag = "" if not expect_fail else f"[x{perturb:g}]"
    tol = EQ_RTOL

    a = rng.standard_normal((n_trials, d)) * np.exp(rng.uniform(-5, 5, (n_trials, 1)))
    b = rng.standard_normal((n_trials, d)) * np.exp(rng.uniform(-5, 5, (n_trials, 1)))
    # include the a = b and b = 0 corners
    b[: n_trials // 100] = a[: n_trials // 100]
    b[n_trials // 100: n_trials // 50] = 0.0
    na = np.linalg.norm(a, axis=1) ** 1.5
    rhs = perturb * math.sqrt(2.0) * (np.linalg.norm(a - b, axis=1) ** 1.5 + np.linalg.norm(b, axis=1) ** 1.5)
    split = _report(f"three_halves_split{tag}", (na - rhs) / np.maximum(1.0, rhs), tol,
                    expect_fail=expect_fail)

    bb, xi, beta = (np.exp(rng.uniform(-10, 10, n_trials)) for _ in range(3))
    # points where the bound is tight: beta = b sqrt(xi) / 2
    beta[: n_trials // 10] = bb[: n_trials // 10] * np.sqrt(xi[: n_trials // 10]) / 2.0
    lhs = bb / np.sqrt(xi)
    rhs = perturb * (beta / xi + bb**2 / (4.0 * beta))
    amgm = _report(f"weighted_amgm{tag}", (lhs - rhs) / np.maximum(1.0, rhs), tol,
                   expect_fail=expect_fail)

    grid = np.round(np.arange(-50_000, 50_001) * 1e-3, 12)
    s = np.concatenate([grid, rng.uniform(-60, 60, n_trials)])
    gap = scalar_logistic_gap(s, perturb * 2.0 / (3.0 * math.sqrt(3.0)))
    logi = _report(f"scalar_logistic_bound{tag}", gap, tol, expect_fail=expect_fail)
    return [split, amgm, logi]


# -- reference optimum ---------------------------------------------------------

class FstarWarning(RuntimeWarning):
    pass


def is_linearly_separable(A, labels01) -> bool:
    """Feasibility of ``y_i a_i' w >= 1`` as a linear program."""
    A = np.asarray(A.toarray() if hasattr(A, "toarray") else A, dtype=float)
    y = np.where(np.asarray(labels01) > 0.5, 1.0, -1.0)
    res = linprog(np.zeros(A.shape[1]), A_ub=-(y[:, None] * A), b_ub=-np.ones(A.shape[0]),
                  bounds=[(None, None)] * A.shape[1], method="highs")
    return res.status == 0


def estimate_fstar(oracle: Oracle, tol: float = 1e-10, x0=None, max_iters: int = 500,
                   M0: float = 1.0) -> float:
    """High-accuracy ``f*`` by cubic Newton with a backtracked regularization.

    Unregularized logistic loss on separable data has infimum 0 and no
    minimizer, so it returns 0 without iterating.
    """
    if not tol >= 1e-12:
        raise ValueError("tol must be at least 1e-12")
    if isinstance(oracle, LogisticProblem) and oracle.reg == 0.0:
        if is_linearly_separable(oracle.A, oracle.b):
            return 0.0
    x = np.zeros(oracle.dim()) if x0 is None else np.array(x0, dtype=float)
    f, g = oracle.untracked_value(x), oracle.untracked_gradient(x)
    M = float(M0)
    for _ in range(max_iters):
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            return f
        B = oracle._hessian(x)
        for _ in range(200):
            T = crn_step(_Uncounted(oracle), x, M, g=g, B=B).T
            fT = oracle.untracked_value(T)
            if fT <= f:
                break
            M *= 2.0
        if not fT <= f:
            break
        if fT == f and np.array_equal(T, x):
            break
        x, f = T, fT
        g = oracle.untracked_gradient(x)
        M = max(M / 4.0, 1e-12)
    warnings.warn(f"estimate_fstar stopped before |g| <= {tol:g}; returning best value",
                  FstarWarning, stacklevel=2)
    return f


class _Uncounted(Oracle):
    """Counter-free view so reference computations never touch the caller's counters."""

    def __init__(self, base: Oracle):
        super().__init__()
        self.base = base
        self.name = base.name

    def dim(self):
        return self.base.dim()

    def _value(self, x):
        return self.base._value(x)

    def _gradient(self, x):
        return self.base._gradient(x)

    def _hvp(self, x, v):
        return self.base._hvp(x, v)

    def _hessian(self, x):
        return self.base._hessian(x)


# -- the full suite ----------------------------------------------------------

def default_families(seed: int = 0) -> dict[str, Callable[[int], Oracle]]:
    """Problem factories keyed by family; each takes a seed and returns an oracle with d <= 20."""
    from .data import gen_logsumexp, gen_random_logistic

    def logistic(s):
        ds = gen_random_logistic(40, 10, seed=s)
        return LogisticProblem(ds.A, ds.labels, reg=1e-3)

    def logsumexp(s):
        return gen_logsumexp(30, 10, 0.25, seed=s)

    def cubic_norm(s):
        return CubicNormProblem(coeff=1.0 + np.random.default_rng(s).random(), d=8)

    def separable_cubic(s):
        return SeparableCubicProblem(0.5 + np.random.default_rng(s).random(8))

    def quadratic(s):
        rng = np.random.default_rng(s)
        G = rng.standard_normal((10, 10))
        return QuadraticProblem(G @ G.T / 10.0, rng.standard_normal(10))

    return {"logistic": logistic, "logsumexp": logsumexp, "cubic_norm": cubic_norm,
            "separable_cubic": separable_cubic, "quadratic": quadratic}


def oracle_checks(families: Optional[dict] = None, seeds: Iterable[int] = range(10),
                  n_points: int = 5) -> list[CheckReport]:
    """Finite-difference gradient / HVP and Hessian-vs-HVP checks per family, pooled over seeds."""
    families = families or default_families()
    out = []
    for fam, make in families.items():
        grad_v, hvp_v, hess_v = [], [], []
        for s in seeds:
            oracle = make(s)
            rng = np.random.default_rng(1000 + s)
            # points with |x| in [0.1, 10]; the cubic families are not C^3 at the origin
            pts = sample_points(oracle.dim(), n_points, rng, 1e-1, 1e1)
            grad_v.append(fd_gradient_check(oracle, pts).worst_violation)
            hvp_v.append(fd_hvp_check(oracle, pts, seed=s).worst_violation)
            if oracle.has_hessian:
                hess_v.append(hessian_hvp_check(oracle, pts, seed=s).worst_violation)
        out.append(_report(f"fd_gradient:{fam}", grad_v, GRAD_RTOL, "relative"))
        out.append(_report(f"fd_hvp:{fam}", hvp_v, HVP_RTOL, "relative"))
        if hess_v:
            out.append(_report(f"hessian_vs_hvp:{fam}", hess_v, 1e-10, "absolute, scaled"))
    return out


def example_constant_checks(n_points: int = 10_000, seed: int = 0) -> list[CheckReport]:
    from .data import gen_separable_logistic

    out = []
    cube = CubicNormProblem(coeff=1.0, d=3)
    out.append(check_vanishing_curvature(cube, 4.0, n_points, seed, equality=True,
                                         name="vanishing_curvature:cubic_norm"))
    out.append(check_vanishing_curvature(cube, 2.0, n_points, seed, expect_fail=True,
                                         name="control:vanishing_curvature:cubic_norm[C/2]"))
    sep = SeparableCubicProblem(np.array([1.0, 2.0, 0.5]))
    out.append(check_vanishing_curvature(sep, 4.0 * sep.coeff_max, n_points, seed,
                                         name="vanishing_curvature:separable_cubic"))
    out.append(check_vanishing_curvature(sep, 2.0 * sep.coeff_max, n_points, seed, expect_fail=True,
                                         name="control:vanishing_curvature:separable_cubic[C/2]"))

    a = np.array([1.0, 0.0, 0.0])
    single = LogisticProblem(a[None, :], np.array([1.0]), reg=0.0)
    C = logistic_C_single(a)
    out.append(check_vanishing_curvature(single, C, n_points, seed,
                                         name="vanishing_curvature:logistic_single"))
    out.append(check_vanishing_curvature(single, C / 2, n_points, seed, expect_fail=True,
                                         name="control:vanishing_curvature:logistic_single[C/2]"))

    a2 = np.array([2.0, 0.0])
    single2 = LogisticProblem(a2[None, :], np.array([1.0]), reg=0.0)
    L1 = logistic_L1_single(a2)
    out.append(check_directional_L0L1(single2, 0.0, L1, n_points, seed,
                                      name="directional_L0L1:logistic_single"))
    out.append(check_directional_L0L1(single2, 0.0, L1 / 2, n_points, seed, expect_fail=True,
                                      name="control:directional_L0L1:logistic_single[L1/2]"))

    ds = gen_separable_logistic(*SEPARABLE_L0L1_SHAPE, margin=0.1, seed=seed)
    emp = LogisticProblem(ds.A, ds.labels, reg=0.0)
    L1e = logistic_L1_empirical(ds.A)
    out.append(check_directional_L0L1(emp, 0.0, L1e, n_points, seed,
                                      name="directional_L0L1:logistic_separable"))
    out.append(check_directional_L0L1(emp, 0.0, L1e / 2, n_points, seed, expect_fail=True,
                                      name="control:directional_L0L1:logistic_separable[L1/2]"))
    return out


# (n, d) of the separable dataset for the empirical L1 check
SEPARABLE_L0L1_SHAPE = (2, 2)


def run_all_checks(seed: int = 0, families: Optional[dict] = None,
                   n_points: int = 10_000, n_trials: int = 100_000) -> list[CheckReport]:
    reports = oracle_checks(families)
    reports += example_constant_checks(n_points, seed)
    reports += check_auxiliary_inequalities(n_trials, seed)
    reports += check_auxiliary_inequalities(n_trials // 10, seed, perturb=0.5)
    return reports
