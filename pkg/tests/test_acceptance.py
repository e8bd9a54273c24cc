"""Acceptance criteria, each run at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line (also echoed in the terminal
summary). Criterion 9(b) is known to be unattainable for the method as
defined; it is run faithfully and marked as an expected failure.
"""

import csv
import math
import time

import numpy as np
import pytest

from casualcubic import Budgets, CubicNormProblem, LogisticProblem, QuadraticProblem, StepKind
from casualcubic.baselines import run_cubic_newton
from casualcubic.certificate import decrease_threshold
from casualcubic.cli import main
from casualcubic.data import estimate_H_logistic, gen_logsumexp, gen_random_logistic, gen_separable_logistic
from casualcubic.deterministic import (
    adan_threshold,
    cacun_threshold,
    run_acc_cacun,
    run_cacuadan,
    run_cacuadgd,
    run_cacun,
)
from casualcubic.stochastic import NoisyOracle, run_cacusgd, run_sgd
from casualcubic.subproblem import crn_step, cubic_model
from casualcubic.validation import (
    check_auxiliary_inequalities,
    example_constant_checks,
    oracle_checks,
)

from conftest import ACCEPTANCE_LINES, random_psd


def _verdict(label, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


# -- 1 ------------------------------------------------------------------------

def test_c01_oracle_correctness():
    t0 = time.perf_counter()
    reports = oracle_checks(seeds=range(10), n_points=5)
    elapsed = time.perf_counter() - t0
    fd = [r for r in reports if r.name.startswith("fd_")]
    families = {r.name.split(":")[1] for r in fd}
    worst_g = max(r.worst_violation for r in fd if r.name.startswith("fd_gradient"))
    worst_h = max(r.worst_violation for r in fd if r.name.startswith("fd_hvp"))
    ok = len(families) == 5 and all(r.passed for r in fd) and worst_g <= 1e-6 and worst_h <= 1e-5 \
        and elapsed < 5.0
    assert _verdict("1 oracle correctness", ok,
                    f"5 families x 10 seeds, worst grad rel {worst_g:.1e} (<=1e-6), "
                    f"worst hvp rel {worst_h:.1e} (<=1e-5), {elapsed:.2f}s (<5s)")


# -- 2 ------------------------------------------------------------------------

def _grid_argmin(g, B, M, half):
    center = np.zeros(2)
    for _ in range(3):
        u = np.linspace(center[0] - half, center[0] + half, 400)
        v = np.linspace(center[1] - half, center[1] + half, 400)
        U, V = np.meshgrid(u, v, indexing="ij")
        S = np.stack([U, V], axis=-1)
        vals = S @ g + 0.5 * np.einsum("...i,ij,...j->...", S, B, S) \
            + M / 3.0 * np.linalg.norm(S, axis=-1) ** 3
        i, j = np.unravel_index(np.argmin(vals), vals.shape)
        center = np.array([u[i], v[j]])
        half = 4 * half / 399
    return center


def test_c02_crn_subproblem():
    t0 = time.perf_counter()
    worst_res = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 31))
        Q = random_psd(rng, d, scale=10 ** rng.uniform(-3, 3))
        o = QuadraticProblem(Q, rng.standard_normal(d))
        x = rng.standard_normal(d)
        M = 10 ** rng.uniform(-3, 3)
        s = crn_step(o, x, M).T - x
        g = o.gradient(x)
        res = np.linalg.norm(g + Q @ s + M * np.linalg.norm(s) * s) / (1 + np.linalg.norm(g))
        worst_res = max(worst_res, res)
    worst_grid = 0.0
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        B, g, M = random_psd(rng, 2), rng.standard_normal(2), 10 ** rng.uniform(-1, 1)
        T = crn_step(QuadraticProblem(B, -g), np.zeros(2), M).T
        s_grid = _grid_argmin(g, B, M, 2 * math.sqrt(np.linalg.norm(g) / M) + 1e-3)
        worst_grid = max(worst_grid, float(np.linalg.norm(T - s_grid)))
        assert cubic_model(g, B, M, T) <= cubic_model(g, B, M, s_grid) + 1e-12
    elapsed = time.perf_counter() - t0
    ok = worst_res <= 1e-8 and worst_grid <= 1e-3 and elapsed < 10.0
    assert _verdict("2 CRN subproblem", ok,
                    f"worst scaled residual {worst_res:.1e} (<=1e-8) on 50 quadratics, "
                    f"grid distance {worst_grid:.1e} (<=1e-3), {elapsed:.2f}s (<10s)")


# -- 3 ------------------------------------------------------------------------

def _soundness_problems():
    ds = gen_random_logistic(500, 50, seed=0)
    logistic = LogisticProblem(ds.A, ds.labels, reg=1e-4)
    H_log = estimate_H_logistic(ds)
    lse = gen_logsumexp(100, 40, 0.25, seed=0)
    # H = 100 mixes gradient and CRN steps here; much smaller H never certifies a step
    return [("logistic", logistic, H_log), ("logsumexp", lse, 100.0)]


def _audit_cacun(tr, H):
    f, gn = tr.f_values, tr.column("grad_norm")
    bad = n = 0
    for k, r in enumerate(tr.records[1:]):
        if r.step_kind == StepKind.GRAD_CUBIC:
            n += 1
            bad += not (f[k + 1] <= f[k] - cacun_threshold(gn[k], H))
            # CaCuN's threshold equals the alpha = 1/2 condition at M = 3H/4
            bad += not (f[k + 1] <= f[k] - decrease_threshold(gn[k], r.reg_used, 0.5)
                        + 1e-12 * abs(f[k]))
    return n, bad


def _audit_cacuadan(tr):
    f, gn = tr.f_values, tr.column("grad_norm")
    bad = n = 0
    for k, r in enumerate(tr.records[1:]):
        if r.step_kind == StepKind.GRAD_CUBIC:
            n += 1
            bad += not (f[k + 1] < f[k] - adan_threshold(gn[k], r.reg_used))
    return n, bad


def _audit_cacuadgd(tr, alpha):
    # a step was tested exactly when backtracking passed, i.e. M = H > H_hat
    f, gn, hat = tr.f_values, tr.column("grad_norm"), tr.metadata["hat_H"]
    bad = n = 0
    for k, r in enumerate(tr.records[1:]):
        if r.reg_used > hat[k]:
            n += 1
            bad += not (f[k + 1] <= f[k] - decrease_threshold(gn[k], r.reg_used, alpha)
                        + 1e-12 * abs(f[k]))
    return n, bad


def test_c03_certificate_soundness():
    details, total_bad = [], 0
    for name, p, H in _soundness_problems():
        x0 = np.zeros(p.dim())
        b = Budgets(max_iters=300, grad_tol=1e-9)
        n1, b1 = _audit_cacun(run_cacun(p, x0, H, b), H)
        n2, b2 = _audit_cacuadgd(run_cacuadgd(p, x0, 1.0, 0.7, b), 0.7)
        n3, b3 = _audit_cacuadan(run_cacuadan(p, x0, H, b))
        total_bad += b1 + b2 + b3
        details.append(f"{name}: CaCuN {n1}, CaCuAdGD {n2}, CaCuAdaN {n3} tested steps")
    assert _verdict("3 certificate soundness", total_bad == 0,
                    f"{total_bad} violations; " + "; ".join(details))


# -- 4 ------------------------------------------------------------------------

def test_c04_skip_the_hessian():
    ds = gen_separable_logistic(500, 50, margin=0.1, seed=0)
    H = estimate_H_logistic(ds)
    K = 100
    a = run_cacun(LogisticProblem.from_dataset(ds, 0.0), np.zeros(ds.d), H,
                  Budgets(max_iters=K, grad_tol=None))
    b = run_cubic_newton(LogisticProblem.from_dataset(ds, 0.0), np.zeros(ds.d), H,
                         Budgets(max_iters=K, grad_tol=None))
    fac = a.column("factorizations")
    kinds = [r.step_kind for r in a.records[1:]]
    grad_steps = [k for k, s in enumerate(kinds) if s == StepKind.GRAD_CUBIC]
    frac = len(grad_steps) / len(kinds)
    leaked = sum(fac[k + 1] != fac[k] for k in grad_steps)
    gap_a, gap_b = a.f_values[-1], b.f_values[-1]  # f* = 0 on separable data
    ok = frac >= 0.30 and leaked == 0 and gap_a <= 2 * gap_b and len(a) == len(b)
    assert _verdict("4 skip-the-Hessian", ok,
                    f"GradCubic fraction {frac:.0%} (>=30%), {leaked} factorizations on those steps, "
                    f"gap {gap_a:.3e} vs CubicNewton {gap_b:.3e} (<=2x) at k={K}")


# -- 5 ------------------------------------------------------------------------

def test_c05_acc_cacun_invariant_and_bound():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    d = 20
    Q = np.diag(np.logspace(-3, 0, d))
    p = QuadraticProblem(Q)  # minimizer 0, f* = 0
    x0 = rng.standard_normal(d) * 5
    worst_inv = worst_bound = -math.inf
    for H in (1e-2, 1.0, 1e2):
        tr = run_acc_cacun(p, x0, H, budgets=Budgets(max_iters=300, grad_tol=1e-12))
        log = tr.metadata["estimate_log"]
        for A_f, psi in zip(log["A_f"], log["psi_star"]):
            worst_inv = max(worst_inv, A_f - psi - 1e-9)
        R3 = np.linalg.norm(x0) ** 3
        for r in tr.records[1:]:
            k = r.k
            worst_bound = max(worst_bound, r.f - 14 * 2 * H * R3 / (k * (k + 1) * (k + 2)))
    elapsed = time.perf_counter() - t0
    ok = worst_inv <= 0 and worst_bound <= 0 and elapsed < 10.0
    assert _verdict("5 AccCaCuN invariant and bound", ok,
                    f"max A_k f_k - psi_k* - 1e-9 = {worst_inv:.2e} (<=0), "
                    f"max f_k - bound = {worst_bound:.2e} (<=0), H in {{1e-2, 1, 1e2}}, {elapsed:.2f}s")


# -- 6 ------------------------------------------------------------------------

def test_c06_local_rate():
    ds = gen_separable_logistic(500, 50, margin=0.1, seed=0)
    p = LogisticProblem.from_dataset(ds, 0.0)
    tr = run_cacuadgd(p, np.zeros(ds.d), 1.0, 0.7, Budgets(max_iters=1000, grad_tol=None))
    k = np.arange(len(tr))
    gap = tr.f_values  # f* = 0
    sel = (k >= 10) & (k <= 1000) & (gap > 0)
    slope = float(np.polyfit(np.log(k[sel]), np.log(gap[sel]), 1)[0])
    assert _verdict("6 local O(k^-2) regime", slope <= -1.5,
                    f"log-log slope {slope:.3f} (<=-1.5) over k in [10, {k[sel].max()}]")


# -- 7 ------------------------------------------------------------------------

def test_c07_example_constants():
    t0 = time.perf_counter()
    reports = example_constant_checks(n_points=10_000, seed=0)
    elapsed = time.perf_counter() - t0
    controls = [r for r in reports if r.name.startswith("control:")]
    ok = all(r.passed for r in reports) and len(controls) >= 5 and elapsed < 10.0
    failed = [r.name for r in reports if not r.passed]
    assert _verdict("7 example constants", ok,
                    f"{len(reports) - len(controls)} checks and {len(controls)} failing controls as "
                    f"required, {elapsed:.2f}s (<10s)" + (f"; failed {failed}" if failed else ""))


# -- 8 ------------------------------------------------------------------------

def test_c08_auxiliary_inequalities():
    reports = check_auxiliary_inequalities(n_trials=100_000, seed=0)
    ok = all(r.passed for r in reports)
    worst = ", ".join(f"{r.name} {r.worst_violation:.1e}" for r in reports)
    assert _verdict("8 auxiliary inequalities", ok, f"1e5 trials + s-grid, worst slack {worst}")


# -- 9 ------------------------------------------------------------------------

N_SEEDS, D, ITERS, WINDOW = 5, 20, 2000, 400


def _noisy_runs(method, **kw):
    curves = []
    for s in range(N_SEEDS):
        oracle = NoisyOracle(QuadraticProblem.identity(D), 1.0, seed=100 + s)
        x0 = np.full(D, 10.0 / math.sqrt(D))
        tr = method(oracle, x0, budgets=Budgets(max_iters=ITERS, grad_tol=None), seed=s, **kw)
        curves.append(tr.f_values)
    return np.median(np.array(curves), axis=0)


def _floor(curve):
    return float(np.median(curve[-WINDOW:]))


def _steps_to(curve, level):
    hit = np.flatnonzero(curve <= level)
    return int(hit[0]) if hit.size else math.inf


@pytest.fixture(scope="module")
def noisy_curves():
    return {"sgd1": _noisy_runs(run_sgd, L_hat=1.0),
            "sgd10": _noisy_runs(run_sgd, L_hat=10.0),
            "cacusgd": _noisy_runs(run_cacusgd, L_hat=10.0, H_hat=100.0)}


def test_c09a_sgd_floor_scaling(noisy_curves):
    f1, f10 = _floor(noisy_curves["sgd1"]), _floor(noisy_curves["sgd10"])
    ratio = f1 / f10
    assert _verdict("9(a) SGD floor scaling", ratio >= 3.0,
                    f"floor L=1 {f1:.3e}, L=10 {f10:.3e}, ratio {ratio:.1f} (>=3)")


@pytest.mark.xfail(strict=True, reason="cubic step g/sqrt(H|g|) is shorter than g/L whenever "
                                       "|g| >= H/L^2 = 1, which noise keeps true; see ledger")
def test_c09b_cacusgd_reaches_floor_faster(noisy_curves):
    sgd, cac = noisy_curves["sgd10"], noisy_curves["cacusgd"]
    t_sgd = _steps_to(sgd, 2 * _floor(sgd))
    t_cac = _steps_to(cac, 2 * _floor(cac))
    assert _verdict("9(b) CaCuSGD time to floor", t_cac <= t_sgd / 2,
                    f"CaCuSGD {t_cac} steps vs SGD(L=10) {t_sgd} steps (needs <= {t_sgd / 2:g}); "
                    "expected failure, analysed in the decisions ledger")


# -- 10 -----------------------------------------------------------------------

def _rows(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r.pop("elapsed_s")
    return rows


def test_c10_determinism(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("problem: synthetic_logistic\nn: 200\nd: 10\nl2: 0.001\nmethod: cacusgd\n"
                   "L_hat: 2.0\nH_hat: 10.0\nmax_iters: 200\ngrad_tol: null\nseed: 3\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    codes = [main(["run", "--config", str(cfg), "--out", str(a)]),
             main(["run", "--config", str(cfg), "--out", str(b)])]
    same = _rows(a) == _rows(b)
    validate = main(["validate", "--out", str(tmp_path / "report.csv")])
    ok = codes == [0, 0] and same and validate == 0
    assert _verdict("10 determinism", ok,
                    f"identical traces excluding elapsed_s: {same}; validate exit {validate}")
