import math

import numpy as np
import pytest

from casualcubic import (
    Converged,
    CubicNormProblem,
    IndefiniteSystem,
    LogSumExpProblem,
    QuadraticProblem,
    SeparableCubicProblem,
    SubproblemFailure,
    crn_step,
    reg_newton_step,
    shifted_solve,
)
from casualcubic.subproblem import cubic_model

from conftest import random_psd


def test_shifted_solve_examples():
    np.testing.assert_allclose(shifted_solve(np.eye(2), 1.0, np.array([2.0, 0.0])), [1.0, 0.0])
    b = np.array([3.0, -1.0, 4.0])
    np.testing.assert_allclose(shifted_solve(np.zeros((3, 3)), 2.0, b), b / 2)
    np.testing.assert_allclose(shifted_solve(np.diag([1.0, 3.0]), 1.0, np.array([4.0, 8.0])), [2.0, 2.0])


def test_shifted_solve_counts_and_residual(rng):
    o = QuadraticProblem.identity(5)
    B = random_psd(rng, 5)
    rhs = rng.standard_normal(5)
    s = shifted_solve(B, 0.3, rhs, oracle=o)
    assert o.counters.factorizations == 1
    assert np.linalg.norm((B + 0.3 * np.eye(5)) @ s - rhs) <= 1e-10 * (1 + np.linalg.norm(rhs))


def test_shifted_solve_indefinite():
    with pytest.raises(IndefiniteSystem):
        shifted_solve(np.diag([1.0, -2.0]), 1.0, np.ones(2))


def test_crn_step_scalar_quadratic():
    sol = crn_step(QuadraticProblem.identity(2), np.array([1.0, 0.0]), 2.0)
    assert sol.r == pytest.approx(0.5, abs=1e-12)
    np.testing.assert_allclose(sol.T, [0.5, 0.0], atol=1e-12)


def test_crn_step_linear_model_is_gradient_step(rng):
    g = rng.standard_normal(4)
    M = 3.0
    o = QuadraticProblem(np.zeros((4, 4)), -g)  # gradient g everywhere, Hessian 0
    x = rng.standard_normal(4)
    sol = crn_step(o, x, M)
    gn = np.linalg.norm(g)
    assert sol.r == pytest.approx(math.sqrt(gn / M), rel=1e-12)
    np.testing.assert_allclose(sol.T, x - g / math.sqrt(M * gn), atol=1e-12)


def test_crn_step_zero_gradient():
    with pytest.raises(Converged):
        crn_step(QuadraticProblem.identity(2), np.zeros(2), 1.0)


def test_crn_step_indefinite_unsupported():
    from casualcubic.oracle import Oracle

    class Saddle(Oracle):
        def dim(self):
            return 2

        def _value(self, x):
            return 0.5 * (x[0] ** 2 - x[1] ** 2)

        def _gradient(self, x):
            return np.array([x[0], -x[1]])

        def _hvp(self, x, v):
            return np.array([v[0], -v[1]])

        def _hessian(self, x):
            return np.diag([1.0, -1.0])

    with pytest.raises(SubproblemFailure):
        crn_step(Saddle(), np.ones(2), 1.0)


def test_crn_step_one_factorization():
    o = QuadraticProblem(np.diag([1.0, 4.0]))
    crn_step(o, np.array([1.0, 1.0]), 1.0)
    assert o.counters.factorizations == 1
    assert o.counters.hess_evals == 1


@pytest.mark.parametrize("seed", range(50))
def test_crn_residual_on_random_convex_quadratics(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 31))
    Q = random_psd(rng, d, scale=10 ** rng.uniform(-3, 3))
    if seed % 5 == 0:
        Q[:, 0] = Q[0, :] = 0.0  # singular Hessian
    o = QuadraticProblem(Q, rng.standard_normal(d))
    x = rng.standard_normal(d)
    M = 10 ** rng.uniform(-3, 3)
    sol = crn_step(o, x, M)
    g = o.gradient(x)
    assert sol.residual <= 1e-8 * (1 + np.linalg.norm(g))
    s = sol.T - x
    assert np.linalg.norm(g + Q @ s + M * np.linalg.norm(s) * s) <= 1e-8 * (1 + np.linalg.norm(g))


def _grid_argmin(g, B, M, center, half):
    best = None
    for _ in range(3):
        u = np.linspace(center[0] - half, center[0] + half, 400)
        v = np.linspace(center[1] - half, center[1] + half, 400)
        U, V = np.meshgrid(u, v, indexing="ij")
        S = np.stack([U, V], axis=-1)
        n = np.linalg.norm(S, axis=-1)
        vals = S @ g + 0.5 * np.einsum("...i,ij,...j->...", S, B, S) + M / 3 * n**3
        i, j = np.unravel_index(np.argmin(vals), vals.shape)
        best = np.array([u[i], v[j]])
        center, half = best, half * 4 / 400
    return best


@pytest.mark.parametrize("seed", range(10))
def test_crn_matches_grid_brute_force(seed):
    rng = np.random.default_rng(100 + seed)
    B = random_psd(rng, 2)
    g = rng.standard_normal(2)
    M = 10 ** rng.uniform(-1, 1)
    o = QuadraticProblem(B, -g)
    sol = crn_step(o, np.zeros(2), M)
    half = 2 * math.sqrt(np.linalg.norm(g) / M) + 1e-3
    s_grid = _grid_argmin(g, B, M, np.zeros(2), half)
    assert np.linalg.norm(sol.T - s_grid) <= 1e-3
    assert cubic_model(g, B, M, sol.T) <= cubic_model(g, B, M, s_grid) + 1e-12


def test_secular_norm_decreasing(rng):
    B = random_psd(rng, 6)
    lam, Q = np.linalg.eigh(B)
    lam = np.maximum(lam, 0)
    c = Q.T @ rng.standard_normal(6)
    rs = np.linspace(1e-3, 10, 500)
    norms = [np.sqrt(np.sum(c**2 / (lam + 2.0 * r) ** 2)) for r in rs]
    assert np.all(np.diff(norms) < 0)


@pytest.mark.parametrize("problem,H", [(CubicNormProblem(1.3, 3), 1.3),
                                       (SeparableCubicProblem([0.5, 1.0, 2.0]), 2.0)])
def test_gradient_at_solution_lemma(problem, H, rng):
    # Hessians of these problems are 2H-Lipschitz; with M >= 2H the CRN output
    # satisfies <grad f(T), x - T> >= |grad f(T)|^{3/2} / sqrt(H + M)
    for _ in range(50):
        x = rng.standard_normal(problem.dim()) * 10 ** rng.uniform(-1, 1)
        M = 2 * H * (1 + rng.random())
        T = crn_step(problem, x, M).T
        gT = problem.gradient(T)
        assert gT @ (x - T) >= np.linalg.norm(gT) ** 1.5 / math.sqrt(H + M) - 1e-12


def test_crn_on_logsumexp_stays_accurate():
    p = LogSumExpProblem(np.random.default_rng(0).standard_normal((30, 8)), np.zeros(30), 0.05)
    x = np.ones(8)
    sol = crn_step(p, x, 1e-3)
    assert sol.residual <= 1e-8 * (1 + np.linalg.norm(p.gradient(x)))


def test_reg_newton_examples():
    o = QuadraticProblem.identity(2)
    np.testing.assert_allclose(reg_newton_step(o, np.array([1.0, 0.0]), 1.0), [0.5, 0.0])
    far = reg_newton_step(o, np.array([1.0, 0.0]), 1e12)
    np.testing.assert_allclose(far, [1.0, 0.0], atol=1e-11)
    x = np.zeros(2)
    np.testing.assert_array_equal(reg_newton_step(o, x, 1.0), x)
