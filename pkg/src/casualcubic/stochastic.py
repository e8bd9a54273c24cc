"""Minibatch sampling, noisy oracles, SGD and the stochastic casual cubic method."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .oracle import Budgets, Oracle, Recorder, StepKind, Trace


class MinibatchSampler:
    """Shuffled epochs of fixed-size batches; the incomplete tail batch is dropped."""

    def __init__(self, n: int, batch_size: int, seed=None):
        if not 1 <= batch_size <= n:
            raise ValueError(f"batch_size must lie in [1, {n}], got {batch_size}")
        self.n = int(n)
        self.batch_size = int(batch_size)
        self.rng = np.random.default_rng(seed)
        self.epoch = 0
        self._perm = None
        self._pos = 0

    @property
    def batches_per_epoch(self) -> int:
        return self.n // self.batch_size

    def next_batch(self) -> np.ndarray:
        if self._perm is None or self._pos + self.batch_size > self.n:
            self._perm = self.rng.permutation(self.n)
            self._pos = 0
            self.epoch += 1
        idx = self._perm[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return np.sort(idx)

    def __iter__(self) -> Iterator[np.ndarray]:
        while True:
            yield self.next_batch()


class NoisyOracle(Oracle):
    """Wraps an oracle and adds zero-mean Gaussian noise to every gradient call.

    Per-coordinate standard deviation is ``sigma_g / sqrt(d)`` so that the
    expected squared noise norm equals ``sigma_g**2``. Values and HVPs are
    exact (no synthetic Hessian noise).
    """

    def __init__(self, base: Oracle, sigma_g: float, seed=None):
        super().__init__()
        if sigma_g < 0:
            raise ValueError("sigma_g must be nonnegative")
        self.base = base
        self.sigma_g = float(sigma_g)
        self.rng = np.random.default_rng(seed)
        self.name = f"noisy_{base.name}"

    def dim(self) -> int:
        return self.base.dim()

    def _noise(self):
        d = self.dim()
        return self.rng.normal(0.0, self.sigma_g / math.sqrt(d), size=d)

    def _value(self, x):
        return self.base._value(x)

    def _gradient(self, x):
        return self.base._gradient(x) + self._noise()

    def _value_and_gradient(self, x):
        return self.base._value(x), self._gradient(x)

    def _hvp(self, x, v):
        return self.base._hvp(x, v)

    def _hessian(self, x):
        return self.base._hessian(x)

    # telemetry sees the noiseless objective
    def untracked_gradient(self, x):
        return np.asarray(self.base._gradient(self._check(x)), dtype=float)


@dataclass
class StochasticEstimates:
    g: np.ndarray
    q: float
    batch: Optional[np.ndarray] = None

    @property
    def gnorm(self) -> float:
        return float(np.linalg.norm(self.g))


class _EstimateSource:
    """Draws ``g`` and ``<g, H g>`` on one sample ``xi_k``."""

    def __init__(self, oracle: Oracle, batch_size: Optional[int], seed):
        self.oracle = oracle
        self.sampler = None
        if oracle.n_samples is not None and not isinstance(oracle, NoisyOracle):
            n = oracle.n_samples
            bs = batch_size if batch_size is not None else max(1, n // 10)
            self.sampler = MinibatchSampler(n, bs, seed)

    def draw(self, x, need_q: bool) -> StochasticEstimates:
        if self.sampler is None:
            g = self.oracle.gradient(x)
            q = float(g @ self.oracle.hvp(x, g)) if need_q else 0.0
            return StochasticEstimates(g, q)
        idx = self.sampler.next_batch()
        g = self.oracle.batch_gradient(x, idx)
        q = float(g @ self.oracle.batch_hvp(x, g, idx)) if need_q else 0.0
        return StochasticEstimates(g, q, idx)


class Regime(str, enum.Enum):
    QUADRATIC = "quadratic"
    CUBIC = "cubic"


def cacusgd_regime(g, q: float, L_hat: float, H_hat: float):
    """Pick ``M`` for the stochastic step ``x - g / sqrt(M |g|)``.

    Quadratic regime (``M = L_hat^2 / |g|``, i.e. the step ``g / L_hat``) when
    ``4 q^2 / |g|^5 >= H_hat``; otherwise the cubic regime with ``M = H_hat``.
    """
    if not (L_hat > 0 and H_hat > 0):
        raise ValueError("L_hat and H_hat must be positive")
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        return None, None
    if 4.0 * q**2 / gnorm**5 >= H_hat:
        return L_hat**2 / gnorm, Regime.QUADRATIC
    return float(H_hat), Regime.CUBIC


def _telemetry(oracle, x):
    return oracle.untracked_value(x), float(np.linalg.norm(oracle.untracked_gradient(x)))


def _stochastic_loop(oracle, x0, budgets, method, params, seed, batch_size, step):
    rec = Recorder(oracle, budgets or Budgets(grad_tol=None), method,
                   {**params, "seed": seed, "batch_size": batch_size})
    x = np.array(x0, dtype=float)
    f, gn = _telemetry(oracle, x)
    rec.record(f, gn, StepKind.INIT)
    source = _EstimateSource(oracle, batch_size, seed)
    if source.sampler is not None:
        rec.trace.metadata["params"]["batch_size"] = source.sampler.batch_size
    while not rec.should_stop(gn):
        est = source.draw(x, need_q=step.needs_q)
        x, kind, reg = step(x, est)
        f, gn = _telemetry(oracle, x)
        rec.record(f, gn, kind, reg)
    return rec.finish(x=x)


class _SgdStep:
    needs_q = False

    def __init__(self, L_hat):
        self.L_hat = L_hat

    def __call__(self, x, est):
        return x - est.g / self.L_hat, StepKind.SGD, self.L_hat


class _CacusgdStep:
    needs_q = True

    def __init__(self, L_hat, H_hat):
        self.L_hat, self.H_hat = L_hat, H_hat

    def __call__(self, x, est):
        M, regime = cacusgd_regime(est.g, est.q, self.L_hat, self.H_hat)
        if regime is None:
            return x, StepKind.CACUSGD_CUBIC, self.H_hat
        if regime is Regime.QUADRATIC:
            return x - est.g / self.L_hat, StepKind.CACUSGD_QUAD, M
        return x - est.g / math.sqrt(M * est.gnorm), StepKind.CACUSGD_CUBIC, M


def run_sgd(oracle: Oracle, x0, L_hat: float, budgets: Optional[Budgets] = None, seed=None,
            batch_size: Optional[int] = None) -> Trace:
    """Constant-step minibatch SGD ``x - g / L_hat``."""
    if not L_hat > 0:
        raise ValueError("L_hat must be positive")
    return _stochastic_loop(oracle, x0, budgets, "sgd", {"L_hat": L_hat}, seed, batch_size,
                            _SgdStep(L_hat))


def run_cacusgd(oracle: Oracle, x0, L_hat: float, H_hat: float, budgets: Optional[Budgets] = None,
                seed=None, batch_size: Optional[int] = None) -> Trace:
    """Stochastic casual cubic gradient method.

    The gradient and the Hessian-gradient product share one minibatch; no
    Hessian is ever formed. The regime is logged through the step kind.
    """
    cacusgd_regime(np.ones(1), 0.0, L_hat, H_hat)  # validates the constants
    return _stochastic_loop(oracle, x0, budgets, "cacusgd", {"L_hat": L_hat, "H_hat": H_hat},
                            seed, batch_size, _CacusgdStep(L_hat, H_hat))
