"""Problem-oracle contract, evaluation counters and the iteration trace model.

Every optimizer in the package talks to an objective through :class:`Oracle`.
The public methods count calls and accumulate the time spent inside the
objective; subclasses only implement the underscored hooks.
"""

from __future__ import annotations

import copy
import enum
import time
from dataclasses import dataclass, field, fields
from typing import Any, Optional

import numpy as np


class OptimizationError(RuntimeError):
    """Base class for signals raised by solvers and optimizers."""


class Converged(OptimizationError):
    """The gradient vanished; no step is defined."""


class SubproblemFailure(OptimizationError):
    """The cubic subproblem could not be solved (indefinite model or no root found)."""


class IndefiniteSystem(OptimizationError):
    """A shifted linear system was not positive definite."""


class BacktrackOverflow(OptimizationError):
    """Backtracking exceeded its doubling cap, which points at an inconsistent oracle."""


class HessianUnavailable(OptimizationError):
    """The oracle does not implement a dense Hessian."""


class StepKind(str, enum.Enum):
    INIT = "Init"
    GRAD_CUBIC = "GradCubic"
    CRN = "CRN"
    REG_NEWTON = "RegNewton"
    GD = "GD"
    ADGD = "AdGD"
    POLYAK = "Polyak"
    NESTEROV_LS = "NesterovLS"
    SGD = "SGD"
    CACUSGD_QUAD = "CaCuSGDQuad"
    CACUSGD_CUBIC = "CaCuSGDCubic"


REGULARIZED_KINDS = frozenset(
    {
        StepKind.GRAD_CUBIC,
        StepKind.CRN,
        StepKind.REG_NEWTON,
        StepKind.CACUSGD_QUAD,
        StepKind.CACUSGD_CUBIC,
    }
)


@dataclass
class OracleCounters:
    f_evals: int = 0
    grad_evals: int = 0
    hvp_evals: int = 0
    hess_evals: int = 0
    factorizations: int = 0
    # time spent inside the objective; timing never takes part in equality
    elapsed_s: float = field(default=0.0, compare=False)

    def copy(self) -> "OracleCounters":
        return copy.copy(self)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class Oracle:
    """Base class for objectives.

    Subclasses implement ``_value``, ``_gradient`` and ``_hvp``; ``_hessian``
    and ``_value_and_gradient`` are optional. A finite-sum objective can also
    implement ``_batch_gradient`` / ``_batch_hvp`` and set ``n_samples``.

    Counters are plain integers. An oracle instance is meant to be owned by a
    single run; parallel runs build their own instances.
    """

    name = "oracle"
    n_samples: Optional[int] = None

    def __init__(self):
        self.counters = OracleCounters()

    # -- hooks ---------------------------------------------------------------
    def dim(self) -> int:
        raise NotImplementedError

    def _value(self, x):
        raise NotImplementedError

    def _gradient(self, x):
        raise NotImplementedError

    def _hvp(self, x, v):
        raise NotImplementedError

    def _hessian(self, x):
        raise HessianUnavailable(f"{type(self).__name__} does not provide a dense Hessian")

    def _value_and_gradient(self, x):
        return self._value(x), self._gradient(x)

    def _batch_gradient(self, x, idx):
        raise NotImplementedError(f"{type(self).__name__} is not a finite-sum oracle")

    def _batch_hvp(self, x, v, idx):
        raise NotImplementedError(f"{type(self).__name__} is not a finite-sum oracle")

    # -- counted entry points -------------------------------------------------
    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.shape[0] != self.dim():
            raise ValueError(f"expected a vector of dimension {self.dim()}, got shape {x.shape}")
        return x

    def value(self, x) -> float:
        x = self._check(x)
        t0 = time.perf_counter()
        out = float(self._value(x))
        self.counters.elapsed_s += time.perf_counter() - t0
        self.counters.f_evals += 1
        return out

    def gradient(self, x) -> np.ndarray:
        x = self._check(x)
        t0 = time.perf_counter()
        out = np.asarray(self._gradient(x), dtype=float)
        self.counters.elapsed_s += time.perf_counter() - t0
        self.counters.grad_evals += 1
        return out

    def value_and_gradient(self, x):
        """Counted as one value evaluation plus one gradient evaluation."""
        x = self._check(x)
        t0 = time.perf_counter()
        f, g = self._value_and_gradient(x)
        self.counters.elapsed_s += time.perf_counter() - t0
        self.counters.f_evals += 1
        self.counters.grad_evals += 1
        return float(f), np.asarray(g, dtype=float)

    def hvp(self, x, v) -> np.ndarray:
        x = self._check(x)
        v = self._check(v)
        t0 = time.perf_counter()
        out = np.asarray(self._hvp(x, v), dtype=float)
        self.counters.elapsed_s += time.perf_counter() - t0
        self.counters.hvp_evals += 1
        return out

    def hessian(self, x) -> np.ndarray:
        x = self._check(x)
        t0 = time.perf_counter()
        out = np.asarray(self._hessian(x), dtype=float)
        self.counters.elapsed_s += time.perf_counter() - t0
        self.counters.hess_evals += 1
        return out

    def batch_gradient(self, x, idx) -> np.ndarray:
        x = self._check(x)
        t0 = time.perf_counter()
        out = np.asarray(self._batch_gradient(x, np.asarray(idx)), dtype=float)
        self.counters.elapsed_s += time.perf_counter() - t0
        self.counters.grad_evals += 1
        return out

    def batch_hvp(self, x, v, idx) -> np.ndarray:
        x = self._check(x)
        t0 = time.perf_counter()
        out = np.asarray(self._batch_hvp(x, np.asarray(v, dtype=float), np.asarray(idx)), dtype=float)
        self.counters.elapsed_s += time.perf_counter() - t0
        self.counters.hvp_evals += 1
        return out

    @property
    def has_hessian(self) -> bool:
        return type(self)._hessian is not Oracle._hessian

    # Telemetry reads that must not inflate the method's cost accounting.
    def untracked_value(self, x) -> float:
        return float(self._value(self._check(x)))

    def untracked_gradient(self, x) -> np.ndarray:
        return np.asarray(self._gradient(self._check(x)), dtype=float)

    def count_factorization(self, n: int = 1) -> None:
        self.counters.factorizations += n

    def reset_counters(self) -> None:
        self.counters = OracleCounters()


def snapshot_counters(oracle: Oracle) -> OracleCounters:
    return oracle.counters.copy()


@dataclass
class IterRecord:
    k: int
    f: float
    grad_norm: float
    step_kind: StepKind
    reg_used: float
    backtracks: int
    counters: OracleCounters
    elapsed_s: float


@dataclass
class Trace:
    records: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    # final iterate; kept in memory only, never written to trace files
    x_final: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    @property
    def method(self) -> str:
        return self.metadata.get("method", "")

    @property
    def f_star(self) -> Optional[float]:
        return self.metadata.get("f_star_reference")

    def column(self, name: str) -> np.ndarray:
        if name in {f.name for f in fields(OracleCounters)} and name != "elapsed_s":
            return np.array([getattr(r.counters, name) for r in self.records])
        return np.array([getattr(r, name) for r in self.records])

    @property
    def f_values(self) -> np.ndarray:
        return self.column("f")

    def __len__(self) -> int:
        return len(self.records)


class Budgets:
    """Stopping rules; the first one that fires wins."""

    def __init__(self, max_iters: Optional[int] = 1000, max_seconds: Optional[float] = None,
                 grad_tol: Optional[float] = 1e-9):
        if max_iters is None and max_seconds is None and grad_tol is None:
            raise ValueError("at least one stopping rule is required")
        for name, val in (("max_iters", max_iters), ("max_seconds", max_seconds), ("grad_tol", grad_tol)):
            if val is not None and val <= 0:
                raise ValueError(f"{name} must be positive, got {val}")
        self.max_iters = max_iters
        self.max_seconds = max_seconds
        self.grad_tol = grad_tol

    def __repr__(self):
        return (f"Budgets(max_iters={self.max_iters}, max_seconds={self.max_seconds}, "
                f"grad_tol={self.grad_tol})")


class Recorder:
    """Accumulates :class:`IterRecord` rows and evaluates the stopping rules."""

    def __init__(self, oracle: Oracle, budgets: Budgets, method: str, params: dict[str, Any]):
        self.oracle = oracle
        self.budgets = budgets
        self.trace = Trace(metadata={
            "method": method,
            "problem": getattr(oracle, "name", type(oracle).__name__),
            "params": dict(params),
            "status": "running",
        })
        self._t0 = time.monotonic()

    @property
    def k(self) -> int:
        return len(self.trace.records)

    def record(self, f, grad_norm, kind, reg_used=0.0, backtracks=0) -> IterRecord:
        rec = IterRecord(
            k=self.k,
            f=float(f),
            grad_norm=float(grad_norm),
            step_kind=StepKind(kind),
            reg_used=float(reg_used),
            backtracks=int(backtracks),
            counters=snapshot_counters(self.oracle),
            elapsed_s=time.monotonic() - self._t0,
        )
        self.trace.records.append(rec)
        return rec

    def should_stop(self, grad_norm: float) -> bool:
        """Check budgets after the latest record; sets the trace status."""
        b = self.budgets
        if b.grad_tol is not None and grad_norm <= b.grad_tol:
            self.trace.metadata["status"] = "converged"
            return True
        if not np.isfinite(grad_norm):
            self.trace.metadata["status"] = "diverged"
            return True
        # records include k=0, so k steps have been taken when k+1 records exist
        if b.max_iters is not None and self.k - 1 >= b.max_iters:
            self.trace.metadata["status"] = "max_iters"
            return True
        if b.max_seconds is not None and time.monotonic() - self._t0 >= b.max_seconds:
            self.trace.metadata["status"] = "max_seconds"
            return True
        return False

    def finish(self, status: Optional[str] = None, x=None) -> Trace:
        if status is not None:
            self.trace.metadata["status"] = status
        if x is not None:
            self.trace.x_final = np.array(x, dtype=float)
        return self.trace
