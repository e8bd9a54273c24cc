"""HVP-based certificate primitives shared by the casual cubic methods.

The gradient step ``x - g / sqrt(M |g|)`` realizes a cubic-model decrease
whenever ``M`` dominates both a local Hessian-Lipschitz estimate and the
directional-curvature term ``9 q^2 / (16 alpha^2 |g|^5)`` with
``q = <g, hess(x) g>``. Everything here costs gradients, HVPs and values only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .oracle import BacktrackOverflow, Converged, Oracle

MAX_BACKTRACKS = 60


@dataclass
class CertificateInputs:
    f0: float
    g: np.ndarray
    gnorm: float
    q: float
    alpha: float = 0.5

    @property
    def curvature(self) -> float:
        """Directional curvature ``L_k = q / |g|^2``."""
        return self.q / self.gnorm**2

    @classmethod
    def at(cls, oracle: Oracle, x, f0: float, g, alpha: float = 0.5) -> "CertificateInputs":
        """Build inputs at ``x`` from cached ``f0`` and ``g`` with one HVP."""
        g = np.asarray(g, dtype=float)
        gnorm = float(np.linalg.norm(g))
        q = float(g @ oracle.hvp(x, g)) if gnorm > 0 else 0.0
        return cls(f0=float(f0), g=g, gnorm=gnorm, q=q, alpha=alpha)


def grad_cubic_step(x, g, M: float) -> np.ndarray:
    """``x - g / sqrt(M |g|)``; the step length is ``sqrt(|g| / M)``."""
    g = np.asarray(g, dtype=float)
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        raise Converged("zero gradient")
    if not M > 0:
        raise ValueError("M must be positive")
    return np.asarray(x, dtype=float) - g / np.sqrt(M * gnorm)


def hat_H(ci: CertificateInputs) -> float:
    """Smallest ``M`` for which the curvature term cannot spoil the decrease."""
    if ci.gnorm == 0.0:
        raise Converged("zero gradient")
    return 9.0 * ci.q**2 / (16.0 * ci.alpha**2 * ci.gnorm**5)


def per_condition_rhs(ci: CertificateInputs, H: float) -> float:
    """Cubic upper model at the gradient step: ``f0 + q/(2H|g|) - 2|g|^{3/2}/(3 sqrt H)``."""
    return ci.f0 + ci.q / (2.0 * H * ci.gnorm) - 2.0 / (3.0 * np.sqrt(H)) * ci.gnorm**1.5


def _per_condition(oracle: Oracle, x, ci: CertificateInputs, H: float):
    x_trial = x - ci.g / np.sqrt(H * ci.gnorm)
    f_trial = oracle.value(x_trial)
    return f_trial <= per_condition_rhs(ci, H), x_trial, f_trial


def per_condition_test(oracle: Oracle, x, ci: CertificateInputs, H: float) -> bool:
    """True when the gradient step with constant ``H`` lies under the cubic model.

    Costs exactly one value evaluation.
    """
    if not H > 0:
        raise ValueError("H must be positive")
    return _per_condition(oracle, np.asarray(x, dtype=float), ci, H)[0]


class BacktrackResult(NamedTuple):
    H: float
    backtracks: int
    passed: bool
    x_trial: Optional[np.ndarray]
    f_trial: Optional[float]


def backtrack_H(oracle: Oracle, x, ci: CertificateInputs, H_in: float,
                stop_when: Optional[Callable[[float], bool]] = None,
                max_backtracks: int = MAX_BACKTRACKS) -> BacktrackResult:
    """Double ``H`` from ``H_in`` until the per-condition test passes.

    ``stop_when(H)`` is checked before each test and halts the doubling
    without spending a value evaluation. ``passed`` tells which rule ended the
    loop; the last tested point and value are returned for reuse.
    """
    if not H_in > 0:
        raise ValueError("H_in must be positive")
    x = np.asarray(x, dtype=float)
    H = float(H_in)
    x_trial = f_trial = None
    for n in range(max_backtracks + 1):
        if stop_when is not None and stop_when(H):
            return BacktrackResult(H, n, False, None, None)
        ok, x_trial, f_trial = _per_condition(oracle, x, ci, H)
        if ok:
            return BacktrackResult(H, n, True, x_trial, f_trial)
        H *= 2.0
    raise BacktrackOverflow(f"per-condition test still failing after {max_backtracks} doublings "
                            f"(H = {H:.3e})")


def decrease_threshold(gnorm: float, M: float, alpha: float) -> float:
    """Guaranteed decrease ``2(1-alpha) |g|^{3/2} / (3 sqrt M)``."""
    return 2.0 * (1.0 - alpha) / (3.0 * np.sqrt(M)) * gnorm**1.5
