"""Exact cubic-regularized Newton steps and shifted Newton systems (dense, convex case)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .oracle import Converged, IndefiniteSystem, Oracle, SubproblemFailure

MAX_SECULAR_ITERS = 200


@dataclass
class CrnSolution:
    T: np.ndarray
    r: float
    residual: float
    factorizations_used: int = 1


def shifted_solve(B, lam: float, rhs, oracle: Optional[Oracle] = None) -> np.ndarray:
    """Solve ``(B + lam I) s = rhs`` by Cholesky.

    Raises :class:`IndefiniteSystem` when the shifted matrix is not positive
    definite; the caller is expected to increase ``lam``.
    """
    B = np.asarray(B, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if lam < 0:
        raise ValueError("shift must be nonnegative")
    K = B + lam * np.eye(B.shape[0])
    if oracle is not None:
        oracle.count_factorization()
    try:
        factor = scipy.linalg.cho_factor(K, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise IndefiniteSystem(f"B + {lam:g} I is not positive definite") from exc
    s = scipy.linalg.cho_solve(factor, rhs)
    tol = 1e-10 * (1.0 + np.linalg.norm(rhs))
    for _ in range(2):
        res = rhs - K @ s
        if np.linalg.norm(res) <= tol:
            break
        s = s + scipy.linalg.cho_solve(factor, res)
    return s


def _secular_root(c2, lam, M, gnorm):
    """Root of ``|s(r)| - r`` where ``|s(r)|^2 = sum c2_i / (lam_i + M r)^2``.

    The function is convex and decreasing in r, so Newton from a point on the
    left of the root climbs monotonically; bisection guards non-finite steps.
    """
    lam_max = float(lam.max(initial=0.0))
    hi = np.sqrt(gnorm / M)
    lo = (-lam_max + np.sqrt(lam_max**2 + 4.0 * M * gnorm)) / (2.0 * M)
    lo = min(lo, hi)

    def h_and_dh(r):
        den = lam + M * r
        snorm = np.sqrt(np.sum(c2 / den**2))
        dsnorm = -M * np.sum(c2 / den**3) / snorm
        return snorm - r, dsnorm - 1.0

    r = lo
    for _ in range(MAX_SECULAR_ITERS):
        h, dh = h_and_dh(r)
        if abs(h) <= 1e-10 * (1.0 + r):
            # one more Newton step is nearly free and tightens the residual
            r_next = r - h / dh
            if np.isfinite(r_next) and lo <= r_next <= hi:
                h_next, _ = h_and_dh(r_next)
                if abs(h_next) <= abs(h):
                    r = r_next
            return r
        if h > 0:
            lo = r
        else:
            hi = r
        r_next = r - h / dh
        if not np.isfinite(r_next) or r_next <= lo or r_next >= hi:
            r_next = 0.5 * (lo + hi)
        r = r_next
    raise SubproblemFailure("secular equation did not converge in "
                            f"{MAX_SECULAR_ITERS} iterations")


def crn_step(oracle: Oracle, x, M: float, g=None, B=None) -> CrnSolution:
    """Minimizer of the cubic model ``<g,s> + s'Bs/2 + (M/3)|s|^3`` around ``x``.

    One symmetric eigendecomposition of the Hessian, then a scalar root-find on
    the secular equation. Only the convex case is handled.
    """
    if not M > 0:
        raise ValueError("M must be positive")
    x = np.asarray(x, dtype=float)
    if g is None:
        g = oracle.gradient(x)
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        raise Converged("zero gradient")
    if B is None:
        B = oracle.hessian(x)
    lam, Q = np.linalg.eigh(B)
    oracle.count_factorization()
    scale = max(1.0, abs(float(lam[-1])))
    if lam[0] < -1e-10 * scale:
        raise SubproblemFailure(f"indefinite Hessian (min eigenvalue {lam[0]:.3e}); "
                                "only convex models are supported")
    lam = np.maximum(lam, 0.0)
    c = Q.T @ g
    r = _secular_root(c**2, lam, M, gnorm)
    s = -(Q @ (c / (lam + M * r)))
    T = x + s
    rs = float(np.linalg.norm(s))
    residual = float(np.linalg.norm(g + B @ s + M * rs * s))
    return CrnSolution(T=T, r=rs, residual=residual, factorizations_used=1)


def reg_newton_step(oracle: Oracle, x, lam: float, g=None, B=None) -> np.ndarray:
    """``x - (B + lam I)^{-1} g``."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    x = np.asarray(x, dtype=float)
    if g is None:
        g = oracle.gradient(x)
    if not np.any(g):
        return x.copy()
    if B is None:
        B = oracle.hessian(x)
    return x - shifted_solve(B, lam, g, oracle=oracle)


def cubic_model(g, B, M: float, s) -> float:
    """Model decrease ``<g,s> + s'Bs/2 + (M/3)|s|^3`` (without the constant term)."""
    s = np.asarray(s, dtype=float)
    return float(g @ s + 0.5 * s @ B @ s + M / 3.0 * np.linalg.norm(s) ** 3)
