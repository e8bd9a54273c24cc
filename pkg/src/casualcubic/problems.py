"""Analytic test objectives with values, gradients, Hessian-vector products and Hessians."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, logsumexp

from .oracle import Oracle


def _as_csr(A):
    if sp.issparse(A):
        return sp.csr_matrix(A, dtype=float)
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[None, :]
    return sp.csr_matrix(A)


class LogisticProblem(Oracle):
    """l2-regularized logistic loss ``mean(softplus(a_i x) - b_i a_i x) + reg/2 |x|^2``.

    ``A`` is stored in compressed-row form and Hessian-vector products are two
    sparse passes; the dense Hessian is only built when asked for.
    """

    name = "logistic"

    def __init__(self, A, b, reg: float = 0.0):
        super().__init__()
        self.A = _as_csr(A)
        self.b = np.asarray(b, dtype=float).ravel()
        n, d = self.A.shape
        if n < 1 or d < 1:
            raise ValueError("logistic problem needs n >= 1 and d >= 1")
        if self.b.shape[0] != n:
            raise ValueError(f"got {self.b.shape[0]} labels for {n} rows")
        if not np.all((self.b == 0) | (self.b == 1)):
            raise ValueError("labels must be in {0, 1}; remap {-1, +1} with from_dataset")
        if reg < 0:
            raise ValueError("reg must be nonnegative")
        self.reg = float(reg)
        self.n_samples = n
        self.At = self.A.T.tocsr()

    @classmethod
    def from_dataset(cls, ds, reg: float = 0.0) -> "LogisticProblem":
        labels = np.asarray(ds.labels, dtype=float)
        if np.all(np.isin(labels, (-1.0, 1.0))):
            labels = (labels > 0).astype(float)
        return cls(ds.A, labels, reg)

    def dim(self) -> int:
        return self.A.shape[1]

    def _loss(self, t, b):
        # softplus(t) - b t, overflow-free for any |t|
        return np.logaddexp(0.0, t) - b * t

    def _value(self, x):
        t = self.A @ x
        return self._loss(t, self.b).mean() + 0.5 * self.reg * (x @ x)

    def _gradient(self, x):
        t = self.A @ x
        return self.At @ (expit(t) - self.b) / self.A.shape[0] + self.reg * x

    def _value_and_gradient(self, x):
        t = self.A @ x
        f = self._loss(t, self.b).mean() + 0.5 * self.reg * (x @ x)
        g = self.At @ (expit(t) - self.b) / self.A.shape[0] + self.reg * x
        return f, g

    def _hvp(self, x, v):
        s = expit(self.A @ x)
        w = s * (1.0 - s)
        return self.At @ (w * (self.A @ v)) / self.A.shape[0] + self.reg * v

    def _hessian(self, x):
        s = expit(self.A @ x)
        w = s * (1.0 - s)
        H = (self.At @ sp.diags(w) @ self.A).toarray() / self.A.shape[0]
        H[np.diag_indices_from(H)] += self.reg
        return 0.5 * (H + H.T)

    def _batch_gradient(self, x, idx):
        Ab = self.A[idx]
        return Ab.T @ (expit(Ab @ x) - self.b[idx]) / len(idx) + self.reg * x

    def _batch_hvp(self, x, v, idx):
        Ab = self.A[idx]
        s = expit(Ab @ x)
        return Ab.T @ (s * (1.0 - s) * (Ab @ v)) / len(idx) + self.reg * v


class LogSumExpProblem(Oracle):
    """Smooth max ``rho * log(sum exp((a_i x - b_i) / rho))``, always max-shifted."""

    name = "logsumexp"

    def __init__(self, A, b, rho: float):
        super().__init__()
        if not rho > 0:
            raise ValueError(f"rho must be positive, got {rho}")
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.asarray(b, dtype=float).ravel()
        if self.b.shape[0] != self.A.shape[0]:
            raise ValueError("A and b disagree on the number of terms")
        self.rho = float(rho)

    def dim(self) -> int:
        return self.A.shape[1]

    def _z(self, x):
        return (self.A @ x - self.b) / self.rho

    @staticmethod
    def _softmax(z):
        e = np.exp(z - z.max())
        return e / e.sum()

    def _value(self, x):
        return self.rho * logsumexp(self._z(x))

    def _gradient(self, x):
        return self.A.T @ self._softmax(self._z(x))

    def _value_and_gradient(self, x):
        z = self._z(x)
        return self.rho * logsumexp(z), self.A.T @ self._softmax(z)

    def _hvp(self, x, v):
        w = self._softmax(self._z(x))
        Av = self.A @ v
        return (self.A.T @ (w * Av) - (self.A.T @ w) * (w @ Av)) / self.rho

    def _hessian(self, x):
        w = self._softmax(self._z(x))
        Atw = self.A.T @ w
        H = (self.A.T * w) @ self.A - np.outer(Atw, Atw)
        H /= self.rho
        return 0.5 * (H + H.T)


class CubicNormProblem(Oracle):
    """Isotropic cubic ``(coeff/3) |x|^3``; its Hessian is ``2*coeff``-Lipschitz."""

    name = "cubic_norm"

    def __init__(self, coeff: float = 1.0, d: int = 2):
        super().__init__()
        if not coeff > 0:
            raise ValueError("coeff must be positive")
        self.coeff = float(coeff)
        self.d = int(d)

    def dim(self) -> int:
        return self.d

    def _value(self, x):
        return self.coeff / 3.0 * np.linalg.norm(x) ** 3

    def _gradient(self, x):
        return self.coeff * np.linalg.norm(x) * x

    def _hvp(self, x, v):
        r = np.linalg.norm(x)
        if r == 0.0:
            return np.zeros_like(x)
        return self.coeff * (r * v + x * (x @ v) / r)

    def _hessian(self, x):
        r = np.linalg.norm(x)
        if r == 0.0:
            return np.zeros((self.d, self.d))
        return self.coeff * (r * np.eye(self.d) + np.outer(x, x) / r)


class SeparableCubicProblem(Oracle):
    """``sum_i (coeffs_i/3) |x_i|^3``."""

    name = "separable_cubic"

    def __init__(self, coeffs):
        super().__init__()
        self.coeffs = np.asarray(coeffs, dtype=float).ravel()
        if not np.all(self.coeffs > 0):
            raise ValueError("all coefficients must be positive")

    @property
    def coeff_max(self) -> float:
        return float(self.coeffs.max())

    def dim(self) -> int:
        return self.coeffs.shape[0]

    def _value(self, x):
        return float(np.sum(self.coeffs * np.abs(x) ** 3) / 3.0)

    def _gradient(self, x):
        return self.coeffs * x * np.abs(x)

    def _hvp(self, x, v):
        return 2.0 * self.coeffs * np.abs(x) * v

    def _hessian(self, x):
        return np.diag(2.0 * self.coeffs * np.abs(x))


class QuadraticProblem(Oracle):
    """``x'Qx/2 - c'x`` with symmetric positive semidefinite ``Q``."""

    name = "quadratic"

    def __init__(self, Q, c=None):
        super().__init__()
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise ValueError("Q must be square")
        if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-12 * max(1.0, np.abs(Q).max()):
            raise ValueError("Q must be symmetric")
        eig = np.linalg.eigvalsh(Q)
        if eig[0] < -1e-12 * max(1.0, abs(eig[-1])):
            raise ValueError(f"Q must be positive semidefinite (min eigenvalue {eig[0]:.3e})")
        self.Q = 0.5 * (Q + Q.T)
        self.c = np.zeros(Q.shape[0]) if c is None else np.asarray(c, dtype=float).ravel()
        if self.c.shape[0] != Q.shape[0]:
            raise ValueError("c has the wrong dimension")
        self.eigenvalues = eig

    @classmethod
    def identity(cls, d: int) -> "QuadraticProblem":
        return cls(np.eye(d))

    def dim(self) -> int:
        return self.Q.shape[0]

    def _value(self, x):
        return 0.5 * x @ self.Q @ x - self.c @ x

    def _gradient(self, x):
        return self.Q @ x - self.c

    def _hvp(self, x, v):
        return self.Q @ v

    def _hessian(self, x):
        return self.Q.copy()

    def minimizer(self) -> np.ndarray:
        return np.linalg.lstsq(self.Q, self.c, rcond=None)[0]


def directional_curvature(oracle: Oracle, x, g=None) -> float:
    """``<g, H g> / |g|^2`` along the gradient (uses one HVP)."""
    if g is None:
        g = oracle.gradient(x)
    gg = float(g @ g)
    if gg == 0.0:
        return 0.0
    return float(g @ oracle.hvp(x, g)) / gg
