"""scikit-learn compatible front ends.

:class:`CasualCubicLogisticRegression` fits an l2-regularized logistic model
with any of the deterministic methods; :class:`OracleMinimizer` wraps a
generic oracle in the same fit/get_params shape.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import baselines, deterministic
from .oracle import Budgets, Oracle
from .problems import LogisticProblem

_DETERMINISTIC = {
    "cacun": lambda o, x0, H, alpha, b: deterministic.run_cacun(o, x0, H, b),
    "acc_cacun": lambda o, x0, H, alpha, b: deterministic.run_acc_cacun(o, x0, H, budgets=b),
    "cacuadan": lambda o, x0, H, alpha, b: deterministic.run_cacuadan(o, x0, H, b),
    "cacuadan_plus": lambda o, x0, H, alpha, b: deterministic.run_cacuadan_plus(o, x0, H, b),
    "cacuadgd": lambda o, x0, H, alpha, b: deterministic.run_cacuadgd(o, x0, H, alpha, b),
    "cubic_newton": lambda o, x0, H, alpha, b: baselines.run_cubic_newton(o, x0, H, b),
    "adan": lambda o, x0, H, alpha, b: baselines.run_adan(o, x0, H, b),
    "adgd": lambda o, x0, H, alpha, b: baselines.run_adgd(o, x0, budgets=b),
}


def _run(method, oracle, x0, H, alpha, max_iter, tol):
    if method not in _DETERMINISTIC:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(_DETERMINISTIC)}")
    return _DETERMINISTIC[method](oracle, x0, H, alpha, Budgets(max_iters=max_iter, grad_tol=tol))


class OracleMinimizer(BaseEstimator):
    """Minimize an :class:`Oracle`; ``fit(oracle, x0=None)`` stores ``x_`` and ``trace_``."""

    def __init__(self, method: str = "cacuadgd", H: float = 1.0, alpha: float = 0.7,
                 max_iter: int = 1000, tol: float = 1e-9):
        self.method = method
        self.H = H
        self.alpha = alpha
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, oracle: Oracle, x0=None):
        if not isinstance(oracle, Oracle):
            raise TypeError("fit expects an Oracle instance")
        x0 = np.zeros(oracle.dim()) if x0 is None else np.asarray(x0, dtype=float)
        self.trace_ = _run(self.method, oracle, x0, self.H, self.alpha, self.max_iter, self.tol)
        self.x_ = self.trace_.x_final
        self.n_iter_ = len(self.trace_) - 1
        self.fun_ = self.trace_.records[-1].f
        return self


class CasualCubicLogisticRegression(ClassifierMixin, BaseEstimator):
    """Binary logistic regression fitted by a casual cubic method.

    Parameters
    ----------
    method : one of ``cacun``, ``acc_cacun``, ``cacuadan``, ``cacuadan_plus``,
        ``cacuadgd``, ``cubic_newton``, ``adan``, ``adgd``.
    l2 : ridge strength added as ``l2/2 |w|^2``.
    H : regularization constant for the methods that need one; ``None`` uses
        the data-driven bound for the cubic Newton family and 1 for the
        adaptive ones.
    """

    def __init__(self, method: str = "cacuadgd", l2: float = 1e-4, H: Optional[float] = None,
                 alpha: float = 0.7, max_iter: int = 500, tol: float = 1e-8):
        self.method = method
        self.l2 = l2
        self.H = H
        self.alpha = alpha
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        X, y = check_X_y(X, y, accept_sparse="csr", dtype=np.float64)
        check_classification_targets(y)
        self._encoder = LabelEncoder().fit(y)
        self.classes_ = self._encoder.classes_
        if len(self.classes_) != 2:
            raise ValueError(f"binary targets required, got {len(self.classes_)} classes")
        b = self._encoder.transform(y).astype(float)
        problem = LogisticProblem(X, b, reg=self.l2)
        H = self.H
        if H is None:
            if self.method in ("cacun", "acc_cacun", "cubic_newton"):
                from .data import estimate_H_logistic
                H = max(estimate_H_logistic(problem.A), 1e-12)
            else:
                H = 1.0
        self.trace_ = _run(self.method, problem, np.zeros(X.shape[1]), H, self.alpha,
                           self.max_iter, self.tol)
        self.coef_ = self.trace_.x_final
        self.n_features_in_ = X.shape[1]
        self.n_iter_ = len(self.trace_) - 1
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, accept_sparse="csr", dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return np.asarray(X @ self.coef_).ravel()

    def predict_proba(self, X):
        from scipy.special import expit

        p = expit(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return self.classes_[(self.decision_function(X) > 0).astype(int)]
