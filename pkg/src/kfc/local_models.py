"""Per-cluster predictors: least squares and IRLS logistic regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch

CLAMP = 1e-6


@dataclass(frozen=True)
class LinearModel:
    intercept: float
    weights: np.ndarray

    def decision(self, X) -> np.ndarray:
        X = _rows(X, len(self.weights))
        return self.intercept + X @ self.weights

    def predict(self, X) -> np.ndarray:
        return self.decision(X)


@dataclass(frozen=True)
class LogisticModel:
    intercept: float
    weights: np.ndarray
    converged: bool = True

    def decision(self, X) -> np.ndarray:
        X = _rows(X, len(self.weights))
        return self.intercept + X @ self.weights

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision(X))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) > 0.5).astype(float)


def _rows(X, d: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim <= 1:
        X = X.reshape(1, -1) if X.size == d else X.reshape(-1, 1)
    if X.shape[1] != d:
        raise DimensionMismatch(f"expected {d} features, got {X.shape[1]}")
    return X


def predict_local(model: LinearModel | LogisticModel, x):
    """Linear prediction, or the class-1 probability for a logistic model."""
    X = np.asarray(x, dtype=float)
    single = X.ndim <= 1 and X.size == len(model.weights)
    out = model.predict_proba(X) if isinstance(model, LogisticModel) else model.predict(X)
    return float(out[0]) if single else out


def fit_linear(X, y) -> LinearModel:
    """Ordinary least squares with intercept.

    Solved on centered data with an SVD-based solver; rank-deficient designs
    get the minimum-norm slope vector.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    xm = X.mean(axis=0)
    ym = y.mean()
    Xc = X - xm
    yc = y - ym
    if X.shape[1] == 0 or not np.any(Xc):
        w = np.zeros(X.shape[1])
    else:
        w = np.linalg.lstsq(Xc, yc, rcond=None)[0]
    return LinearModel(float(ym - xm @ w), w)


def _loglik(z: np.ndarray, y: np.ndarray) -> float:
    # sum y*z - log(1 + e^z), overflow-safe
    return float(np.sum(y * z - np.logaddexp(0.0, z)))


def fit_logistic(X, y, max_iter: int = 50, tol: float = 1e-8, cap: float = 1e3,
                 trace: list | None = None) -> LogisticModel:
    """Bernoulli maximum likelihood by iteratively reweighted least squares.

    Newton steps are halved until the log-likelihood does not decrease.
    ``converged`` is False when the iteration budget runs out, the parameter
    norm exceeds ``cap``, or the fitted probabilities saturate at the labels
    (separable data, no finite maximizer). If ``trace`` is a list, the
    log-likelihood after each iteration is appended to it.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    rate = y.mean()
    if rate in (0.0, 1.0):
        p = min(max(rate, CLAMP), 1.0 - CLAMP)
        return LogisticModel(float(np.log(p / (1.0 - p))), np.zeros(d), True)

    A = np.hstack([np.ones((n, 1)), X])
    theta = np.zeros(d + 1)
    z = A @ theta
    ll = _loglik(z, y)
    if trace is not None:
        trace.append(ll)
    converged = False
    for _ in range(max_iter):
        p = expit(z)
        w = p * (1.0 - p)
        if np.all(np.abs(y - p) < 1e-10):
            break  # saturated: separable sample
        sw = np.sqrt(np.maximum(w, 1e-300))
        step = np.linalg.lstsq(A * sw[:, None], (y - p) / sw, rcond=None)[0]
        t = 1.0
        while True:
            cand = theta + t * step
            zc = A @ cand
            llc = _loglik(zc, y)
            if llc >= ll or t < 1e-10:
                break
            t *= 0.5
        if llc < ll:
            break
        change = float(np.max(np.abs(cand - theta)))
        theta, z, ll = cand, zc, llc
        if trace is not None:
            trace.append(ll)
        if np.linalg.norm(theta) > cap:
            break
        if change < tol:
            converged = True
            break
    if converged and np.all(np.abs(y - expit(z)) < 1e-10):
        converged = False
    return LogisticModel(float(theta[0]), theta[1:].copy(), converged)
