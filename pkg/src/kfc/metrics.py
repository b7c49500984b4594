"""Evaluation criteria: normalized mutual information, misclassification, RMSE."""

from __future__ import annotations

import numpy as np

from .errors import DegeneratePartition, LengthMismatch


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape:
        raise LengthMismatch(f"lengths {a.size} and {b.size} differ")
    if a.size == 0:
        raise LengthMismatch("empty input")
    return a, b


def contingency(S, S_prime) -> np.ndarray:
    """Counts n_{j,l} of observations in cluster j of S and cluster l of S'."""
    S, S_prime = _pair(S, S_prime)
    _, a = np.unique(S, return_inverse=True)
    _, b = np.unique(S_prime, return_inverse=True)
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a, b), 1.0)
    return table


def nmi(S, S_prime) -> float:
    """Normalized mutual information between two labelings of the same points.

    Labels are arbitrary hashable ids; only the induced partitions matter.
    Natural logarithms are used, with 0 log 0 = 0. Raises
    ``DegeneratePartition`` when either side has a single cluster, since the
    normalizing entropy is then zero.
    """
    table = contingency(S, S_prime)
    n = table.sum()
    nj = table.sum(axis=1)
    nl = table.sum(axis=0)
    if len(nj) < 2 or len(nl) < 2:
        raise DegeneratePartition("NMI is undefined for a single-cluster partition")
    nz = table > 0
    outer = np.outer(nj, nl)
    num = np.sum(table[nz] * np.log(n * table[nz] / outer[nz]))
    hj = np.sum(nj * np.log(nj / n))
    hl = np.sum(nl * np.log(nl / n))
    return float(num / np.sqrt(hj * hl))


def misclassification(yhat, y) -> float:
    yhat, y = _pair(yhat, y)
    return float(np.mean(yhat != y))


def rmse(yhat, y) -> float:
    yhat, y = _pair(yhat, y)
    diff = np.asarray(yhat, dtype=float) - np.asarray(y, dtype=float)
    return float(np.sqrt(np.mean(diff * diff)))
