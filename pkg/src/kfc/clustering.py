"""K-means under a Bregman divergence.

Lloyd iterations with random restarts. Recentering uses the arithmetic mean,
which minimizes the within-cluster average divergence for every Bregman
divergence, so the empirical distortion never increases.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .bregman import Divergence, in_domain, pairwise
from .errors import DimensionMismatch, DomainError, InvalidK

SeedLike = int | np.random.SeedSequence | None


@dataclass(frozen=True)
class Centroids:
    div: Divergence
    centers: np.ndarray

    @property
    def K(self) -> int:
        return self.centers.shape[0]


@dataclass(frozen=True)
class KMeansResult:
    centroids: Centroids
    labels: np.ndarray
    distortion: float
    iterations: int
    restart_index: int
    # distortion after the initial assignment and after every iteration
    history: tuple[float, ...] = ()
    restart_distortions: tuple[float, ...] = field(default=(), compare=False)

    @property
    def K(self) -> int:
        return self.centroids.K


def _seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def assign(centroids: Centroids, x) -> np.ndarray | int:
    """Index of the closest centroid; ties go to the smallest index.

    Accepts one point (returns an int) or an (n, d) matrix (returns labels).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    X = np.atleast_2d(x) if x.ndim else x.reshape(1, 1)
    if X.shape[1] != centroids.centers.shape[1]:
        raise DimensionMismatch(f"point dimension {X.shape[1]} vs centroid dimension {centroids.centers.shape[1]}")
    labels = pairwise(centroids.div, X, centroids.centers).argmin(axis=1)
    return int(labels[0]) if single else labels


def distortion(X, centroids: Centroids) -> float:
    """Empirical distortion: mean over rows of the divergence to the closest centroid."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != centroids.centers.shape[1]:
        raise DimensionMismatch("data and centroids differ in dimension")
    return float(pairwise(centroids.div, X, centroids.centers).min(axis=1).mean())


def _recenter(X: np.ndarray, labels: np.ndarray, D: np.ndarray, K: int) -> np.ndarray:
    """Cluster means; an empty cluster takes over the worst-served point."""
    labels = labels.copy()
    counts = np.bincount(labels, minlength=K)
    if np.any(counts == 0):
        own = D[np.arange(len(X)), labels].copy()
        for k in np.flatnonzero(counts == 0):
            movable = counts[labels] > 1
            i = int(np.flatnonzero(movable)[np.argmax(own[movable])])
            counts[labels[i]] -= 1
            labels[i] = k
            counts[k] = 1
            own[i] = 0.0
    centers = np.zeros((K, X.shape[1]))
    np.add.at(centers, labels, X)
    return centers / counts[:, None]


def _lloyd(X: np.ndarray, K: int, div: Divergence, max_iter: int, rng: np.random.Generator):
    n = len(X)
    rows = np.arange(n)
    centers = X[rng.choice(n, size=K, replace=False)].copy()
    D = pairwise(div, X, centers, check=False)
    labels = D.argmin(axis=1)
    history = [float(D[rows, labels].mean())]
    it = 0
    while it < max_iter:
        it += 1
        centers = _recenter(X, labels, D, K)
        D = pairwise(div, X, centers, check=False)
        new = D.argmin(axis=1)
        w = float(D[rows, new].mean())
        prev = history[-1]
        history.append(w)
        changed = bool(np.any(new != labels))
        labels = new
        if not changed:
            break
        # guard against cycling among tied assignments
        if abs(prev - w) <= 1e-10 * max(abs(prev), 1e-300):
            break
    return centers, labels, history[-1], it, tuple(history)


def kmeans_fit(
    X,
    K: int,
    div: Divergence | str = Divergence.EUCLID,
    restarts: int = 10,
    max_iter: int = 100,
    seed: SeedLike = 0,
) -> KMeansResult:
    """Bregman K-means keeping the restart with the smallest distortion.

    Centroids are initialized by drawing K distinct data points. Each restart
    owns an RNG stream spawned from ``seed``, so results do not depend on
    evaluation order.
    """
    div = Divergence.parse(div)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not 1 <= K <= n:
        raise InvalidK(f"K={K} must satisfy 1 <= K <= n={n}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if not in_domain(div, X, interior_required=True):
        raise DomainError(f"data not interior to the {div.value} domain; repair it first")

    best = None
    scores = []
    for r, ss in enumerate(_seed_sequence(seed).spawn(restarts)):
        centers, labels, w, it, hist = _lloyd(X, K, div, max_iter, np.random.default_rng(ss))
        scores.append(w)
        if best is None or w < best.distortion:
            best = KMeansResult(Centroids(div, centers), labels, w, it, r, hist)
    return replace(best, restart_distortions=tuple(scores))
