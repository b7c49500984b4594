"""Closed-form Bregman divergences and domain repair.

Four generators are supported::

    euclid   phi(x) = sum x_i^2                      C = R^d
    gkl      phi(x) = sum x_i ln x_i                 C = (0, inf)^d
    logit    phi(x) = sum x_i ln x_i + (1-x_i) ln(1-x_i)   C = (0, 1)^d
    itakura  phi(x) = -sum ln x_i                    C = (0, inf)^d

The first argument of a divergence may lie on the closure of C wherever the
closed form stays finite (0 ln 0 = 0); the second argument must be interior.
All functions broadcast over leading axes and reduce over the last one.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .data import Dataset
from .errors import DegenerateRow, DimensionMismatch, DomainError, EmptyResult

EPS0 = 1e-6


class Divergence(str, enum.Enum):
    EUCLID = "euclid"
    GKL = "gkl"
    LOGIT = "logit"
    ITAKURA = "itakura"

    @classmethod
    def parse(cls, value: "Divergence | str") -> "Divergence":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(d.value for d in cls)
            raise ValueError(f"unknown divergence {value!r}; expected one of {names}") from None


ALL_DIVERGENCES = tuple(Divergence)

# open interval (lo, hi) per coordinate
_BOUNDS = {
    Divergence.EUCLID: (-np.inf, np.inf),
    Divergence.GKL: (0.0, np.inf),
    Divergence.LOGIT: (0.0, 1.0),
    Divergence.ITAKURA: (0.0, np.inf),
}


def domain_bounds(div: Divergence | str) -> tuple[float, float]:
    return _BOUNDS[Divergence.parse(div)]


def in_domain(div: Divergence | str, x, interior_required: bool = True) -> bool:
    """True iff every coordinate of ``x`` is admissible for ``div``.

    With ``interior_required=False`` the closure points where the closed form
    is still finite are accepted (zero for gkl, 0 and 1 for logit).
    """
    div = Divergence.parse(div)
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        return False
    lo, hi = _BOUNDS[div]
    if interior_required or div in (Divergence.EUCLID, Divergence.ITAKURA):
        return bool(np.all((x > lo) & (x < hi)))
    return bool(np.all((x >= lo) & (x <= hi)))


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[None] if x.ndim == 0 else x


def _check(div, x, y=None):
    if not in_domain(div, x, interior_required=False):
        raise DomainError(f"first argument outside the domain of {div.value}")
    if y is not None:
        if not in_domain(div, y, interior_required=True):
            raise DomainError(f"second argument not interior to the domain of {div.value}")
        if x.shape[-1] != y.shape[-1]:
            raise DimensionMismatch(f"dimension {x.shape[-1]} vs {y.shape[-1]}")


def phi(div: Divergence | str, x):
    """Strictly convex generator of ``div`` evaluated at ``x``."""
    div = Divergence.parse(div)
    x = _as_points(x)
    _check(div, x)
    if div is Divergence.EUCLID:
        v = np.sum(x * x, axis=-1)
    elif div is Divergence.GKL:
        v = np.sum(xlogy(x, x), axis=-1)
    elif div is Divergence.LOGIT:
        v = np.sum(xlogy(x, x) + xlogy(1.0 - x, 1.0 - x), axis=-1)
    else:
        v = -np.sum(np.log(x), axis=-1)
    return v[()] if np.ndim(v) == 0 else v


def grad_phi(div: Divergence | str, y) -> np.ndarray:
    """Analytic gradient of the generator at an interior point."""
    div = Divergence.parse(div)
    y = _as_points(y)
    if not in_domain(div, y, interior_required=True):
        raise DomainError(f"gradient requires an interior point of {div.value}")
    if div is Divergence.EUCLID:
        return 2.0 * y
    if div is Divergence.GKL:
        return np.log(y) + 1.0
    if div is Divergence.LOGIT:
        return np.log(y) - np.log1p(-y)
    return -1.0 / y


def _divergence(div: Divergence, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Unchecked closed form; callers validate domains."""
    if div is Divergence.EUCLID:
        t = (x - y) ** 2
    elif div is Divergence.GKL:
        t = xlogy(x, x / y) - x + y
    elif div is Divergence.LOGIT:
        t = xlogy(x, x / y) + xlogy(1.0 - x, (1.0 - x) / (1.0 - y))
    else:
        r = x / y
        t = r - np.log(r) - 1.0
    # exact value is >= 0; clip cancellation noise
    return np.maximum(np.sum(t, axis=-1), 0.0)


def divergence(div: Divergence | str, x, y):
    """d_phi(x, y) from the closed form, broadcasting over leading axes."""
    div = Divergence.parse(div)
    x, y = _as_points(x), _as_points(y)
    _check(div, x, y)
    v = _divergence(div, x, y)
    return v[()] if np.ndim(v) == 0 else v


def pairwise(div: Divergence | str, X: np.ndarray, C: np.ndarray, check: bool = True) -> np.ndarray:
    """Matrix ``D[i, k] = d_phi(X[i], C[k])`` of shape (n, K)."""
    div = Divergence.parse(div)
    X = np.asarray(X, dtype=float)
    C = np.asarray(C, dtype=float)
    if check:
        _check(div, X, C)
    return _divergence(div, X[:, None, :], C[None, :, :])


class RepairStrategy(str, enum.Enum):
    NONE = "none"
    L1_NORMALIZE = "l1"
    SHIFT_POSITIVE = "shift"
    DROP_VIOLATIONS = "drop"


DEFAULT_REPAIR = {
    Divergence.EUCLID: RepairStrategy.NONE,
    Divergence.GKL: RepairStrategy.SHIFT_POSITIVE,
    Divergence.LOGIT: RepairStrategy.L1_NORMALIZE,
    Divergence.ITAKURA: RepairStrategy.SHIFT_POSITIVE,
}


@dataclass(frozen=True)
class RepairTransform:
    """Fitted domain repair; ``apply`` replays it on new points.

    The shift constant is fixed at fit time. After the strategy step every
    coordinate is clamped into ``[lo + eps0, hi - eps0]`` so that points
    outside the training range still land in the interior.
    """

    div: Divergence
    strategy: RepairStrategy
    shift: float = 0.0
    eps0: float = EPS0

    def apply(self, X) -> np.ndarray:
        X = np.array(X, dtype=float, ndmin=2)
        if self.strategy is RepairStrategy.L1_NORMALIZE:
            norms = np.abs(X).sum(axis=1, keepdims=True)
            if np.any(norms == 0):
                raise DegenerateRow("l1 normalization of a zero row")
            X = X / norms
        elif self.strategy is RepairStrategy.SHIFT_POSITIVE:
            X = X + self.shift
        return self.clamp(X)

    def clamp(self, X: np.ndarray) -> np.ndarray:
        lo, hi = _BOUNDS[self.div]
        if self.div is Divergence.EUCLID:
            return X
        return np.clip(X, lo + self.eps0, hi - self.eps0 if np.isfinite(hi) else np.inf)

    def to_dict(self) -> dict:
        return {"strategy": self.strategy.value, "shift": self.shift, "eps0": self.eps0}

    @classmethod
    def from_dict(cls, div: Divergence, d: dict) -> "RepairTransform":
        return cls(div, RepairStrategy(d["strategy"]), float(d["shift"]), float(d["eps0"]))


@dataclass(frozen=True)
class RepairResult:
    data: Dataset
    transform: RepairTransform
    dropped: int = 0


def repair_to_domain(
    data: Dataset | np.ndarray,
    div: Divergence | str,
    strategy: RepairStrategy | str | None = None,
    eps0: float = EPS0,
) -> RepairResult:
    """Map every row of ``data`` into the interior of the domain of ``div``.

    ``l1`` divides each row by its l1 norm, ``shift`` adds ``eps0 - min`` to
    all coordinates when a non-positive value exists, ``drop`` removes the
    offending rows. Without an explicit strategy the per-divergence default
    from ``DEFAULT_REPAIR`` is used.
    """
    div = Divergence.parse(div)
    if not isinstance(data, Dataset):
        data = Dataset(data)
    if data.n == 0:
        raise EmptyResult("cannot repair an empty dataset")
    strategy = DEFAULT_REPAIR[div] if strategy is None else RepairStrategy(strategy)
    X = data.X

    if strategy is RepairStrategy.DROP_VIOLATIONS:
        lo, hi = _BOUNDS[div]
        keep = np.all(np.isfinite(X) & (X > lo) & (X < hi), axis=1)
        if not keep.any():
            raise EmptyResult(f"every row violates the {div.value} domain")
        t = RepairTransform(div, strategy, 0.0, eps0)
        return RepairResult(data.subset(np.flatnonzero(keep)), t, int((~keep).sum()))

    shift = 0.0
    if strategy is RepairStrategy.SHIFT_POSITIVE and div is not Divergence.EUCLID:
        m = float(X.min())
        if m <= 0:
            shift = eps0 - m
    t = RepairTransform(div, strategy, shift, eps0)
    repaired = Dataset(t.apply(X), data.y, data.task, data.clusters)
    return RepairResult(repaired, t, 0)
