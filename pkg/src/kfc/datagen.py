"""Simulated clustered datasets: exponential, Poisson, geometric and Gaussian inputs.

Each cluster draws independent coordinates from its own distribution. In
regression the target is a cluster-specific linear function plus Gaussian
noise; in classification the same linear score, with an intercept that
centers it within each cluster, is thresholded at zero after adding noise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Task
from .errors import EmptyCluster, InvalidSpec


class Family(str, enum.Enum):
    EXP = "exp"
    POIS = "pois"
    GEOM = "geom"
    GAUSS2D = "gauss2d"
    GAUSS3D = "gauss3d"

    @classmethod
    def parse(cls, value: "Family | str") -> "Family":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(f.value for f in cls)
            raise ValueError(f"unknown family {value!r}; expected one of {names}") from None


ALL_FAMILIES = tuple(Family)

# per-cluster, per-coordinate parameters
EXP_RATE = ((0.05, 0.5), (0.5, 0.05), (0.1, 0.1))
POIS_MEAN = ((3, 11), (10, 2), (13, 12))
GEOM_P = ((0.07, 0.35), (0.55, 0.07), (0.15, 0.15))
GAUSS2D = (((4, 12), (1, 1)), ((22, 9), (2, 1)), ((10, 5), (2, 2)))
GAUSS3D = (((6, 14, 6), (1, 2, 1)), ((5, 10, 15), (2, 1, 2)), ((8, 6, 14), (1, 1, 2)))

SLOPES_2D = ((-8.0, 3.0), (-6.0, -5.0), (5.0, -7.0))
SLOPES_3D = ((-10.0, 3.0, 7.0), (7.0, 5.0, -12.0), (6.0, -11.0, 10.0))
REGRESSION_INTERCEPTS = (-15.0, 25.0, -10.0)
NOISE_VAR = 10.0
MAX_K = 3


@dataclass(frozen=True)
class DatasetSpec:
    family: Family
    task: Task = Task.REGRESSION
    n_train: int = 500  # per cluster
    n_test: int = 150  # per cluster
    K: int = 3
    seed: int | np.random.SeedSequence = 0
    noise_var: float = NOISE_VAR

    def __post_init__(self):
        try:
            object.__setattr__(self, "family", Family.parse(self.family))
            object.__setattr__(self, "task", Task.parse(self.task))
        except ValueError as exc:
            raise InvalidSpec(str(exc)) from None
        if not 1 <= self.K <= MAX_K:
            raise InvalidSpec(f"K={self.K}: only the {MAX_K} tabulated clusters are available")
        if self.n_train < 1 or self.n_test < 1:
            raise InvalidSpec("cluster sizes must be positive")
        if self.noise_var < 0:
            raise InvalidSpec("noise variance must be >= 0")

    @property
    def d(self) -> int:
        return 3 if self.family is Family.GAUSS3D else 2

    def slopes(self) -> np.ndarray:
        table = SLOPES_3D if self.family is Family.GAUSS3D else SLOPES_2D
        return np.asarray(table[: self.K])


def sample_inputs(family: Family, k: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws of cluster ``k`` (0-based); coordinates independent."""
    if family is Family.EXP:
        return rng.exponential(1.0 / np.asarray(EXP_RATE[k]), size=(n, 2))
    if family is Family.POIS:
        return rng.poisson(POIS_MEAN[k], size=(n, 2)).astype(float)
    if family is Family.GEOM:
        # support {1, 2, ...}, mean 1/p
        return rng.geometric(GEOM_P[k], size=(n, 2)).astype(float)
    mu, sd = (GAUSS3D if family is Family.GAUSS3D else GAUSS2D)[k]
    return rng.normal(mu, sd, size=(n, len(mu)))


def balanced_intercepts(X, partition, betas) -> np.ndarray:
    """Intercepts ``-<beta_k, mean of cluster k>`` that center each cluster's score at zero."""
    X = np.asarray(X, dtype=float)
    partition = np.asarray(partition, dtype=int)
    betas = np.asarray(betas, dtype=float)
    out = np.empty(len(betas))
    for k, beta in enumerate(betas):
        members = X[partition == k]
        if len(members) == 0:
            raise EmptyCluster(f"cluster {k} has no points")
        out[k] = -members.mean(axis=0) @ beta
    return out


def classification_targets(scores, noise_sd: float, seed=None) -> np.ndarray:
    """Label 1 iff score + N(0, noise_sd^2) noise is positive."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    scores = np.asarray(scores, dtype=float)
    z = scores + rng.normal(0.0, noise_sd, size=scores.shape)
    return (z > 0).astype(float)


def _draw(spec: DatasetSpec, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    X = np.vstack([sample_inputs(spec.family, k, n, rng) for k in range(spec.K)])
    part = np.repeat(np.arange(spec.K), n)
    return X, part


def generate(spec: DatasetSpec) -> tuple[Dataset, Dataset]:
    """Train and test sets for ``spec``, each from its own RNG stream.

    Classification intercepts are computed from the training inputs and
    reused for the test set so both follow one labelling rule.
    """
    ss = spec.seed if isinstance(spec.seed, np.random.SeedSequence) else np.random.SeedSequence(spec.seed)
    train_ss, test_ss = ss.spawn(2)
    rng_tr, rng_te = np.random.default_rng(train_ss), np.random.default_rng(test_ss)
    X_tr, p_tr = _draw(spec, spec.n_train, rng_tr)
    X_te, p_te = _draw(spec, spec.n_test, rng_te)
    betas = spec.slopes()
    sd = float(np.sqrt(spec.noise_var))

    if spec.task is Task.REGRESSION:
        b0 = np.asarray(REGRESSION_INTERCEPTS[: spec.K])
    else:
        b0 = balanced_intercepts(X_tr, p_tr, betas)

    def targets(X, part, rng):
        score = b0[part] + np.einsum("ij,ij->i", X, betas[part])
        if spec.task is Task.REGRESSION:
            return score + rng.normal(0.0, sd, size=len(X))
        return classification_targets(score, sd, rng)

    train = Dataset(X_tr, targets(X_tr, p_tr, rng_tr), spec.task, p_tr)
    test = Dataset(X_te, targets(X_te, p_te, rng_te), spec.task, p_te)
    return train, test
