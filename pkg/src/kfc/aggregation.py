"""Consensus-based combination of M individual estimators.

Every combiner looks at the prediction vectors ``m(X_i)`` of an aggregation
sample and averages (regression) or votes (classification) the outputs
``Y_i`` of the points whose prediction vector agrees with ``m(x)``:

comb1
    exact agreement (classification) or agreement within ``epsilon`` for at
    least a fraction ``alpha`` of the estimators (regression)
comb2
    kernel weights on the distance between prediction vectors; Hamming
    distance for classification
comb3
    product kernel over the input distance and the prediction distance

Kernels act on a norm of their argument: l2 for gaussian, epanechnikov,
biweight and triweight, l1 for triangular, sup-norm for uniform. Gaussian
weights are rescaled per query by their largest value before normalizing,
which leaves every ratio unchanged and avoids 0/0 from underflow.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

import numpy as np

from .data import Task
from .errors import DimensionMismatch, EmptyGrid


class Kernel(str, enum.Enum):
    UNIFORM = "uniform"
    EPANECHNIKOV = "epanechnikov"
    GAUSSIAN = "gaussian"
    TRIANGULAR = "triangular"
    BIWEIGHT = "biweight"
    TRIWEIGHT = "triweight"

    @classmethod
    def parse(cls, value: "Kernel | str") -> "Kernel":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown kernel {value!r}; expected one of {names}") from None


class Method(str, enum.Enum):
    COMB1 = "comb1"
    COMB2 = "comb2"
    COMB3 = "comb3"

    @classmethod
    def parse(cls, value: "Method | str") -> "Method":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown method {value!r}; expected comb1, comb2 or comb3") from None


ALL_KERNELS = tuple(Kernel)

_NORM_ORD = {
    Kernel.UNIFORM: np.inf,
    Kernel.TRIANGULAR: 1,
    Kernel.GAUSSIAN: 2,
    Kernel.EPANECHNIKOV: 2,
    Kernel.BIWEIGHT: 2,
    Kernel.TRIWEIGHT: 2,
}
_POWER = {Kernel.EPANECHNIKOV: 1, Kernel.BIWEIGHT: 2, Kernel.TRIWEIGHT: 3}


def kernel_norm(kernel: Kernel, u: np.ndarray) -> np.ndarray:
    """The norm each kernel uses, taken over the last axis of ``u``."""
    a = np.abs(u)
    ord_ = _NORM_ORD[kernel]
    if ord_ == 1:
        return a.sum(axis=-1)
    if ord_ == 2:
        return np.sqrt(np.sum(a * a, axis=-1))
    return a.max(axis=-1)


def _profile(kernel: Kernel, r, h: float):
    """K(u / h) written in terms of r = ||u||."""
    r = np.asarray(r, dtype=float)
    if kernel is Kernel.UNIFORM:
        # compare r < h directly so the sup-norm kernel matches |d| < h exactly
        return (r < h).astype(float)
    with np.errstate(over="ignore", invalid="ignore"):
        t = r / h
        if kernel is Kernel.GAUSSIAN:
            return np.exp(-0.5 * t * t)
        if kernel is Kernel.TRIANGULAR:
            return np.clip(1.0 - t, 0.0, None)
        return np.clip(1.0 - t * t, 0.0, None) ** _POWER[kernel]


def kernel_eval(kernel: Kernel | str, u) -> float | np.ndarray:
    """Kernel value at ``u``; the last axis of ``u`` is the vector argument."""
    kernel = Kernel.parse(kernel)
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        u = u[None]
    v = _profile(kernel, kernel_norm(kernel, u), 1.0)
    return float(v) if np.ndim(v) == 0 else v


def _weights(kernel: Kernel, R: np.ndarray, h: float) -> np.ndarray:
    """Unnormalized weights K(u/h) per row of the norm matrix ``R``.

    Entries equal to ``inf`` are excluded. Gaussian rows are rescaled so the
    closest entry weighs 1.
    """
    if kernel is not Kernel.GAUSSIAN:
        return _profile(kernel, R, h)
    R2 = R * R
    m = R2.min(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", over="ignore"):
        t = (R2 - m) / h / h
    t = np.where(np.isfinite(m), t, np.inf)
    return np.exp(-0.5 * t)


@dataclass(frozen=True)
class AggregationSample:
    """Points ``X_i``, their prediction vectors ``m(X_i)`` and outputs ``Y_i``."""

    inputs: np.ndarray
    preds: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        P = np.asarray(self.preds, dtype=float)
        y = np.asarray(self.outputs, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if P.ndim == 1:
            P = P[:, None]
        if not (len(X) == len(P) == len(y)):
            raise DimensionMismatch("inputs, prediction vectors and outputs differ in length")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "preds", P)
        object.__setattr__(self, "outputs", y)

    @property
    def n(self) -> int:
        return len(self.outputs)

    @property
    def M(self) -> int:
        return self.preds.shape[1]


@dataclass(frozen=True)
class AggregationConfig:
    method: Method
    kernel: Kernel = Kernel.GAUSSIAN
    h: float | None = None
    epsilon: float | None = None
    alpha: float = 1.0
    alpha_in: float | None = None
    beta_pred: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        object.__setattr__(self, "kernel", Kernel.parse(self.kernel))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        d["kernel"] = self.kernel.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AggregationConfig":
        return cls(**d)


def _queries(mx, M: int) -> tuple[np.ndarray, bool]:
    mx = np.asarray(mx, dtype=float)
    single = mx.ndim <= 1
    mx = mx.reshape(1, -1) if single else mx
    if mx.shape[1] != M:
        raise DimensionMismatch(f"prediction vector length {mx.shape[1]} vs {M} estimators")
    return mx, single


def _inputs(x, d: int, q: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    x = x.reshape(1, -1) if x.ndim <= 1 else x
    if x.shape[1] != d:
        raise DimensionMismatch(f"input dimension {x.shape[1]} vs {d}")
    if len(x) != q:
        raise DimensionMismatch("number of inputs and prediction vectors differ")
    return x


def _vote(W: np.ndarray, y: np.ndarray, single: bool):
    out = (W @ (2.0 * y - 1.0) > 0).astype(float)
    return float(out[0]) if single else out


def _average(W: np.ndarray, y: np.ndarray, single: bool):
    s = W.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(s > 0, (W @ y) / s, 0.0)
    return float(out[0]) if single else out


def normalized(W: np.ndarray) -> np.ndarray:
    """Row-normalize weights; empty rows stay zero (0/0 = 0)."""
    s = W.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(s > 0, W / s, 0.0)


def _diff(P: np.ndarray, mx: np.ndarray) -> np.ndarray:
    return mx[:, None, :] - P[None, :, :]


def comb1_weights(sample: AggregationSample, mx, epsilon: float | None = None,
                  alpha: float = 1.0) -> np.ndarray:
    """Selection indicators: exact match when ``epsilon`` is None."""
    mx, _ = _queries(mx, sample.M)
    if epsilon is None:
        return np.all(sample.preds[None, :, :] == mx[:, None, :], axis=-1).astype(float)
    close = (np.abs(_diff(sample.preds, mx)) < epsilon).sum(axis=-1)
    need = np.ceil(sample.M * alpha - 1e-9)
    return (close >= need).astype(float)


def comb2_weights(sample: AggregationSample, mx, kernel: Kernel | str, h: float,
                  task: Task | str = Task.REGRESSION) -> np.ndarray:
    kernel = Kernel.parse(kernel)
    mx, _ = _queries(mx, sample.M)
    if Task.parse(task) is Task.CLASSIFICATION:
        R = (sample.preds[None, :, :] != mx[:, None, :]).sum(axis=-1).astype(float)
    else:
        R = kernel_norm(kernel, _diff(sample.preds, mx))
    return _weights(kernel, R, h)


def comb3_weights(sample: AggregationSample, x, mx, kernel: Kernel | str,
                  alpha_in: float, beta_pred: float) -> np.ndarray:
    kernel = Kernel.parse(kernel)
    mx, _ = _queries(mx, sample.M)
    x = _inputs(x, sample.inputs.shape[1], len(mx))
    Rx = kernel_norm(kernel, x[:, None, :] - sample.inputs[None, :, :])
    Rm = kernel_norm(kernel, _diff(sample.preds, mx))
    return _weights(kernel, Rx, alpha_in) * _weights(kernel, Rm, beta_pred)


def comb1_classify(sample: AggregationSample, mx):
    """Majority vote among points whose label vector equals ``mx``; 0 on ties or no match."""
    _, single = _queries(mx, sample.M)
    return _vote(comb1_weights(sample, mx), sample.outputs, single)


def comb2_classify(sample: AggregationSample, mx, kernel: Kernel | str = Kernel.GAUSSIAN, h: float = 1.0):
    """Sign of sum_i (2Y_i - 1) K(d_H(m(X_i), mx) / h), with 0 for a zero sum."""
    _, single = _queries(mx, sample.M)
    W = comb2_weights(sample, mx, kernel, h, Task.CLASSIFICATION)
    return _vote(W, sample.outputs, single)


def comb3_classify(sample: AggregationSample, x, mx, kernel: Kernel | str = Kernel.GAUSSIAN,
                   alpha_in: float = 1.0, beta_pred: float = 1.0):
    _, single = _queries(mx, sample.M)
    W = comb3_weights(sample, x, mx, kernel, alpha_in, beta_pred)
    return _vote(W, sample.outputs, single)


def comb1_regress(sample: AggregationSample, mx, epsilon: float, alpha: float = 1.0):
    """Mean of Y over points where at least ``M * alpha`` estimators agree within ``epsilon``."""
    _, single = _queries(mx, sample.M)
    W = comb1_weights(sample, mx, epsilon, alpha)
    return _average(W, sample.outputs, single)


def comb2_regress(sample: AggregationSample, mx, kernel: Kernel | str = Kernel.GAUSSIAN, h: float = 1.0):
    _, single = _queries(mx, sample.M)
    W = comb2_weights(sample, mx, kernel, h, Task.REGRESSION)
    return _average(W, sample.outputs, single)


def comb3_regress(sample: AggregationSample, x, mx, kernel: Kernel | str = Kernel.GAUSSIAN,
                  alpha_in: float = 1.0, beta_pred: float = 1.0):
    _, single = _queries(mx, sample.M)
    W = comb3_weights(sample, x, mx, kernel, alpha_in, beta_pred)
    return _average(W, sample.outputs, single)


def combine(sample: AggregationSample, config: AggregationConfig, task: Task | str, x, mx):
    """Apply ``config`` to queries ``x`` with prediction vectors ``mx``."""
    task = Task.parse(task)
    cls = task is Task.CLASSIFICATION
    m = config.method
    if m is Method.COMB1:
        if cls:
            return comb1_classify(sample, mx)
        return comb1_regress(sample, mx, config.epsilon, config.alpha)
    if m is Method.COMB2:
        f = comb2_classify if cls else comb2_regress
        return f(sample, mx, config.kernel, config.h)
    f = comb3_classify if cls else comb3_regress
    return f(sample, x, mx, config.kernel, config.alpha_in, config.beta_pred)


# -- tuning ------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Bandwidth grids for cross-validation.

    1-D grid (comb1 epsilon, comb2 h): ``size`` values, the sentinel
    ``floor`` followed by ``size - 1`` log-spaced values in ``[low, high]``.
    2-D grid (comb3): the same construction per axis with ``size_2d`` and
    ``high_2d``. Explicit ``values`` / ``values_2d`` override the construction.
    """

    size: int = 300
    low: float = 1e-3
    high: float = 5.0
    size_2d: int = 50
    high_2d: float = 10.0
    floor: float = 1e-300
    values: tuple[float, ...] | None = None
    values_2d: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def grid(self) -> np.ndarray:
        if self.values is not None:
            g = np.asarray(self.values, dtype=float)
        else:
            g = np.concatenate([[self.floor], np.geomspace(self.low, self.high, max(self.size - 1, 0))])
        return _clean(g)

    def grid_2d(self) -> tuple[np.ndarray, np.ndarray]:
        if self.values_2d is not None:
            a, b = self.values_2d
            return _clean(np.asarray(a, dtype=float)), _clean(np.asarray(b, dtype=float))
        axis = np.concatenate([[self.floor], np.geomspace(self.low, self.high_2d, max(self.size_2d - 1, 0))])
        return _clean(axis), _clean(axis)


def _clean(g: np.ndarray) -> np.ndarray:
    g = np.unique(g[np.isfinite(g) & (g > 0)])
    if g.size == 0:
        raise EmptyGrid("bandwidth grid has no positive values")
    return g


def fold_ids(n: int, folds: int, seed=0) -> np.ndarray:
    perm = np.random.default_rng(seed).permutation(n)
    ids = np.empty(n, dtype=int)
    ids[perm] = np.arange(n) % folds
    return ids


def _blocks(n: int, width: int, budget: int = 3_000_000):
    step = max(1, budget // max(width, 1))
    for start in range(0, n, step):
        yield slice(start, min(n, start + step))


def _masked(R: np.ndarray, fold: np.ndarray, rows: slice) -> np.ndarray:
    R = R.copy()
    R[fold[rows][:, None] == fold[None, :]] = np.inf
    return R


def _errors(pred: np.ndarray, y: np.ndarray, cls: bool) -> np.ndarray:
    """Summed loss over the last axis of ``pred`` rows (rows on axis 0)."""
    if cls:
        return (pred != y.reshape((-1,) + (1,) * (pred.ndim - 1))).sum(axis=0).astype(float)
    d = pred - y.reshape((-1,) + (1,) * (pred.ndim - 1))
    return (d * d).sum(axis=0)


def _cv_comb2(sample, kernel, grid, fold, cls):
    P, y, n = sample.preds, sample.outputs, sample.n
    loss = np.zeros(len(grid))
    if cls:
        # Hamming distances take values 0..M: tabulate signed label mass per distance
        M = sample.M
        levels = np.arange(M + 1, dtype=float)
        s = 2.0 * y - 1.0
        for rows in _blocks(n, n * M):
            dh = (P[rows][:, None, :] != P[None, :, :]).sum(axis=-1)
            dh[fold[rows][:, None] == fold[None, :]] = -1
            signed = np.stack([(dh == lv) @ s for lv in range(M + 1)], axis=1)
            present = np.stack([(dh == lv).any(axis=1) for lv in range(M + 1)], axis=1)
            R = np.where(present, levels[None, :], np.inf)
            for g, h in enumerate(grid):
                score = (signed * _weights(kernel, R, h)).sum(axis=1)
                loss[g] += np.sum((score > 0).astype(float) != y[rows])
        return loss / n
    # float32 keeps the n x n kernel passes cheap; selection only needs relative errors
    T = np.stack([y, np.ones(n)], axis=1).astype(np.float32)
    for rows in _blocks(n, n * sample.M):
        R = _masked(kernel_norm(kernel, P[rows][:, None, :] - P[None, :, :]), fold, rows)
        if kernel is Kernel.GAUSSIAN:
            R2 = R * R
            m = R2.min(axis=1, keepdims=True)
            with np.errstate(invalid="ignore"):
                base = np.where(np.isfinite(m), R2 - m, np.inf).astype(np.float32)
        else:
            base = R.astype(np.float32)
        for g, h in enumerate(grid):
            if kernel is Kernel.GAUSSIAN:
                with np.errstate(over="ignore"):
                    coef = -0.5 / h / h
                W = (base == 0).astype(np.float32) if coef < -1e30 else np.exp(base * np.float32(coef))
            else:
                W = _profile(kernel, base, h).astype(np.float32)
            num, den = (W @ T).T
            with np.errstate(invalid="ignore", divide="ignore"):
                pred = np.where(den > 0, num.astype(float) / den, 0.0)
            d = pred - y[rows]
            loss[g] += float(d @ d)
    return loss / n


def _cv_comb1_regress(sample, grid, fold):
    """CV loss over (epsilon, alpha) with alpha in {1/M, ..., 1}.

    A point is selected when the t-th smallest coordinate gap is below
    epsilon, t = ceil(M * alpha); sorting those gaps per query gives the
    selected set for every epsilon at once.
    """
    P, y, n, M = sample.preds, sample.outputs, sample.n, sample.M
    loss = np.zeros((len(grid), M))
    for rows in _blocks(n, n * M):
        gaps = np.sort(np.abs(P[rows][:, None, :] - P[None, :, :]), axis=-1)
        same = fold[rows][:, None] == fold[None, :]
        for t in range(M):
            v = np.where(same, np.inf, gaps[:, :, t])
            order = np.argsort(v, axis=1, kind="stable")
            vs = np.take_along_axis(v, order, axis=1)
            cy = np.concatenate([np.zeros((len(vs), 1)), np.cumsum(y[order], axis=1)], axis=1)
            for r in range(len(vs)):
                cnt = np.searchsorted(vs[r], grid, side="left")
                pred = np.where(cnt > 0, cy[r, cnt] / np.maximum(cnt, 1), 0.0)
                d = pred - y[rows][r]
                loss[:, t] += d * d
    return loss / n


def _grid_weights(kernel, R, grid, dtype):
    """Weights for every bandwidth in ``grid``, stacked on axis 1: (b, len(grid), n)."""
    if kernel is Kernel.GAUSSIAN:
        # same row stabilization as _weights, computed once for the whole grid
        R2 = R * R
        m = R2.min(axis=1, keepdims=True)
        with np.errstate(invalid="ignore"):
            base = np.where(np.isfinite(m), R2 - m, np.inf).astype(dtype)
        out = np.empty((R.shape[0], len(grid), R.shape[1]), dtype=dtype)
        for j, h in enumerate(grid):
            with np.errstate(over="ignore"):
                coef = -0.5 / h / h
            if coef < -1e30:
                out[:, j] = base == 0
            else:
                np.exp(base * dtype(coef), out=out[:, j])
        return out
    return np.stack([_profile(kernel, R, h) for h in grid], axis=1).astype(dtype)


def _cv_comb3(sample, kernel, ga, gb, fold, cls):
    X, P, y, n = sample.inputs, sample.preds, sample.outputs, sample.n
    t = 2.0 * y - 1.0 if cls else y
    # float64: products of two small factors must not underflow where prediction would not
    dtype = np.float64
    loss = np.zeros((len(ga), len(gb)))
    for rows in _blocks(n, n * max(len(ga), len(gb), X.shape[1], sample.M)):
        Rx = _masked(kernel_norm(kernel, X[rows][:, None, :] - X[None, :, :]), fold, rows)
        Rm = _masked(kernel_norm(kernel, P[rows][:, None, :] - P[None, :, :]), fold, rows)
        A = _grid_weights(kernel, Rx, ga, dtype)  # (b, na, n)
        B = _grid_weights(kernel, Rm, gb, dtype)  # (b, nb, n)
        num = A @ (B * t.astype(dtype)[None, None, :]).transpose(0, 2, 1)
        if cls:
            pred = (num > 0).astype(float)
        else:
            den = A @ B.transpose(0, 2, 1)
            with np.errstate(invalid="ignore", divide="ignore"):
                pred = np.where(den > 0, num.astype(float) / den, 0.0)
        loss += _errors(pred, y[rows], cls)
    return loss / n


def cv_curve(sample: AggregationSample, method: Method | str, kernel: Kernel | str = Kernel.GAUSSIAN,
             task: Task | str = Task.REGRESSION, grid: GridSpec | None = None, folds: int = 5,
             seed=0):
    """Cross-validated loss over the grid; returns ``(loss, axes)``.

    Loss is the misclassification rate or the mean squared error of held-out
    predictions. ``axes`` holds the parameter values along each loss axis.
    """
    method, kernel, task = Method.parse(method), Kernel.parse(kernel), Task.parse(task)
    grid = grid or GridSpec()
    n = sample.n
    if not 2 <= folds <= n:
        raise ValueError(f"need 2 <= folds <= n, got folds={folds}, n={n}")
    fold = fold_ids(n, folds, seed)
    cls = task is Task.CLASSIFICATION
    if method is Method.COMB1:
        if cls:
            return np.zeros(1), ()
        g = grid.grid()
        return _cv_comb1_regress(sample, g, fold), (g, np.arange(1, sample.M + 1) / sample.M)
    if method is Method.COMB2:
        g = grid.grid()
        return _cv_comb2(sample, kernel, g, fold, cls), (g,)
    ga, gb = grid.grid_2d()
    return _cv_comb3(sample, kernel, ga, gb, fold, cls), (ga, gb)


def tune(sample: AggregationSample, method: Method | str, kernel: Kernel | str = Kernel.GAUSSIAN,
         task: Task | str = Task.REGRESSION, grid: GridSpec | None = None, folds: int = 5,
         seed=0) -> AggregationConfig:
    """Grid search by k-fold CV; ties resolve to the smallest parameter."""
    method, kernel = Method.parse(method), Kernel.parse(kernel)
    loss, axes = cv_curve(sample, method, kernel, task, grid, folds, seed)
    if method is Method.COMB1 and not axes:
        return AggregationConfig(method, Kernel.UNIFORM)
    # np.argmin returns the first minimum; axes are sorted ascending
    idx = np.unravel_index(int(np.argmin(loss)), loss.shape)
    if method is Method.COMB1:
        return AggregationConfig(method, Kernel.UNIFORM, epsilon=float(axes[0][idx[0]]),
                                 alpha=float(axes[1][idx[1]]))
    if method is Method.COMB2:
        return AggregationConfig(method, kernel, h=float(axes[0][idx[0]]))
    return AggregationConfig(method, kernel, alpha_in=float(axes[0][idx[0]]),
                             beta_pred=float(axes[1][idx[1]]))
