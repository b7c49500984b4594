"""K-means / Fit / Consensus orchestration, K sweeps and replicated benchmarks.

For each divergence the inputs are repaired into its domain and clustered;
one local model is fit per cluster on the original inputs. A query is routed
to its closest centroid under every divergence, giving one prediction per
divergence, and the combiner aggregates that prediction vector.
"""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import aggregation as agg
from .aggregation import AggregationConfig, AggregationSample, GridSpec, Kernel, Method
from .bregman import ALL_DIVERGENCES, Divergence, RepairStrategy, RepairTransform, repair_to_domain
from .clustering import Centroids, assign, kmeans_fit
from .data import Dataset, Task
from .datagen import DatasetSpec, Family, generate
from .errors import DataError, DimensionMismatch
from .local_models import LinearModel, LogisticModel, fit_linear, fit_logistic
from .metrics import misclassification, nmi, rmse

log = logging.getLogger(__name__)

# stable per-divergence stream ids, so member seeds ignore list order
_DIV_CODE = {d: i for i, d in enumerate(ALL_DIVERGENCES)}
_SINGLE_CODE = 97
_TUNE_CODE = 98
_SPLIT_CODE = 99


@dataclass
class ClusterModel:
    div: Divergence
    centroids: Centroids
    local_models: list
    repair: RepairTransform

    @property
    def K(self) -> int:
        return self.centroids.K

    @property
    def d(self) -> int:
        return self.centroids.centers.shape[1]

    def assign(self, X) -> np.ndarray:
        return assign(self.centroids, self.repair.apply(X))

    def predict(self, X) -> np.ndarray:
        """Local-model output for each row: value (regression) or 0/1 label."""
        X = np.asarray(X, dtype=float)
        labels = self.assign(X)
        out = np.empty(len(X))
        for k, model in enumerate(self.local_models):
            rows = labels == k
            if rows.any():
                out[rows] = model.predict(X[rows])
        return out


@dataclass
class Ensemble:
    members: list[ClusterModel]
    sample: AggregationSample
    config: AggregationConfig
    task: Task

    @property
    def d(self) -> int:
        return self.members[0].d

    @property
    def divergences(self) -> list[Divergence]:
        return [m.div for m in self.members]

    def member_predictions(self, X) -> np.ndarray:
        X = _query_matrix(X, self.d)
        return np.column_stack([m.predict(X) for m in self.members])

    def predict(self, X) -> np.ndarray:
        X = _query_matrix(X, self.d)
        return np.atleast_1d(agg.combine(self.sample, self.config, self.task, X, self.member_predictions(X)))


def _query_matrix(X, d: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim <= 1:
        X = X.reshape(1, -1) if X.size == d else X.reshape(-1, 1)
    if X.shape[1] != d:
        raise DimensionMismatch(f"model expects {d} features, got {X.shape[1]}")
    return X


def derive_seed(seed, *key) -> np.random.SeedSequence:
    """Child seed sequence of ``seed`` addressed by ``key``; independent of call order."""
    base = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.SeedSequence(base.entropy, spawn_key=tuple(base.spawn_key) + tuple(key))


def fit_local(X: np.ndarray, y: np.ndarray, task: Task):
    """Linear or logistic fit; intercept-only below d + 2 points."""
    n, d = X.shape
    if n < d + 2:
        X = np.zeros((n, d))
    if task is Task.CLASSIFICATION:
        return fit_logistic(X, y)
    return fit_linear(X, y)


def fit_member(train: Dataset, div: Divergence | str, K: int, restarts: int = 10,
               max_iter: int = 100, seed=0, repair: RepairStrategy | str | None = None):
    """Cluster ``train`` under ``div`` and fit one local model per cluster.

    Returns the member together with the K-means result on the repaired
    training inputs (rows dropped by a ``drop`` repair are not clustered).
    """
    div = Divergence.parse(div)
    rep = repair_to_domain(train, div, repair)
    km = kmeans_fit(rep.data.X, K, div, restarts, max_iter, seed)
    kept = rep.data
    # local models see the original inputs; only clustering uses the repaired ones
    # (a drop repair keeps surviving rows unchanged)
    X_raw = kept.X if rep.transform.strategy is RepairStrategy.DROP_VIOLATIONS else train.X
    models = []
    for k in range(K):
        rows = km.labels == k
        models.append(fit_local(X_raw[rows], kept.y[rows], train.task))
    return ClusterModel(div, km.centroids, models, rep.transform), km


def fit_members(train: Dataset, K: int, divergences=ALL_DIVERGENCES, restarts: int = 10,
                max_iter: int = 100, seed=0):
    out = []
    for div in divergences:
        div = Divergence.parse(div)
        out.append(fit_member(train, div, K, restarts, max_iter, derive_seed(seed, _DIV_CODE[div])))
    return out


def build_ensemble(members: list[ClusterModel], agg_data: Dataset, method: Method | str = Method.COMB2,
                   kernel: Kernel | str = Kernel.GAUSSIAN, grid: GridSpec | None = None,
                   folds: int = 5, seed=0) -> Ensemble:
    """Compute prediction vectors on ``agg_data`` and tune the combiner by CV."""
    task = agg_data.task
    P = np.column_stack([m.predict(agg_data.X) for m in members])
    sample = AggregationSample(agg_data.X, P, agg_data.y)
    folds = min(folds, sample.n)
    config = agg.tune(sample, method, kernel, task, grid, folds, derive_seed(seed, _TUNE_CODE))
    return Ensemble(list(members), sample, config, task)


def _split(train: Dataset, split: float, seed) -> tuple[Dataset, Dataset]:
    if not split:
        return train, train
    if not 0 < split < 1:
        raise ValueError("split must lie in [0, 1)")
    perm = np.random.default_rng(derive_seed(seed, _SPLIT_CODE)).permutation(train.n)
    n_agg = max(1, int(round(split * train.n)))
    return train.subset(np.sort(perm[n_agg:])), train.subset(np.sort(perm[:n_agg]))


def kfc_train(train: Dataset, K: int = 3, divergences=ALL_DIVERGENCES, method: Method | str = Method.COMB2,
              kernel: Kernel | str = Kernel.GAUSSIAN, grid: GridSpec | None = None, folds: int = 5,
              seed=0, restarts: int = 10, max_iter: int = 100, split: float = 0.0) -> Ensemble:
    """Train the full three-step model.

    With ``split`` > 0 that fraction of ``train`` is held out from the local
    fits and used only as the aggregation sample; by default both steps use
    all of ``train``.
    """
    if train.y is None or train.task is None:
        raise DataError("training data needs a target and a task")
    divergences = [Divergence.parse(d) for d in divergences]
    if not divergences:
        raise ValueError("at least one divergence is required")
    fit_part, agg_part = _split(train, split, seed)
    members = [m for m, _ in fit_members(fit_part, K, divergences, restarts, max_iter, seed)]
    return build_ensemble(members, agg_part, method, kernel, grid, folds, seed)


def kfc_predict(ens: Ensemble, x):
    """Combined prediction for one point (scalar) or a matrix of points."""
    x = np.asarray(x, dtype=float)
    out = ens.predict(x)
    return float(out[0]) if x.ndim <= 1 and x.size == ens.d else out


# -- benchmarks --------------------------------------------------------------


@dataclass(frozen=True)
class PipelineParams:
    K: int = 3
    divergences: tuple[Divergence, ...] = ALL_DIVERGENCES
    methods: tuple[Method, ...] = (Method.COMB2, Method.COMB3)
    kernels: tuple[Kernel, ...] = tuple(Kernel)
    grid: GridSpec = field(default_factory=GridSpec)
    folds: int = 5
    restarts: int = 10
    max_iter: int = 100
    split: float = 0.0
    single: bool = True


@dataclass(frozen=True)
class Record:
    dataset: str
    rep: int
    estimator: str
    kernel: str
    metric: str
    value: float
    K: int = 0


def _metric(task: Task):
    return ("misclassification", misclassification) if task is Task.CLASSIFICATION else ("rmse", rmse)


def _combiner_runs(params: PipelineParams):
    for method in params.methods:
        if method is Method.COMB1:
            yield method, Kernel.UNIFORM
        else:
            for kernel in params.kernels:
                yield method, kernel


def evaluate_run(name: str, rep: int, train: Dataset, test: Dataset, params: PipelineParams,
                 seed, K: int | None = None, with_nmi: bool = False) -> list[Record]:
    """Train members, baseline and combiners on ``train``; score them on ``test``."""
    K = params.K if K is None else K
    metric, score = _metric(train.task)
    recs = []
    fit_part, agg_part = _split(train, params.split, seed)
    fitted = fit_members(fit_part, K, params.divergences, params.restarts, params.max_iter, seed)
    members = [m for m, _ in fitted]
    for member, km in fitted:
        if with_nmi and fit_part.clusters is not None and K > 1 and params.split == 0:
            recs.append(Record(name, rep, member.div.value, "", "nmi", nmi(km.labels, fit_part.clusters), K))
        recs.append(Record(name, rep, member.div.value, "", metric, score(member.predict(test.X), test.y), K))
    if params.single:
        single, _ = fit_member(fit_part, Divergence.EUCLID, 1, 1, params.max_iter, derive_seed(seed, _SINGLE_CODE))
        recs.append(Record(name, rep, "single", "", metric, score(single.predict(test.X), test.y), K))
    P_test = np.column_stack([m.predict(test.X) for m in members])
    P_agg = np.column_stack([m.predict(agg_part.X) for m in members])
    sample = AggregationSample(agg_part.X, P_agg, agg_part.y)
    folds = min(params.folds, sample.n)
    for method, kernel in _combiner_runs(params):
        cfg = agg.tune(sample, method, kernel, train.task, params.grid, folds, derive_seed(seed, _TUNE_CODE))
        yhat = agg.combine(sample, cfg, train.task, test.X, P_test)
        recs.append(Record(name, rep, method.value, kernel.value, metric, score(yhat, test.y), K))
    return recs


def _run_replication(spec: DatasetSpec, rep: int, params: PipelineParams, seed) -> list[Record]:
    from threadpoolctl import threadpool_limits

    # one BLAS thread: results must not depend on the worker layout
    with threadpool_limits(1):
        rep_seed = derive_seed(seed, rep)
        spec_r = DatasetSpec(spec.family, spec.task, spec.n_train, spec.n_test, spec.K, derive_seed(rep_seed, 0),
                             spec.noise_var)
        train, test = generate(spec_r)
        return evaluate_run(spec.family.value, rep, train, test, params, derive_seed(rep_seed, 1), with_nmi=True)


def _run_split(data: Dataset, name: str, K: int, rep: int, train_frac: float, params: PipelineParams,
               seed) -> list[Record]:
    from threadpoolctl import threadpool_limits

    with threadpool_limits(1):
        rep_seed = derive_seed(seed, rep)
        perm = np.random.default_rng(derive_seed(rep_seed, 0)).permutation(data.n)
        n_tr = int(round(train_frac * data.n))
        train, test = data.subset(np.sort(perm[:n_tr])), data.subset(np.sort(perm[n_tr:]))
        return evaluate_run(name, rep, train, test, params, derive_seed(rep_seed, K, 1), K=K)


def _parallel(jobs: int, tasks) -> list:
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [f(*a) for f, *a in tasks]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=jobs)(delayed(f)(*a) for f, *a in tasks)


@dataclass
class BenchmarkReport:
    records: list[Record]

    def summary(self) -> list[dict]:
        """Mean and sample sd per (dataset, K, estimator, kernel, metric), in first-seen order."""
        groups: dict[tuple, list[float]] = defaultdict(list)
        for r in self.records:
            groups[(r.dataset, r.K, r.estimator, r.kernel, r.metric)].append(r.value)
        rows = []
        for (dataset, K, est, kern, metric), vals in groups.items():
            v = np.asarray(vals)
            sd = float(np.std(v, ddof=1)) if len(v) > 1 else None
            rows.append(dict(dataset=dataset, K=K, estimator=est, kernel=kern, metric=metric,
                             mean=float(v.mean()), sd=sd, reps=len(v)))
        return rows

    def value(self, dataset: str, estimator: str, metric: str, kernel: str = "", K: int | None = None,
              stat: str = "mean") -> float:
        for row in self.summary():
            if (row["dataset"], row["estimator"], row["kernel"], row["metric"]) == (dataset, estimator, kernel, metric) \
                    and (K is None or row["K"] == K):
                return row[stat]
        raise KeyError((dataset, estimator, kernel, metric, K))

    def write(self, out_dir: str | Path, sweep: bool = False) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "report.csv", out / "replications.csv"]
        summary = self.summary()
        with open(paths[0], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["dataset", "K", "estimator", "kernel", "metric", "mean", "sd"] if sweep
                       else ["dataset", "estimator", "kernel", "metric", "mean", "sd"])
            for r in summary:
                row = [r["dataset"], r["estimator"], r["kernel"], r["metric"], _num(r["mean"]), _num(r["sd"])]
                w.writerow(row[:1] + [r["K"]] + row[1:] if sweep else row)
        with open(paths[1], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["dataset", "K", "rep", "estimator", "kernel", "metric", "value"])
            for r in self.records:
                w.writerow([r.dataset, r.K, r.rep, r.estimator, r.kernel, r.metric, _num(r.value)])
        if sweep:
            paths.append(out / "k_sweep_table.csv")
            _write_wide(paths[-1], summary, key=lambda r: (r["dataset"], r["K"]), head=["dataset", "K"])
        else:
            nmi_rows = [r for r in summary if r["metric"] == "nmi"]
            if nmi_rows:
                paths.append(out / "table_nmi.csv")
                _write_wide(paths[-1], nmi_rows, key=lambda r: (r["dataset"],), head=["dataset"])
            err_rows = [r for r in summary if r["metric"] != "nmi"]
            paths.append(out / "table_errors.csv")
            _write_wide(paths[-1], err_rows, key=lambda r: (r["dataset"],), head=["dataset"])
        return paths


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def _column(r: dict) -> str:
    return r["estimator"] if not r["kernel"] else f"{r['estimator']}:{r['kernel']}"


def _write_wide(path: Path, rows: list[dict], key, head: list[str]) -> None:
    """One line per key and statistic, one column per estimator (Tables 4-7 layout)."""
    cols: list[str] = []
    table: dict[tuple, dict] = {}
    for r in rows:
        c = _column(r)
        if c not in cols:
            cols.append(c)
        table.setdefault(key(r), {})[c] = r
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head + ["statistic"] + cols)
        for k, cells in table.items():
            for stat in ("mean", "sd"):
                w.writerow(list(k) + [stat] + [_num(cells[c][stat]) if c in cells else "" for c in cols])


def replicate(spec: DatasetSpec, reps: int = 20, params: PipelineParams | None = None, seed=0,
              jobs: int = 1) -> BenchmarkReport:
    """Regenerate, train and evaluate ``reps`` times; one derived seed per replication."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    params = params or PipelineParams(K=spec.K)
    results = _parallel(jobs, [(_run_replication, spec, r, params, seed) for r in range(reps)])
    return BenchmarkReport([rec for part in results for rec in part])


def k_sweep(data: Dataset, K_range, reps: int = 20, train_frac: float = 0.8, params: PipelineParams | None = None,
            seed=0, jobs: int = 1, name: str = "data") -> BenchmarkReport:
    """Test error per K over ``reps`` random train/test partitions.

    The partitions depend only on ``seed`` and the replication index, so
    every K sees the same splits.
    """
    K_range = list(K_range)
    if not K_range:
        raise ValueError("K_range is empty")
    params = params or PipelineParams(single=False)
    tasks = [(_run_split, data, name, K, r, train_frac, params, seed) for K in K_range for r in range(reps)]
    results = _parallel(jobs, tasks)
    return BenchmarkReport([rec for part in results for rec in part])


def bench_families(families, task: Task | str, reps: int = 20, params: PipelineParams | None = None,
                   seed=0, jobs: int = 1, n_train: int = 500, n_test: int = 150) -> BenchmarkReport:
    task = Task.parse(task)
    params = params or PipelineParams()
    tasks = []
    for fam in families:
        fam = Family.parse(fam)
        spec = DatasetSpec(fam, task, n_train, n_test, params.K, 0)
        # seed stream keyed by family so adding families never shifts the others
        tasks += [(_run_replication, spec, r, params, derive_seed(seed, list(Family).index(fam))) for r in range(reps)]
    results = _parallel(jobs, tasks)
    return BenchmarkReport([rec for part in results for rec in part])
