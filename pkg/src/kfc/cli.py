"""Command-line interface: ``kfc generate | train | predict | evaluate | bench``.

Every command accepts ``--config FILE``, a flat YAML mapping whose keys are
the long flag names (dashes or underscores). Flags given on the command line
override the file; unknown keys are rejected.

Exit codes: 0 success, 1 usage error, 2 data or domain error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import serialize
from .aggregation import ALL_KERNELS, GridSpec, Kernel, Method
from .bregman import Divergence
from .data import Dataset, Task, read_csv, write_csv
from .datagen import Family, DatasetSpec, generate
from .errors import DataError, NumericError
from .metrics import misclassification, rmse
from .pipeline import BenchmarkReport, PipelineParams, bench_families, derive_seed, k_sweep, kfc_train

log = logging.getLogger("kfc")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- value parsers -------------------------------------------------------------


def _listof(parse):
    def f(text):
        if isinstance(text, (list, tuple)):
            items = list(text)
        else:
            items = [t for t in str(text).split(",") if t.strip()]
        try:
            return [parse(t) for t in items]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return f


def _k_range(text) -> list[int]:
    """``1..8``, ``2,3,5`` or a single integer."""
    if isinstance(text, (list, tuple)):
        return [int(t) for t in text]
    text = str(text).strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            out = list(range(int(lo), int(hi) + 1))
        else:
            out = [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad K range {text!r}; use e.g. 1..8 or 1,2,3") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError(f"K range {text!r} must list integers >= 1")
    return out


def _choice(parse):
    def f(text):
        try:
            return parse(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return f


def _fraction(text) -> float:
    v = float(text)
    if not 0 <= v < 1:
        raise argparse.ArgumentTypeError("must lie in [0, 1)")
    return v


# -- parser ------------------------------------------------------------------

# flag defaults live here so a config file can sit between them and the command line
DEFAULTS = {
    "task": None, "K": 3, "n_train": 500, "n_test": 150, "seed": 0, "noise_var": 10.0,
    "divergences": list(Divergence), "method": Method.COMB2, "kernel": Kernel.GAUSSIAN,
    "methods": [Method.COMB2, Method.COMB3], "kernels": list(ALL_KERNELS),
    "folds": 5, "restarts": 10, "max_iter": 100, "split": 0.0,
    "grid_size": 300, "grid_low": 1e-3, "grid_high": 5.0, "grid_size_2d": 50, "grid_high_2d": 10.0,
    "reps": 20, "jobs": 1, "train_frac": 0.8, "k_range": None, "families": None, "real": None,
    "target": "y", "out": None, "config": None, "verbose": False,
}

REQUIRED = {
    "generate": ("family", "task", "out"),
    "train": ("data", "task", "model"),
    "predict": ("model", "data", "out"),
    "evaluate": ("pred", "data"),
    "bench": ("task", "out"),
}


def _common(p):
    p.add_argument("--config", help="YAML file of flag values")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _model_flags(p, many: bool = False):
    p.add_argument("--task", type=_choice(Task.parse), help="regression or classification")
    p.add_argument("--K", "-K", type=int, help="clusters per divergence (default 3)")
    p.add_argument("--divergences", type=_listof(Divergence.parse),
                   help="comma list of euclid,gkl,logit,itakura (default all)")
    if many:
        p.add_argument("--methods", type=_listof(Method.parse), help="combiners to score (default comb2,comb3)")
        p.add_argument("--kernels", type=_listof(Kernel.parse), help="kernels to score (default all six)")
    else:
        p.add_argument("--method", type=_choice(Method.parse), help="comb1, comb2 or comb3 (default comb2)")
        p.add_argument("--kernel", type=_choice(Kernel.parse), help="kernel (default gaussian)")
    p.add_argument("--folds", type=int, help="cross-validation folds (default 5)")
    p.add_argument("--restarts", type=int, help="K-means restarts (default 10)")
    p.add_argument("--max-iter", type=int, help="K-means iteration cap (default 100)")
    p.add_argument("--split", type=_fraction, help="fraction held out for aggregation only (default 0)")
    p.add_argument("--grid-size", type=int, help="1-D bandwidth grid size (default 300)")
    p.add_argument("--grid-low", type=float, help="smallest nonzero grid value (default 1e-3)")
    p.add_argument("--grid-high", type=float, help="largest 1-D grid value (default 5)")
    p.add_argument("--grid-size-2d", type=int, help="values per axis of the 2-D grid (default 50)")
    p.add_argument("--grid-high-2d", type=float, help="largest 2-D grid value (default 10)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kfc", description="K-means / Fit / Consensus ensembles over Bregman divergences.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    S = argparse.SUPPRESS

    p = sub.add_parser("generate", help="write simulated train/test CSVs", argument_default=S)
    _common(p)
    p.add_argument("--family", type=_choice(Family.parse), help="exp, pois, geom, gauss2d or gauss3d")
    p.add_argument("--task", type=_choice(Task.parse), help="regression or classification")
    p.add_argument("--K", "-K", type=int, help="number of clusters, at most 3 (default 3)")
    p.add_argument("--n-train", type=int, help="training points per cluster (default 500)")
    p.add_argument("--n-test", type=int, help="test points per cluster (default 150)")
    p.add_argument("--noise-var", type=float, help="noise variance (default 10)")
    p.add_argument("--out", help="output directory for train.csv and test.csv")

    p = sub.add_parser("train", help="fit an ensemble and save it as JSON", argument_default=S)
    _common(p)
    p.add_argument("--data", help="training CSV (features x1..xd and target y)")
    p.add_argument("--target", help="target column name (default y)")
    p.add_argument("--model", help="output model file")
    _model_flags(p)

    p = sub.add_parser("predict", help="predict with a saved ensemble", argument_default=S)
    _common(p)
    p.add_argument("--model", help="model file from 'train'")
    p.add_argument("--data", help="query CSV; extra y/cluster columns are ignored")
    p.add_argument("--out", help="output CSV with column yhat")

    p = sub.add_parser("evaluate", help="score predictions against labeled data", argument_default=S)
    _common(p)
    p.add_argument("--pred", help="predictions CSV (column yhat, or y)")
    p.add_argument("--data", help="labeled CSV (column y)")
    p.add_argument("--task", type=_choice(Task.parse), help="metric family; inferred from the labels if absent")

    p = sub.add_parser("bench", help="replicated benchmarks and K sweeps", argument_default=S)
    _common(p)
    p.add_argument("--families", "--family", type=_listof(Family.parse), help="comma list of families (default all)")
    p.add_argument("--real", help="CSV dataset for a K sweep over random train/test splits")
    p.add_argument("--target", help="target column of --real (default y)")
    p.add_argument("--k-range", type=_k_range, help="K values to sweep, e.g. 1..8")
    p.add_argument("--reps", type=int, help="replications (default 20)")
    p.add_argument("--train-frac", type=_fraction, help="training fraction in K sweeps (default 0.8)")
    p.add_argument("--n-train", type=int, help="training points per cluster (default 500)")
    p.add_argument("--n-test", type=int, help="test points per cluster (default 150)")
    p.add_argument("--jobs", type=int, help="parallel workers (default 1)")
    p.add_argument("--out", help="output directory for report CSVs")
    _model_flags(p, many=True)
    return parser


# -- config merging ------------------------------------------------------------


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return sub.choices[command]


def _dests(parser: argparse.ArgumentParser, command: str) -> dict[str, argparse.Action]:
    return {a.dest: a for a in _subparser(parser, command)._actions if a.dest not in ("help", "config")}


def load_config(path: str, allowed: dict[str, argparse.Action]) -> dict:
    import yaml

    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise UsageError(f"config {path} must be a mapping of flag names to values")
    out = {}
    for key, value in raw.items():
        dest = str(key).lstrip("-").replace("-", "_")
        if dest not in allowed:
            raise UsageError(f"config {path}: unknown key {key!r}")
        action = allowed[dest]
        if action.type is not None and value is not None:
            try:
                value = action.type(value)
            except (argparse.ArgumentTypeError, ValueError, TypeError) as exc:
                raise UsageError(f"config {path}: bad value for {key!r}: {exc}") from None
        out[dest] = value
    return out


def resolve(parser: argparse.ArgumentParser, argv=None) -> argparse.Namespace:
    """Parse ``argv``; precedence is flag > config file > built-in default."""
    ns = parser.parse_args(argv)
    given = vars(ns)
    cfg = load_config(given["config"], _dests(parser, ns.command)) if given.get("config") else {}
    merged = {k: v for k, v in DEFAULTS.items()}
    merged.update(cfg)
    merged.update(given)
    missing = [k for k in REQUIRED[ns.command] if merged.get(k) is None]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        _subparser(parser, ns.command).print_usage(sys.stderr)
        raise UsageError(f"{ns.command}: missing required option(s) {flags}")
    return argparse.Namespace(**merged)


def _grid(a) -> GridSpec:
    return GridSpec(size=a.grid_size, low=a.grid_low, high=a.grid_high, size_2d=a.grid_size_2d,
                    high_2d=a.grid_high_2d)


# -- commands ----------------------------------------------------------------


def cmd_generate(a) -> int:
    spec = DatasetSpec(a.family, a.task, a.n_train, a.n_test, a.K, a.seed, a.noise_var)
    train, test = generate(spec)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(train, out / "train.csv")
    write_csv(test, out / "test.csv")
    log.info("wrote %d training and %d test rows to %s", train.n, test.n, out)
    return 0


def cmd_train(a) -> int:
    data = read_csv(a.data, a.task, a.target)
    ens = kfc_train(data, a.K, a.divergences, a.method, a.kernel, _grid(a), a.folds, a.seed, a.restarts,
                    a.max_iter, a.split)
    serialize.save(ens, a.model)
    log.info("trained %s ensemble, config %s", ens.task.value, ens.config.to_dict())
    return 0


def cmd_predict(a) -> int:
    ens = serialize.load(a.model)
    data = read_csv(a.data)
    yhat = ens.predict(data.X)
    with open(a.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["yhat"])
        cls = ens.task is Task.CLASSIFICATION
        w.writerows([[int(v)] if cls else [repr(float(v))] for v in yhat])
    return 0


def _read_column(path: str, names: tuple[str, ...]) -> np.ndarray:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise DataError(f"{path}: empty file")
    head = [h.strip() for h in rows[0]]
    col = next((head.index(n) for n in names if n in head), None)
    if col is None:
        raise DataError(f"{path}: no column named {' or '.join(names)}")
    try:
        v = np.array([float(r[col]) for r in rows[1:] if r], dtype=float)
    except (ValueError, IndexError):
        raise DataError(f"{path}: non-numeric or missing value in column {head[col]!r}") from None
    if not np.all(np.isfinite(v)):
        raise DataError(f"{path}: non-finite value in column {head[col]!r}")
    return v


def cmd_evaluate(a) -> int:
    yhat = _read_column(a.pred, ("yhat", "y"))
    y = _read_column(a.data, ("y",))
    task = a.task
    if task is None:
        task = Task.CLASSIFICATION if np.all(np.isin(y, (0.0, 1.0))) else Task.REGRESSION
    if task is Task.CLASSIFICATION:
        print(f"misclassification,{misclassification(yhat, y)!r}")
    else:
        print(f"rmse,{rmse(yhat, y)!r}")
    return 0


def cmd_bench(a) -> int:
    params = PipelineParams(K=a.K, divergences=tuple(a.divergences), methods=tuple(a.methods),
                            kernels=tuple(a.kernels), grid=_grid(a), folds=a.folds, restarts=a.restarts,
                            max_iter=a.max_iter, split=a.split, single=a.k_range is None)
    if a.real is not None:
        data = read_csv(a.real, a.task, a.target)
        report = k_sweep(data, a.k_range or [a.K], a.reps, a.train_frac, params, a.seed, a.jobs,
                         name=Path(a.real).stem)
        sweep = True
    elif a.k_range is not None:
        reports = []
        for i, fam in enumerate(a.families or list(Family)):
            spec = DatasetSpec(fam, a.task, a.n_train, a.n_test, 3, derive_seed(a.seed, i, 0))
            train, test = generate(spec)
            reports.append(k_sweep(train.concat(test), a.k_range, a.reps, a.train_frac, params,
                                   derive_seed(a.seed, i, 1), a.jobs, name=fam.value))
        report = BenchmarkReport([r for rep in reports for r in rep.records])
        sweep = True
    else:
        report = bench_families(a.families or list(Family), a.task, a.reps, params, a.seed, a.jobs,
                                a.n_train, a.n_test)
        sweep = False
    for p in report.write(a.out, sweep=sweep):
        log.info("wrote %s", p)
    return 0


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "predict": cmd_predict, "evaluate": cmd_evaluate,
            "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = resolve(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"kfc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except DataError as exc:
        print(f"kfc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"kfc: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"kfc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"kfc: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
