"""Dataset container and CSV interchange."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError


class Task(str, enum.Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"

    @classmethod
    def parse(cls, value: "Task | str") -> "Task":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown task {value!r}; expected 'regression' or 'classification'") from None


@dataclass(frozen=True)
class Dataset:
    """Observation matrix with optional target, task kind and hidden cluster ids."""

    X: np.ndarray
    y: np.ndarray | None = None
    task: Task | None = None
    clusters: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise DataError(f"observation matrix must be 2-D, got shape {X.shape}")
        object.__setattr__(self, "X", X)
        if self.y is not None:
            y = np.asarray(self.y, dtype=float)
            if y.shape != (X.shape[0],):
                raise DataError(f"target length {y.shape} does not match {X.shape[0]} rows")
            object.__setattr__(self, "y", y)
        if self.clusters is not None:
            c = np.asarray(self.clusters, dtype=int)
            if c.shape != (X.shape[0],):
                raise DataError("cluster ids do not match number of rows")
            object.__setattr__(self, "clusters", c)
        if self.task is not None:
            object.__setattr__(self, "task", Task.parse(self.task))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(
            self.X[idx],
            None if self.y is None else self.y[idx],
            self.task,
            None if self.clusters is None else self.clusters[idx],
        )

    def concat(self, other: "Dataset") -> "Dataset":
        def cat(a, b):
            return None if a is None or b is None else np.concatenate([a, b])

        return Dataset(np.vstack([self.X, other.X]), cat(self.y, other.y), self.task,
                       cat(self.clusters, other.clusters))


def _fmt(v: float) -> str:
    # repr of a Python float is the shortest string that round-trips
    return repr(float(v))


def write_csv(data: Dataset, path: str | Path) -> None:
    """Write ``x1..xd[,y][,cluster]`` with round-trip float formatting."""
    header = [f"x{j + 1}" for j in range(data.d)]
    if data.y is not None:
        header.append("y")
    if data.clusters is not None:
        header.append("cluster")
    labels = data.task is Task.CLASSIFICATION
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(data.n):
            row = [_fmt(v) for v in data.X[i]]
            if data.y is not None:
                row.append(str(int(data.y[i])) if labels else _fmt(data.y[i]))
            if data.clusters is not None:
                row.append(str(int(data.clusters[i])))
            w.writerow(row)


def read_csv(path: str | Path, task: Task | str | None = None, target: str = "y") -> Dataset:
    """Read a headed CSV. Every column except ``target`` and ``cluster`` is a feature."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file (header row is mandatory)")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    if not body:
        raise DataError(f"{path}: no data rows")
    feat = [j for j, h in enumerate(header) if h not in (target, "cluster")]
    if not feat:
        raise DataError(f"{path}: no feature columns")
    try:
        table = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric value ({exc})") from None
    if table.shape[1] != len(header):
        raise DataError(f"{path}: ragged rows")
    if not np.all(np.isfinite(table)):
        raise DataError(f"{path}: non-finite values")
    y = table[:, header.index(target)] if target in header else None
    clusters = table[:, header.index("cluster")].astype(int) if "cluster" in header else None
    return Dataset(table[:, feat], y, None if task is None else Task.parse(task), clusters)
