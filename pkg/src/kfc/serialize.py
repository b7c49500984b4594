"""Ensemble model files: one self-describing JSON document.

Floats are written with their shortest round-trip representation, so a
saved and reloaded ensemble predicts bit-identically.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .aggregation import AggregationConfig, AggregationSample
from .bregman import Divergence, RepairTransform
from .clustering import Centroids
from .data import Task
from .errors import DataError
from .local_models import LinearModel, LogisticModel
from .pipeline import ClusterModel, Ensemble

SCHEMA = "kfc.ensemble/v1"


def _local_to_dict(model) -> dict:
    d = {"kind": "logistic" if isinstance(model, LogisticModel) else "linear",
         "intercept": float(model.intercept), "weights": [float(w) for w in model.weights]}
    if isinstance(model, LogisticModel):
        d["converged"] = bool(model.converged)
    return d


def _local_from_dict(d: dict):
    w = np.asarray(d["weights"], dtype=float)
    if d["kind"] == "logistic":
        return LogisticModel(float(d["intercept"]), w, bool(d.get("converged", True)))
    if d["kind"] == "linear":
        return LinearModel(float(d["intercept"]), w)
    raise DataError(f"unknown local model kind {d['kind']!r}")


def to_dict(ens: Ensemble) -> dict:
    return {
        "schema": SCHEMA,
        "task": ens.task.value,
        "d": ens.d,
        "divergences": [m.div.value for m in ens.members],
        "members": [
            {
                "divergence": m.div.value,
                "centroids": m.centroids.centers.tolist(),
                "repair": m.repair.to_dict(),
                "local_models": [_local_to_dict(lm) for lm in m.local_models],
            }
            for m in ens.members
        ],
        "aggregation": {
            "config": ens.config.to_dict(),
            "inputs": ens.sample.inputs.tolist(),
            "preds": ens.sample.preds.tolist(),
            "outputs": ens.sample.outputs.tolist(),
        },
    }


def from_dict(doc: dict) -> Ensemble:
    if doc.get("schema") != SCHEMA:
        raise DataError(f"not a model file (schema {doc.get('schema')!r}, expected {SCHEMA!r})")
    try:
        members = []
        for m in doc["members"]:
            div = Divergence.parse(m["divergence"])
            members.append(ClusterModel(
                div,
                Centroids(div, np.asarray(m["centroids"], dtype=float)),
                [_local_from_dict(lm) for lm in m["local_models"]],
                RepairTransform.from_dict(div, m["repair"]),
            ))
        a = doc["aggregation"]
        sample = AggregationSample(np.asarray(a["inputs"], dtype=float), np.asarray(a["preds"], dtype=float),
                                   np.asarray(a["outputs"], dtype=float))
        return Ensemble(members, sample, AggregationConfig.from_dict(a["config"]), Task.parse(doc["task"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model file: {exc}") from None


def save(ens: Ensemble, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_dict(ens), fh, allow_nan=False)
        fh.write("\n")


def load(path: str | Path) -> Ensemble:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise DataError(f"{path}: not a model file")
    return from_dict(doc)
