"""File formats: topology JSON, measurement CSV, model and result JSON."""

import csv
import json
from pathlib import Path

import numpy as np

from .cf_engine import MeasurementSet
from .delay_models import LinkMixture, model_from_dict
from .estimators import EstimationResult
from .topology import TreeTopology


def _dump(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def read_topology(path):
    return TreeTopology.from_dict(json.loads(Path(path).read_text()))


def write_topology(topology, path):
    _dump(topology.to_dict(), path)


def write_measurements(ms, path):
    """One row per probe, one column per leaf; header holds the leaf ids."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([str(x) for x in ms.leaves])
        for row in ms.Y:
            w.writerow([repr(float(v)) for v in row])


def read_measurements(path, topology=None):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty measurement file")
    header, body = rows[0], rows[1:]
    Y = np.array([[float(v) for v in r] for r in body if r], dtype=float).reshape(-1, len(header))
    if topology is None:
        return MeasurementSet(Y, tuple(header))
    leaves = [str(x) for x in topology.leaves]
    if sorted(header) != sorted(leaves):
        raise ValueError(f"{path}: columns {header} do not match topology leaves {leaves}")
    order = [header.index(x) for x in leaves]
    return MeasurementSet(Y[:, order], tuple(topology.leaves))


def write_models(models, path, **meta):
    _dump({**meta, "links": [m.to_dict() for m in models]}, path)


def read_models(path):
    data = json.loads(Path(path).read_text())
    out = []
    for d in data["links"]:
        out.append(LinkMixture.from_dict(d) if "weights" in d and "bins" in d else model_from_dict(d))
    return out


def write_result(result, path, **meta):
    _dump({**meta, **result.to_dict()}, path)


def read_result(path):
    return EstimationResult.from_dict(json.loads(Path(path).read_text()))


def write_columns(path, columns):
    """CSV from a mapping of equal-length columns."""
    keys = list(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for row in zip(*(np.asarray(columns[k]) for k in keys)):
            w.writerow([v if isinstance(v, str) else repr(float(v)) for v in row])


def read_columns(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    keys = rows[0]
    cols = {k: [] for k in keys}
    for r in rows[1:]:
        for k, v in zip(keys, r):
            try:
                cols[k].append(float(v))
            except ValueError:
                cols[k].append(v)
    return cols
