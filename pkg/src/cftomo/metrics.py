"""Distances between true and fitted link distributions, and quartile summaries."""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .delay_models import Discrete, LinkMixture


class MetricError(ValueError):
    pass


def _pmf(model):
    if isinstance(model, Discrete):
        return np.asarray(model.points), np.asarray(model.probs)
    if isinstance(model, LinkMixture):
        spec = model.spec
        if spec.n_bins or spec.tail_scale is not None:
            raise MetricError("L1 distance is defined for lattice models only")
        return np.asarray(spec.atoms), np.asarray(model.weights)
    pts, probs = model
    return np.asarray(pts, dtype=float), np.asarray(probs, dtype=float)


def l1_density_distance(true_model, fitted):
    """``sum_x |p(x) - q(x)|`` for two pmfs on the same grid."""
    x, p = _pmf(true_model)
    y, q = _pmf(fitted)
    if x.shape != y.shape or not np.allclose(x, y):
        raise MetricError("grids differ")
    return float(np.abs(p - q).sum())


def midpoints(Q):
    return (np.arange(Q) + 0.5) / Q


def mallows(true_quantile, fitted_quantile, quadrature_points=2000):
    """``int_0^1 |F^{-1}(p) - G^{-1}(p)| dp`` by the midpoint rule."""
    p = midpoints(quadrature_points)
    return float(np.mean(np.abs(np.asarray(true_quantile(p)) - np.asarray(fitted_quantile(p)))))


def normalized_mallows(true_model, fitted, quadrature_points=2000):
    sigma = math.sqrt(max(true_model.var, 0.0))
    if sigma <= 0:
        raise MetricError("true distribution has zero spread")
    return mallows(true_model.quantile, fitted.quantile, quadrature_points) / sigma


@dataclass(frozen=True)
class ErrorSummary:
    """Per-link quartiles of an error metric over replications.

    Quartiles use linear interpolation between order statistics
    (``numpy.percentile`` default), so the median of ``1..100`` is 50.5.
    """

    metric: str
    values: np.ndarray  # replications x links
    q25: np.ndarray
    q50: np.ndarray
    q75: np.ndarray
    interpolation: str = "linear"

    @property
    def n_reps(self):
        return self.values.shape[0]

    def rows(self, label=None):
        for j in range(self.values.shape[1]):
            row = {"link": j + 1, "metric": self.metric}
            if label is not None:
                row = {"estimator": label, **row}
            row.update(q25=self.q25[j], q50=self.q50[j], q75=self.q75[j], n_reps=self.n_reps)
            yield row


def summarize(values, metric="error"):
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] < 1:
        raise ValueError("need at least one replication")
    q25, q50, q75 = np.nanpercentile(v, [25, 50, 75], axis=0)
    return ErrorSummary(metric, v, q25, q50, q75)


def write_summary_csv(path, summaries):
    """``summaries``: mapping estimator label -> :class:`ErrorSummary`."""
    fields = ["estimator", "link", "metric", "q25", "q50", "q75", "n_reps"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for label, s in summaries.items():
            for row in s.rows(label):
                w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in row.items()})


def read_summary_csv(path):
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["estimator"], []).append(
                {
                    "link": int(row["link"]),
                    "metric": row["metric"],
                    "q25": float(row["q25"]),
                    "q50": float(row["q50"]),
                    "q75": float(row["q75"]),
                    "n_reps": int(row["n_reps"]),
                }
            )
    return out
