"""Bin layouts for the link mixtures.

Equal-width bins are sized from per-link moment estimates; varying bins sit
at quantiles of a fitted (or known) link distribution. ``refine`` alternates
the two: equal bins, fit, re-bin at the fitted quantiles, refit.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .delay_models import LinkMixture, MixtureSpec
from .estimators import EstimatorConfig, fit
from .topology import as_matrix, column_rank, pair_index, product_matrix

log = logging.getLogger(__name__)

MIN_TAIL_SCALE = 1e-6
DEGENERATE_WIDTH = 1e-6


class UnidentifiableError(ValueError):
    pass


@dataclass(frozen=True)
class MomentEstimates:
    mean: np.ndarray
    var: np.ndarray
    clamped: np.ndarray

    @property
    def sd(self):
        return np.sqrt(self.var)


def _second_moment_system(A, cov):
    a = as_matrix(A)
    B = product_matrix(a).astype(float)
    rhs = np.array([cov[i, k] for i, k in pair_index(a.shape[0])])
    return B, rhs


def estimate_link_moments(measurements=None, A=None, cov=None, mean=None):
    """Link means and variances from end-to-end moments.

    With independent links, ``Cov(Y_i, Y_k)`` is the summed variance of the
    links shared by paths ``i`` and ``k``, so the variances solve
    ``B v = c`` for the product matrix ``B``. Means come from the
    minimum-norm solution of ``A m = E[Y]``; they are only used to size bin
    spans. Pass ``cov``/``mean`` directly to use population moments.
    """
    a = as_matrix(A).astype(float)
    if cov is None:
        if measurements.N < 2:
            raise ValueError("need at least two probes for covariances")
        cov = np.cov(measurements.Y, rowvar=False).reshape(a.shape[0], a.shape[0])
        mean = measurements.Y.mean(axis=0)
    B, rhs = _second_moment_system(a, np.asarray(cov, dtype=float))
    J = a.shape[1]
    if column_rank(B) < J:
        _, s, vt = np.linalg.svd(B)
        null = vt[np.sum(s > 1e-9 * s[0]):]
        bad = np.flatnonzero(np.abs(null).max(axis=0) > 1e-9)
        raise UnidentifiableError(f"link variances not identifiable for links {bad.tolist()}")
    var = np.linalg.lstsq(B, rhs, rcond=None)[0]
    clamped = var < 0
    var = np.where(clamped, 0.0, var)
    mu = np.linalg.lstsq(a, np.asarray(mean, dtype=float), rcond=None)[0]
    return MomentEstimates(mu, var, clamped)


def crude_tail_scale(moments, j):
    return max(float(moments.sd[j]), MIN_TAIL_SCALE)


def equal_bins(moments, j, n_bins, zero_atom=False, min_sd=0.0):
    """``n_bins`` equal bins over ``[0, max(mean + 3 sd, sd)]`` plus a tail.

    ``min_sd`` floors the spread used for sizing; without it a link whose
    variance estimate was clamped to zero gets a degenerate single bin.
    """
    sd = max(float(moments.sd[j]), min_sd)
    alpha = max(crude_tail_scale(moments, j), min_sd)
    if sd <= 0:
        warnings.warn(f"link {j}: zero variance estimate, using a degenerate single bin", RuntimeWarning)
        return MixtureSpec.body(j, (0.0, DEGENERATE_WIDTH), alpha, zero_atom)
    span = max(float(moments.mean[j]) + 3.0 * sd, sd)
    return MixtureSpec.body(j, tuple(np.linspace(0.0, span, n_bins + 1)), alpha, zero_atom)


def _strictly_increasing(x, gap):
    out = np.array(x, dtype=float)
    for i in range(1, len(out)):
        if out[i] < out[i - 1] + gap:
            out[i] = out[i - 1] + gap
    return out


def varying_bins(fitted, j, n_bins, zero_atom=None, tail_scale=None):
    """Bins ending at the ``i / (n_bins + 1)`` quantiles of ``fitted``.

    ``fitted`` is a :class:`LinkMixture` or any model with ``quantile`` and
    ``cdf``. When the new layout carries a zero atom, the quantiles are taken
    over the positive part of the distribution so the atom does not collapse
    the lowest bins onto zero.
    """
    if zero_atom is None:
        zero_atom = isinstance(fitted, LinkMixture) and fitted.spec.include_zero_atom
    probs = np.arange(1, n_bins + 1) / (n_bins + 1.0)
    if zero_atom:
        p0 = float(np.asarray(fitted.cdf(0.0)))
        probs = p0 + (1.0 - p0) * probs
        probs = np.clip(probs, 1e-12, 1 - 1e-12)
    q = np.asarray(fitted.quantile(probs), dtype=float)
    span = max(float(q[-1]), DEGENERATE_WIDTH)
    ends = _strictly_increasing(np.concatenate([[0.0], np.maximum(q, 0.0)]), 1e-9 * span)
    if tail_scale is None:
        tail_scale = fitted.spec.tail_scale if isinstance(fitted, LinkMixture) else None
        if tail_scale is None:
            tail_scale = max(np.sqrt(fitted.var), MIN_TAIL_SCALE)
    return MixtureSpec.body(j, tuple(ends), tail_scale, zero_atom)


@dataclass
class RefineResult:
    specs: list
    result: object
    history: list = field(default_factory=list)


def sd_floor(measurements, fraction=0.1):
    """Spread floor for links whose variance estimate is lost in sampling noise."""
    return fraction * float(measurements.sds.min())


def refine(measurements, A, n_bins=12, rounds=2, zero_atom=False, config=EstimatorConfig(), rng=None, freqs=None):
    """Equal-bin CF fit followed by ``rounds`` quantile re-binnings.

    ``history`` keeps every intermediate fit; the first entry is the
    equal-bin fit. The same frequency set is reused across rounds.
    """
    a = as_matrix(A)
    moments = estimate_link_moments(measurements, a)
    floor = sd_floor(measurements)
    specs = [equal_bins(moments, j, n_bins, zero_atom, floor) for j in range(a.shape[1])]
    res = fit(measurements, a, specs, config, rng=rng, freqs=freqs)
    history = [res]
    for _ in range(rounds):
        specs = [varying_bins(m, j, n_bins, zero_atom) for j, m in enumerate(res.links)]
        res = fit(measurements, a, specs, config, freqs=res.freqs)
        history.append(res)
    return RefineResult(specs, res, history)
