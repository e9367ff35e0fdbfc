"""Empirical and model characteristic functions of the end-to-end delays."""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import kernels
from .topology import as_matrix


@dataclass(frozen=True)
class MeasurementSet:
    """``N`` probes by ``I`` receivers of end-to-end delays."""

    Y: np.ndarray
    leaves: tuple = ()

    def __post_init__(self):
        y = np.array(self.Y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2 or y.shape[0] < 1:
            raise ValueError("measurements must be a non-empty N x I array")
        if not np.isfinite(y).all():
            raise ValueError("measurements must be finite")
        if (y < 0).any():
            raise ValueError("delays must be nonnegative")
        y.setflags(write=False)
        object.__setattr__(self, "Y", y)
        leaves = tuple(self.leaves) or tuple(range(y.shape[1]))
        if len(leaves) != y.shape[1]:
            raise ValueError("leaf labels do not match the column count")
        object.__setattr__(self, "leaves", leaves)

    @property
    def N(self):
        return self.Y.shape[0]

    @property
    def I(self):
        return self.Y.shape[1]

    @property
    def sds(self):
        ddof = 1 if self.N > 1 else 0
        return self.Y.std(axis=0, ddof=ddof)


@dataclass(frozen=True)
class FrequencySet:
    """Sampled frequency points ``t_k`` (rows of ``points``)."""

    points: np.ndarray
    pairs: np.ndarray
    scale: float = 5.0
    subspace_dim: int = 2
    seed: object = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("need at least one frequency point")
        if (np.count_nonzero(pts, axis=1) > self.subspace_dim).any():
            raise ValueError("frequency point outside its sampling subspace")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def K(self):
        return self.points.shape[0]

    def subset(self, K):
        """First ``K`` points; the round-robin schedule keeps pairs balanced."""
        K = min(K, self.K)
        return FrequencySet(self.points[:K], self.pairs[:K], self.scale, self.subspace_dim, self.seed)


def empirical_cf(measurements, t):
    """``(1/N) sum_n exp(i t . Y(n))`` for one point or a ``K x I`` batch."""
    Y = measurements.Y if isinstance(measurements, MeasurementSet) else np.asarray(measurements, dtype=float)
    T = np.asarray(t, dtype=float)
    single = T.ndim == 1
    out = kernels.ecf(Y, np.atleast_2d(T))
    return out[0] if single else out


def _link_mixtures(link_models):
    out = []
    for m in link_models:
        if isinstance(m, tuple):
            from .delay_models import LinkMixture

            m = LinkMixture(*m)
        out.append(m)
    return out


def model_cf_y(A, link_models, t):
    """``prod_j phi_{X_j}(t . A^j)`` for one point or a ``K x I`` batch."""
    a = as_matrix(A).astype(float)
    models = _link_mixtures(link_models)
    if len(models) != a.shape[1]:
        raise ValueError("need one link model per routing-matrix column")
    T = np.asarray(t, dtype=float)
    single = T.ndim == 1
    U = np.atleast_2d(T) @ a
    out = np.ones(U.shape[0], dtype=complex)
    for j, m in enumerate(models):
        out *= m.cf(U[:, j])
    return out[0] if single else out


def sample_frequencies(I, K, scale, sds, rng, seed=None):
    """Gaussian frequencies on 2-dim coordinate subspaces.

    Point ``k`` lives on receiver pair ``k mod P`` (round robin over the
    ``P = I(I-1)/2`` pairs). Its two coordinates are ``N(0, scale^2)`` draws
    divided by the matching empirical standard deviations, which is the same
    as sampling against standardized measurements. For ``I == 1`` points are
    1-dim.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    sds = np.asarray(sds, dtype=float)
    if sds.shape != (I,):
        raise ValueError("need one standard deviation per receiver")
    sds = np.where(sds > 0, sds, 1.0)
    if I == 1:
        pairs = np.zeros((K, 2), dtype=np.int64)
        pts = (scale * rng.standard_normal(K) / sds[0])[:, None]
        return FrequencySet(pts, pairs, scale, 1, seed)
    allpairs = np.array(list(combinations(range(I), 2)), dtype=np.int64)
    pairs = allpairs[np.arange(K) % len(allpairs)]
    z = scale * rng.standard_normal((K, 2))
    pts = np.zeros((K, I))
    rows = np.arange(K)
    pts[rows, pairs[:, 0]] = z[:, 0] / sds[pairs[:, 0]]
    pts[rows, pairs[:, 1]] = z[:, 1] / sds[pairs[:, 1]]
    return FrequencySet(pts, pairs, scale, 2, seed)


def residuals(measurements, A, link_models, freqs):
    """``sqrt(N) (empirical CF - model CF)`` at every frequency."""
    T = freqs.points if isinstance(freqs, FrequencySet) else np.atleast_2d(freqs)
    N = measurements.N
    return np.sqrt(N) * (empirical_cf(measurements, T) - model_cf_y(A, link_models, T))


def _flatten(models):
    kinds, lo, hi, w, offsets = [], [], [], [], [0]
    for m in models:
        k, a, b = m.spec.components
        kinds.append(k)
        lo.append(a)
        hi.append(b)
        w.append(np.asarray(m.weights, dtype=float))
        offsets.append(offsets[-1] + len(k))
    return (
        np.concatenate(kinds),
        np.concatenate(lo),
        np.concatenate(hi),
        np.concatenate(w),
        np.array(offsets, dtype=np.int64),
    )


def weight_matrix(A, link_models, freqs):
    """Residual covariance ``W_jk = phi(t_j - t_k) - phi(t_j) phi(t_k)^*``."""
    a = as_matrix(A).astype(float)
    models = _link_mixtures(link_models)
    T = freqs.points if isinstance(freqs, FrequencySet) else np.atleast_2d(freqs)
    U = T @ a
    phi = model_cf_y(a, models, T)
    return kernels.weight_matrix(U, *_flatten(models), phi)


@dataclass
class CFCache:
    """Per-link CF tables for coordinate descent.

    ``basis[j]`` is the ``K x n_j`` table of basis CFs at ``t_k . A^j`` (fixed
    while the bins are fixed); ``link_cf[j]`` is ``basis[j] @ theta_j`` and is
    refreshed only when link ``j`` is updated.
    """

    basis: list
    link_cf: np.ndarray
    ecf: np.ndarray
    N: int
    _weights: list = field(default_factory=list)

    @classmethod
    def build(cls, measurements, A, specs, weights, freqs, ecf=None):
        a = as_matrix(A).astype(float)
        T = freqs.points
        U = T @ a
        basis = [kernels.basis_table(np.ascontiguousarray(U[:, j]), *s.components) for j, s in enumerate(specs)]
        if ecf is None:
            ecf = empirical_cf(measurements, T)
        link_cf = np.empty((len(specs), T.shape[0]), dtype=complex)
        for j, (tab, w) in enumerate(zip(basis, weights)):
            link_cf[j] = tab @ w
        return cls(basis, link_cf, ecf, measurements.N, [np.array(w, dtype=float) for w in weights])

    @property
    def J(self):
        return len(self.basis)

    @property
    def weights(self):
        return [w.copy() for w in self._weights]

    def others(self, j):
        if self.J == 1:
            return np.ones(self.link_cf.shape[1], dtype=complex)
        return np.prod(np.delete(self.link_cf, j, axis=0), axis=0)

    def design(self, j):
        """``M`` with ``model CF = M @ theta_j`` while the other links are fixed."""
        return self.others(j)[:, None] * self.basis[j]

    def update(self, j, w):
        w = np.array(w, dtype=float)
        self._weights[j] = w
        self.link_cf[j] = self.basis[j] @ w

    def model(self):
        return np.prod(self.link_cf, axis=0)

    def residuals(self):
        return np.sqrt(self.N) * (self.ecf - self.model())
