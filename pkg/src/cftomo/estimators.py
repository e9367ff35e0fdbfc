"""Mixture-weight estimators.

``fit`` and ``fit_wcf`` minimize the (weighted) squared distance between the
empirical and model CF of ``Y`` at sampled frequencies. Because the model CF
is linear in each link's weights when the other links are held fixed, every
block update is a small quadratic program over the simplex; cycling over
links never increases the objective.

``fit_mle_discrete`` is the EM baseline for lattice-valued link delays.
"""

import logging
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from . import kernels
from .cf_engine import CFCache, FrequencySet, sample_frequencies, weight_matrix
from .delay_models import LinkMixture, MixtureSpec
from .qp import QPError, solve_simplex_qp
from .topology import as_matrix

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class BudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class EstimatorConfig:
    variant: str = "cf"
    max_iter: int = 50
    tol: float = 1e-6
    delta: float | None = None  # WCF ridge; None means N**-0.5
    qp_tol: float = 1e-12
    n_starts: int = 1
    k: int = 3000
    k_wcf: int | None = None
    t_scale: float = 5.0
    em_max_iter: int = 500
    em_tol: float = 1e-8

    def __post_init__(self):
        if self.variant not in {"cf", "wcf", "mle"}:
            raise ConfigError(f"unknown estimator {self.variant!r}")
        if self.tol <= 0 or self.qp_tol <= 0 or self.em_tol <= 0:
            raise ConfigError("tolerances must be positive")
        if self.delta is not None and self.delta < 0:
            raise ConfigError("delta must be nonnegative")
        if self.max_iter < 1 or self.n_starts < 1 or self.k < 1:
            raise ConfigError("iteration counts must be positive")


@dataclass(frozen=True)
class QuadraticSubproblem:
    D: np.ndarray
    d: np.ndarray

    def value(self, theta):
        theta = np.asarray(theta, dtype=float)
        return float(theta @ self.D @ theta - 2.0 * self.d @ theta)


@dataclass
class EstimationResult:
    links: list
    objective: list
    iterations: int
    converged: bool
    wall_time: float
    variant: str = "cf"
    freqs: FrequencySet | None = field(default=None, repr=False)
    delta: float | None = None
    loglik: list | None = None

    @property
    def specs(self):
        return [m.spec for m in self.links]

    @property
    def weights(self):
        return [np.asarray(m.weights) for m in self.links]

    def to_dict(self):
        out = {
            "variant": self.variant,
            "links": [m.to_dict() for m in self.links],
            "objective": [float(v) for v in self.objective],
            "iterations": self.iterations,
            "converged": self.converged,
            "wall_time": self.wall_time,
        }
        if self.freqs is not None:
            out["k_frequencies"] = self.freqs.K
            out["t_scale"] = self.freqs.scale
        if self.delta is not None:
            out["delta"] = self.delta
        if self.loglik is not None:
            out["loglik"] = [float(v) for v in self.loglik]
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(
            links=[LinkMixture.from_dict(x) for x in d["links"]],
            objective=list(d["objective"]),
            iterations=d["iterations"],
            converged=d["converged"],
            wall_time=d["wall_time"],
            variant=d.get("variant", "cf"),
            delta=d.get("delta"),
            loglik=d.get("loglik"),
        )


class _Weighting:
    """``G = (W + delta I)^{-1}`` applied through a Cholesky factor."""

    def __init__(self, W, delta):
        K = W.shape[0]
        while True:
            try:
                self.factor = linalg.cho_factor(W + delta * np.eye(K), lower=True, check_finite=False)
                break
            except linalg.LinAlgError:
                warnings.warn(f"W + {delta:g} I is numerically singular; raising delta tenfold", RuntimeWarning)
                delta = 10.0 * delta if delta > 0 else 1e-8
        self.delta = delta

    def solve(self, x):
        return linalg.cho_solve(self.factor, x, check_finite=False)


def _objective(cache, weighting=None):
    eps = cache.residuals()
    if weighting is None:
        return float(np.vdot(eps, eps).real)
    return float(np.vdot(eps, weighting.solve(eps)).real)


def assemble_subproblem(j, cache, weighting=None):
    """Quadratic form in link ``j``'s weights with the other links fixed.

    ``C(theta) = theta' D theta - 2 theta' d`` differs from the full objective
    by a constant. With ``M`` the design matrix of :meth:`CFCache.design`,
    ``D = N Re(M^H G M)`` and ``d = N Re(M^H G ecf)`` where ``G`` is the
    identity (CF) or ``(W + delta I)^{-1}`` (WCF).
    """
    M = cache.design(j)
    N = cache.N
    if weighting is None:
        GM, Ge = M, cache.ecf
    else:
        GM = weighting.solve(M)
        Ge = weighting.solve(cache.ecf)
    D = N * (M.conj().T @ GM).real
    d = N * (M.conj().T @ Ge).real
    return QuadraticSubproblem(0.5 * (D + D.T), d)


def _check_dims(measurements, A, specs):
    a = as_matrix(A)
    if measurements.I != a.shape[0]:
        raise ConfigError(f"measurements have {measurements.I} columns, routing matrix {a.shape[0]} rows")
    if len(specs) != a.shape[1]:
        raise ConfigError(f"{len(specs)} mixture specs for {a.shape[1]} links")
    return a


def _descend(cache, config, weighting=None):
    current = _objective(cache, weighting)
    trace = [current]
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        start = current
        for j in range(cache.J):
            sub = assemble_subproblem(j, cache, weighting)
            old = cache._weights[j]
            try:
                new = solve_simplex_qp(sub.D, sub.d, x0=old, tol=config.qp_tol)
            except QPError as exc:
                log.warning("link %d: %s; keeping previous weights", j, exc)
                continue
            cache.update(j, new)
            val = _objective(cache, weighting)
            if val > current:
                cache.update(j, old)
            else:
                current = val
        trace.append(current)
        if start - current <= config.tol * max(abs(start), 1e-300):
            converged = True
            break
    return trace, it, converged


def _start_weights(specs, rng, start):
    if start == 0 or rng is None:
        return [np.full(s.n, 1.0 / s.n) for s in specs]
    return [rng.dirichlet(np.ones(s.n)) for s in specs]


def fit(measurements, A, specs, config=EstimatorConfig(), rng=None, freqs=None, initial=None):
    """CF estimator by iterative quadratic programming.

    Starts from uniform weights (or ``initial``), then cycles over links in
    column order until the relative objective decrease drops below
    ``config.tol``. Extra starts (``config.n_starts``) draw Dirichlet(1)
    weights from ``rng`` and the lowest objective wins.
    """
    t0 = time.perf_counter()
    a = _check_dims(measurements, A, specs)
    if freqs is None:
        if rng is None:
            raise ConfigError("need rng or freqs to fix the frequency points")
        freqs = sample_frequencies(measurements.I, config.k, config.t_scale, measurements.sds, rng)
    ecf = None
    best = None
    for s in range(config.n_starts):
        w0 = [np.asarray(w, dtype=float) for w in initial] if (initial is not None and s == 0) else _start_weights(specs, rng, s)
        cache = CFCache.build(measurements, a, specs, w0, freqs, ecf=ecf)
        ecf = cache.ecf
        trace, it, conv = _descend(cache, config)
        if best is None or trace[-1] < best[0][-1]:
            best = (trace, it, conv, cache.weights)
    trace, it, conv, weights = best
    links = [LinkMixture(s, w) for s, w in zip(specs, weights)]
    return EstimationResult(links, trace, it, conv, time.perf_counter() - t0, "cf", freqs)


def fit_wcf(measurements, A, specs, config, initial):
    """Weighted CF estimator started from (and weighted by) a CF fit.

    ``W`` is evaluated once at ``initial``; ``config.k_wcf`` optionally keeps
    only the first frequencies of ``initial.freqs`` to cap the ``K^3`` cost.
    """
    t0 = time.perf_counter()
    a = _check_dims(measurements, A, specs)
    if initial.freqs is None:
        raise ConfigError("initial estimate carries no frequency set")
    freqs = initial.freqs.subset(config.k_wcf) if config.k_wcf else initial.freqs
    delta = config.delta if config.delta is not None else measurements.N ** -0.5
    W = weight_matrix(a, initial.links, freqs)
    weighting = _Weighting(W, delta)
    cache = CFCache.build(measurements, a, specs, initial.weights, freqs)
    trace, it, conv = _descend(cache, config, weighting)
    links = [LinkMixture(s, w) for s, w in zip(specs, cache.weights)]
    return EstimationResult(links, trace, it, conv, time.perf_counter() - t0, "wcf", freqs, weighting.delta)


def weighted_objective(measurements, A, links, freqs, W, delta):
    """``eps^H (W + delta I)^{-1} eps`` evaluated densely (test oracle helper)."""
    from .cf_engine import residuals

    eps = residuals(measurements, A, links, freqs)
    return float(np.vdot(eps, np.linalg.solve(W + delta * np.eye(len(eps)), eps)).real)


# ----------------------------------------------------------------------- EM


def _lattice(measurements, points):
    pts = np.asarray(points, dtype=float)
    if not np.allclose(pts, np.arange(len(pts))):
        raise ConfigError("discrete MLE needs the integer grid 0..n-1")
    y = np.rint(measurements.Y)
    if np.abs(y - measurements.Y).max() > 1e-9:
        raise ConfigError("measurements are not integer-valued")
    return y.astype(np.int64)


def fit_mle_discrete(measurements, A, points, config=EstimatorConfig(variant="mle"), budget=10**7):
    """EM for link pmfs on the grid ``{0, ..., n-1}``.

    The E-step enumerates every joint link-delay vector, keeps those whose
    path sums match an observed ``Y`` and spreads each observation over its
    consistent vectors in proportion to their prior probability.
    """
    t0 = time.perf_counter()
    a = as_matrix(A).astype(np.int64)
    I, J = a.shape
    n = len(points)
    if measurements.I != I:
        raise ConfigError("measurement columns do not match the routing matrix")
    if float(n) ** J > budget:
        raise BudgetError(f"{n}^{J} joint configurations exceed the enumeration budget of {budget}")
    y = _lattice(measurements, points)

    configs = np.indices((n,) * J).reshape(J, -1).T
    ysum = configs @ a.T
    base = int(max(ysum.max(), y.max())) + 1
    radix = base ** np.arange(I, dtype=np.int64)
    obs, counts = np.unique(y @ radix, return_counts=True)
    keys = ysum @ radix
    pos = np.searchsorted(obs, keys)
    pos = np.minimum(pos, len(obs) - 1)
    keep = obs[pos] == keys
    if np.unique(pos[keep]).size != obs.size:
        raise ConfigError("some observations are impossible on this grid")
    configs = configs[keep]
    group = pos[keep]

    probs = np.full((J, n), 1.0 / n)
    lls = []
    converged = False
    it = 0
    for it in range(1, config.em_max_iter + 1):
        new, ll = kernels.em_step(configs, group, counts.astype(float), probs)
        lls.append(ll)
        probs = new
        if len(lls) > 1 and abs(lls[-1] - lls[-2]) <= config.em_tol * abs(lls[-2]):
            converged = True
            break
    links = [LinkMixture(MixtureSpec.grid(j, points), p) for j, p in enumerate(probs)]
    return EstimationResult(
        links, [-v for v in lls], it, converged, time.perf_counter() - t0, "mle", loglik=lls
    )


def fit_variant(measurements, A, specs, config, rng=None, freqs=None, initial=None):
    """Dispatch on ``config.variant``; WCF runs its own CF pre-fit when needed."""
    if config.variant == "cf":
        return fit(measurements, A, specs, config, rng=rng, freqs=freqs)
    if config.variant == "wcf":
        if initial is None:
            initial = fit(measurements, A, specs, replace(config, variant="cf"), rng=rng, freqs=freqs)
        return fit_wcf(measurements, A, specs, config, initial)
    points = specs[0].atoms
    return fit_mle_discrete(measurements, A, points, config)
