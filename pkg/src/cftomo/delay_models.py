"""Link delay distributions.

Two families live here. :class:`MixtureSpec` plus a weight vector is the
estimable model: an optional zero-delay atom, piecewise-uniform bins for the
body and a shifted exponential tail. The parametric classes
(:class:`Exponential`, :class:`Gamma`, :class:`Weibull`, :class:`Discrete`,
:class:`FiniteMixture`) are ground-truth generators for simulations.

Atoms are kept as explicit ``(location, mass)`` pairs: ``mixture_density``
only reports the continuous part.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from . import kernels
from .kernels import ATOM, TAIL, UNIFORM


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class MixtureSpec:
    """Basis layout for one link.

    ``bin_endpoints`` are ``0 = b_1 < ... < b_m``; they define ``m - 1``
    uniform bins and the tail starts at ``b_m``. ``atoms`` lists point-mass
    locations (``(0.0,)`` for the usual zero atom; a full lattice for the
    discrete studies). ``tail_scale=None`` drops the tail component.
    """

    link: object
    bin_endpoints: tuple = ()
    tail_scale: float | None = None
    atoms: tuple = ()

    def __post_init__(self):
        b = tuple(float(x) for x in self.bin_endpoints)
        object.__setattr__(self, "bin_endpoints", b)
        object.__setattr__(self, "atoms", tuple(float(x) for x in self.atoms))
        if b:
            if b[0] != 0.0:
                raise ValueError("first bin endpoint must be 0")
            if any(y <= x for x, y in zip(b, b[1:])):
                raise ValueError("bin endpoints must be strictly increasing")
        if self.tail_scale is not None:
            if not self.tail_scale > 0:
                raise ValueError("tail scale must be positive")
            if not b:
                raise ValueError("a tail needs at least one bin endpoint")
        if self.n == 0:
            raise ValueError("mixture has no components")

    @classmethod
    def body(cls, link, endpoints, tail_scale, zero_atom=False):
        return cls(link, tuple(endpoints), tail_scale, (0.0,) if zero_atom else ())

    @classmethod
    def grid(cls, link, points):
        return cls(link, (), None, tuple(points))

    @property
    def include_zero_atom(self):
        return 0.0 in self.atoms

    @property
    def n_bins(self):
        return max(len(self.bin_endpoints) - 1, 0)

    @property
    def n(self):
        return len(self.atoms) + self.n_bins + (self.tail_scale is not None)

    @property
    def components(self):
        """``(kinds, lo, hi)`` arrays in component order: atoms, bins, tail."""
        kinds, lo, hi = [], [], []
        for a in self.atoms:
            kinds.append(ATOM)
            lo.append(a)
            hi.append(a)
        b = self.bin_endpoints
        for x, y in zip(b, b[1:]):
            kinds.append(UNIFORM)
            lo.append(x)
            hi.append(y)
        if self.tail_scale is not None:
            kinds.append(TAIL)
            lo.append(b[-1])
            hi.append(self.tail_scale)
        return np.array(kinds, dtype=np.int64), np.array(lo), np.array(hi)

    def to_dict(self):
        d = {
            "link": self.link,
            "zero_atom": self.include_zero_atom,
            "bins": list(self.bin_endpoints),
            "tail_scale": self.tail_scale,
        }
        extra = [a for a in self.atoms if a != 0.0]
        if extra:
            d["atoms"] = list(self.atoms)
        return d

    @classmethod
    def from_dict(cls, d):
        atoms = d.get("atoms")
        if atoms is None:
            atoms = (0.0,) if d.get("zero_atom") else ()
        return cls(d["link"], tuple(d.get("bins", ())), d.get("tail_scale"), tuple(atoms))


def check_weights(weights, n=None, tol=1e-9):
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or (n is not None and w.shape[0] != n):
        raise ValueError(f"expected {n} weights, got shape {w.shape}")
    if (w < -tol).any() or abs(w.sum() - 1.0) > tol:
        raise ValueError("weights must be nonnegative and sum to one")
    w = np.clip(w, 0.0, None)
    return w / w.sum()


def basis_cf(spec, component_index, t):
    kinds, lo, hi = spec.components
    i = component_index
    tab = kernels.basis_table_numpy(np.atleast_1d(t), kinds[i:i + 1], lo[i:i + 1], hi[i:i + 1])
    out = tab[..., 0]
    return out[0] if np.ndim(t) == 0 else out


def basis_cf_table(spec, t):
    """CF of every component at every ``t``: shape ``t.shape + (n,)``."""
    return kernels.basis_table(np.asarray(t, dtype=float), *spec.components)


def mixture_cf(spec, weights, t):
    out = basis_cf_table(spec, np.atleast_1d(t)) @ np.asarray(weights, dtype=float)
    return out[0] if np.ndim(t) == 0 else out


def _pieces(spec, weights):
    kinds, lo, hi = spec.components
    return kinds, lo, hi, np.asarray(weights, dtype=float)


def atom_masses(spec, weights):
    kinds, lo, _, w = _pieces(spec, weights)
    m = kinds == ATOM
    return list(zip(lo[m], w[m]))


def mixture_density(spec, weights, x):
    """Continuous part of the density; atoms are reported by :func:`atom_masses`."""
    kinds, lo, hi, w = _pieces(spec, weights)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for k, a, b, p in zip(kinds, lo, hi, w):
        if p == 0.0 or k == ATOM:
            continue
        if k == UNIFORM:
            out += p * ((x >= a) & (x < b)) / (b - a)
        else:
            z = np.clip(x - a, 0.0, None)
            out += p * (x >= a) * np.exp(-z / b) / b
    return out


def mixture_cdf(spec, weights, x):
    kinds, lo, hi, w = _pieces(spec, weights)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for k, a, b, p in zip(kinds, lo, hi, w):
        if p == 0.0:
            continue
        if k == ATOM:
            out += p * (x >= a)
        elif k == UNIFORM:
            out += p * np.clip((x - a) / (b - a), 0.0, 1.0)
        else:
            out += p * -np.expm1(-np.clip(x - a, 0.0, None) / b)
    return np.minimum(out, 1.0)


def mixture_quantile(spec, weights, p):
    """Generalized inverse ``inf{x : F(x) >= p}``.

    Components are disjoint except at shared endpoints, so the CDF is a
    concatenation of closed-form pieces ordered by location.
    """
    p = np.asarray(p, dtype=float)
    if ((p <= 0.0) | (p >= 1.0)).any():
        raise DomainError("quantile levels must lie in (0, 1)")
    kinds, lo, hi, w = _pieces(spec, weights)
    # order by location; an atom sorts before a bin starting at the same place
    order = np.lexsort((kinds != ATOM, lo))
    kinds, lo, hi, w = kinds[order], lo[order], hi[order], w[order]
    keep = w > 0
    kinds, lo, hi, w = kinds[keep], lo[keep], hi[keep], w[keep]
    cum = np.concatenate([[0.0], np.cumsum(w)])
    cum[-1] = 1.0
    idx = np.clip(np.searchsorted(cum, p, side="left") - 1, 0, len(w) - 1)
    frac = np.clip((p - cum[idx]) / w[idx], 0.0, 1.0)
    k, a, b = kinds[idx], lo[idx], hi[idx]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(
            k == ATOM,
            a,
            np.where(k == UNIFORM, a + frac * (b - a), a - b * np.log1p(-np.minimum(frac, 1 - 1e-16))),
        )
    return out


def mixture_mean(spec, weights):
    kinds, lo, hi, w = _pieces(spec, weights)
    m = np.where(kinds == ATOM, lo, np.where(kinds == UNIFORM, 0.5 * (lo + hi), lo + hi))
    return float(w @ m)


def mixture_var(spec, weights):
    kinds, lo, hi, w = _pieces(spec, weights)
    second = np.where(
        kinds == ATOM,
        lo**2,
        np.where(kinds == UNIFORM, (lo**2 + lo * hi + hi**2) / 3.0, lo**2 + 2 * lo * hi + 2 * hi**2),
    )
    return float(w @ second - mixture_mean(spec, weights) ** 2)


def mixture_sample(spec, weights, rng, count):
    kinds, lo, hi, w = _pieces(spec, weights)
    comp = rng.choice(len(w), size=count, p=w)
    k, a, b = kinds[comp], lo[comp], hi[comp]
    u = rng.random(count)
    e = rng.standard_exponential(count)
    return np.where(k == ATOM, a, np.where(k == UNIFORM, a + u * (b - a), a + b * e))


@dataclass(frozen=True)
class LinkMixture:
    """A :class:`MixtureSpec` together with its mixing probabilities."""

    spec: MixtureSpec
    weights: np.ndarray

    def __post_init__(self):
        w = check_weights(self.weights, self.spec.n)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def cf(self, t):
        return mixture_cf(self.spec, self.weights, t)

    def pdf(self, x):
        return mixture_density(self.spec, self.weights, x)

    def cdf(self, x):
        return mixture_cdf(self.spec, self.weights, x)

    def quantile(self, p):
        return mixture_quantile(self.spec, self.weights, p)

    def sample(self, rng, count):
        return mixture_sample(self.spec, self.weights, rng, count)

    @property
    def mean(self):
        return mixture_mean(self.spec, self.weights)

    @property
    def var(self):
        return mixture_var(self.spec, self.weights)

    @property
    def atoms(self):
        return atom_masses(self.spec, self.weights)

    def to_dict(self):
        d = self.spec.to_dict()
        d["weights"] = [float(x) for x in self.weights]
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(MixtureSpec.from_dict(d), np.asarray(d["weights"], dtype=float))


# ------------------------------------------------------------------ parametric


def _bisect_quantile(cdf, p, lo, hi, iters=200):
    """Vectorized bisection for ``inf{x : cdf(x) >= p}`` inside ``[lo, hi]``."""
    p = np.asarray(p, dtype=float)
    a = np.full(p.shape, float(lo))
    b = np.full(p.shape, float(hi))
    for _ in range(iters):
        m = 0.5 * (a + b)
        up = cdf(m) >= p
        b = np.where(up, m, b)
        a = np.where(up, a, m)
        if np.all(b - a <= 1e-13 * (1.0 + np.abs(b))):
            break
    # atoms at the lower end are hit exactly, not approached from above
    return np.where(cdf(a) >= p, a, b)


def _check_p(p):
    p = np.asarray(p, dtype=float)
    if ((p <= 0.0) | (p >= 1.0)).any():
        raise DomainError("quantile levels must lie in (0, 1)")
    return p


@dataclass(frozen=True)
class Exponential:
    mean: float
    kind = "exponential"

    def __post_init__(self):
        if not self.mean > 0:
            raise ValueError("exponential mean must be positive")

    def cf(self, t):
        return 1.0 / (1.0 - 1j * np.asarray(t) * self.mean)

    def cdf(self, x):
        return -np.expm1(-np.clip(np.asarray(x, dtype=float), 0.0, None) / self.mean)

    def quantile(self, p):
        return -self.mean * np.log1p(-_check_p(p))

    def sample(self, rng, count):
        return self.mean * rng.standard_exponential(count)

    @property
    def var(self):
        return self.mean**2

    def to_dict(self):
        return {"kind": self.kind, "mean": self.mean}


@dataclass(frozen=True)
class Gamma:
    shape: float
    mean: float
    kind = "gamma"

    def __post_init__(self):
        if not (self.shape > 0 and self.mean > 0):
            raise ValueError("gamma shape and mean must be positive")

    @property
    def scale(self):
        return self.mean / self.shape

    def cf(self, t):
        return (1.0 - 1j * np.asarray(t) * self.scale) ** (-self.shape)

    def cdf(self, x):
        return stats.gamma.cdf(x, self.shape, scale=self.scale)

    def quantile(self, p):
        return stats.gamma.ppf(_check_p(p), self.shape, scale=self.scale)

    def sample(self, rng, count):
        return rng.gamma(self.shape, self.scale, count)

    @property
    def var(self):
        return self.shape * self.scale**2

    def to_dict(self):
        return {"kind": self.kind, "shape": self.shape, "mean": self.mean}


@dataclass(frozen=True)
class Weibull:
    shape: float
    scale: float
    kind = "weibull"

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("weibull shape and scale must be positive")

    @classmethod
    def with_mean(cls, shape, mean):
        return cls(shape, mean / math.gamma(1.0 + 1.0 / shape))

    @property
    def mean(self):
        return self.scale * math.gamma(1.0 + 1.0 / self.shape)

    @property
    def var(self):
        k = self.shape
        return self.scale**2 * (math.gamma(1 + 2 / k) - math.gamma(1 + 1 / k) ** 2)

    def cf(self, t):
        # no closed form unless shape == 1: Fourier integrals by QUADPACK
        t0 = np.asarray(t, dtype=float)
        if self.shape == 1.0:
            return 1.0 / (1.0 - 1j * t0 * self.scale)
        pdf = lambda x: stats.weibull_min.pdf(x, self.shape, scale=self.scale)
        # shape < 1 puts an integrable pole at 0, which the Fourier-weighted
        # rule cannot handle: do [0, scale] with plain quadrature
        c = self.scale
        out = []
        for v in t0.ravel():
            if v == 0.0:
                out.append(1.0 + 0.0j)
                continue
            lim = 50 + int(abs(v) * c * 4)
            re = integrate.quad(lambda x: pdf(x) * np.cos(v * x), 0.0, c, limit=lim)[0]
            im = integrate.quad(lambda x: pdf(x) * np.sin(v * x), 0.0, c, limit=lim)[0]
            re += integrate.quad(pdf, c, np.inf, weight="cos", wvar=v)[0]
            im += integrate.quad(pdf, c, np.inf, weight="sin", wvar=v)[0]
            out.append(complex(re, im))
        out = np.array(out).reshape(t0.shape)
        return out[()] if out.ndim == 0 else out

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, None)
        return -np.expm1(-((x / self.scale) ** self.shape))

    def quantile(self, p):
        return self.scale * (-np.log1p(-_check_p(p))) ** (1.0 / self.shape)

    def sample(self, rng, count):
        return self.scale * rng.weibull(self.shape, count)

    def to_dict(self):
        return {"kind": self.kind, "shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class Discrete:
    points: tuple
    probs: tuple
    kind = "discrete"

    def __post_init__(self):
        pts = tuple(float(x) for x in self.points)
        if any(y <= x for x, y in zip(pts, pts[1:])):
            raise ValueError("grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probs", tuple(float(x) for x in check_weights(self.probs, len(pts))))

    @classmethod
    def point_mass(cls, at=0.0):
        return cls((at,), (1.0,))

    @property
    def mean(self):
        return float(np.dot(self.points, self.probs))

    @property
    def var(self):
        return float(np.dot(np.square(self.points), self.probs) - self.mean**2)

    def cf(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(1j * np.multiply.outer(t, self.points)) @ np.asarray(self.probs)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.minimum(np.asarray(self.probs) @ (np.subtract.outer(self.points, x) <= 0), 1.0)

    def quantile(self, p):
        p = _check_p(p)
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, p - 1e-15, side="left")
        return np.asarray(self.points)[np.minimum(idx, len(cum) - 1)]

    def sample(self, rng, count):
        return np.asarray(self.points)[rng.choice(len(self.points), size=count, p=self.probs)]

    def to_dict(self):
        return {"kind": self.kind, "points": list(self.points), "probs": list(self.probs)}


@dataclass(frozen=True)
class FiniteMixture:
    components: tuple
    weights: tuple
    kind = "mixture"

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(
            self, "weights", tuple(float(x) for x in check_weights(self.weights, len(self.components)))
        )

    @property
    def mean(self):
        return float(sum(w * c.mean for c, w in zip(self.components, self.weights)))

    @property
    def var(self):
        second = sum(w * (c.var + c.mean**2) for c, w in zip(self.components, self.weights))
        return float(second - self.mean**2)

    def cf(self, t):
        return sum(w * np.asarray(c.cf(t)) for c, w in zip(self.components, self.weights))

    def cdf(self, x):
        return sum(w * np.asarray(c.cdf(x)) for c, w in zip(self.components, self.weights))

    def quantile(self, p):
        p = _check_p(p)
        hi = max(float(np.max(c.quantile(np.max(p)))) for c in self.components)
        return _bisect_quantile(self.cdf, p, 0.0, max(hi, 1e-12))

    def sample(self, rng, count):
        comp = rng.choice(len(self.components), size=count, p=self.weights)
        out = np.empty(count)
        for i, c in enumerate(self.components):
            m = comp == i
            out[m] = c.sample(rng, int(m.sum()))
        return out

    def to_dict(self):
        return {
            "kind": self.kind,
            "components": [c.to_dict() for c in self.components],
            "weights": list(self.weights),
        }


def zero_inflated(body, atom_mass):
    """``body`` with an extra point mass ``atom_mass`` at zero."""
    return FiniteMixture((Discrete.point_mass(0.0), body), (atom_mass, 1.0 - atom_mass))


def model_from_dict(d):
    kind = d["kind"]
    if kind == "exponential":
        return Exponential(d["mean"])
    if kind == "gamma":
        return Gamma(d["shape"], d["mean"])
    if kind == "weibull":
        return Weibull(d["shape"], d["scale"])
    if kind == "discrete":
        return Discrete(tuple(d["points"]), tuple(d["probs"]))
    if kind == "mixture":
        return FiniteMixture(tuple(model_from_dict(c) for c in d["components"]), tuple(d["weights"]))
    raise ValueError(f"unknown model kind {kind!r}")


def parametric_cf(model, t):
    return model.cf(t)


def sample(model, rng, count):
    """Draw ``count`` i.i.d. delays from a parametric model or a :class:`LinkMixture`."""
    if count < 1:
        raise ValueError("count must be at least 1")
    if isinstance(model, tuple):
        model = LinkMixture(*model)
    return model.sample(rng, count)


def std(model):
    return math.sqrt(max(model.var, 0.0))


__all__ = [
    "DomainError",
    "MixtureSpec",
    "LinkMixture",
    "Exponential",
    "Gamma",
    "Weibull",
    "Discrete",
    "FiniteMixture",
    "zero_inflated",
    "basis_cf",
    "basis_cf_table",
    "mixture_cf",
    "mixture_density",
    "mixture_cdf",
    "mixture_quantile",
    "atom_masses",
    "parametric_cf",
    "sample",
    "model_from_dict",
]
