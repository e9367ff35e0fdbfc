"""Numerical identifiability checks.

Two sides: the product-matrix rank criterion (full column rank implies the
link distributions are identified up to shift), and a concrete pair of
two-leaf-tree models built from Polya-type characteristic functions whose
end-to-end joint CFs coincide although the shared-link marginals differ.
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .topology import as_matrix, column_rank, product_matrix


def polya_cf(a, lam, t):
    """``exp(-lam|t|)`` up to ``|t| = a``, then a linear ramp hitting 0 at ``a + 1/lam``."""
    if a < 0 or lam <= 0:
        raise ValueError("need a >= 0 and lam > 0")
    x = np.abs(np.asarray(t, dtype=float))
    head = np.exp(-lam * x) * (x <= a)
    ramp = lam * np.exp(-lam * a) * (a + 1.0 / lam - x) * ((x > a) & (x <= a + 1.0 / lam))
    out = head + ramp
    return out[()] if out.ndim == 0 else out


def polya_density(a, lam, x):
    """Density behind :func:`polya_cf`: ``(1/pi) int_0^{a+1/lam} c(t) cos(tx) dt``."""
    top = a + 1.0 / lam
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(xs)
    brk = [a] if 0 < a < top else None
    for i, v in enumerate(xs):
        out[i] = integrate.quad(lambda t: polya_cf(a, lam, t) * np.cos(t * v), 0.0, top, points=brk, limit=200)[0] / np.pi
    return out if np.ndim(x) else out[0]


# the counterexample: X1 ~ c(.;2,1) versus X1' ~ c(.;3,1); X2, X3 ~ c(.;0,1) in both
COUNTER_A, COUNTER_A_ALT, COUNTER_LAM = 2.0, 3.0, 1.0


def counterexample_joint_cfs(t, s):
    """Joint CFs of ``(X1 + X2, X1 + X3)`` for both models on a (t, s) grid."""
    tt, ss = np.meshgrid(np.asarray(t, dtype=float), np.asarray(s, dtype=float), indexing="ij")
    side = polya_cf(0.0, COUNTER_LAM, tt) * polya_cf(0.0, COUNTER_LAM, ss)
    first = polya_cf(COUNTER_A, COUNTER_LAM, tt + ss) * side
    second = polya_cf(COUNTER_A_ALT, COUNTER_LAM, tt + ss) * side
    return first, second


def counterexample_joint_cf_gap(t=None, s=None):
    if t is None:
        t = np.linspace(-3.0, 3.0, 601)
    if s is None:
        s = t
    first, second = counterexample_joint_cfs(t, s)
    return float(np.abs(first - second).max())


def counterexample_marginal_gap(t=None):
    if t is None:
        t = np.linspace(-4.0, 4.0, 8001)
    return float(np.abs(polya_cf(COUNTER_A, COUNTER_LAM, t) - polya_cf(COUNTER_A_ALT, COUNTER_LAM, t)).max())


def counterexample_curves(t=None, x=None):
    """Plot data: CFs on ``t`` and the matching densities on ``x``."""
    if t is None:
        t = np.linspace(-5.0, 5.0, 1001)
    if x is None:
        x = np.linspace(-20.0, 20.0, 401)
    cf = {
        "t": t,
        "cf_x1": polya_cf(COUNTER_A, COUNTER_LAM, t),
        "cf_x1_alt": polya_cf(COUNTER_A_ALT, COUNTER_LAM, t),
        "cf_x2": polya_cf(0.0, COUNTER_LAM, t),
    }
    pdf = {
        "x": x,
        "pdf_x1": polya_density(COUNTER_A, COUNTER_LAM, x),
        "pdf_x1_alt": polya_density(COUNTER_A_ALT, COUNTER_LAM, x),
        "pdf_x2": polya_density(0.0, COUNTER_LAM, x),
    }
    return cf, pdf


@dataclass(frozen=True)
class IdentifiabilityReport:
    identifiable_up_to_shift: bool
    rank: int
    J: int

    def to_dict(self):
        return {"identifiable_up_to_shift": self.identifiable_up_to_shift, "rank": self.rank, "J": self.J}


def identifiability_check(A):
    a = as_matrix(A)
    r = column_rank(product_matrix(a))
    return IdentifiabilityReport(r == a.shape[1], r, a.shape[1])
