"""Convex quadratic programs over the probability simplex.

Minimizes ``x' D x - 2 d' x`` subject to ``x >= 0`` and ``sum(x) = 1`` with a
primal active-set method. The working set holds the coordinates pinned at
zero; each iteration solves the equality-constrained problem on the free
face and either steps toward it (stopping at the first coordinate that hits
zero) or, at a face optimum, releases the constraint with the most negative
multiplier.
"""

import numpy as np


class QPError(ArithmeticError):
    """The quadratic form is not positive semidefinite (beyond a small ridge)."""


def project_simplex(v):
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1.0), 0.0)


def objective(D, d, x):
    return float(x @ D @ x - 2.0 * d @ x)


def kkt_residual(D, d, x):
    """Largest violation of the simplex KKT conditions at ``x``."""
    g = 2.0 * (D @ x - d)
    free = x > 0
    nu = g[free].mean() if free.any() else g.min()
    stat = np.abs(g[free] - nu).max(initial=0.0)
    dual = np.maximum(nu - g[~free], 0.0).max(initial=0.0)
    primal = max(abs(x.sum() - 1.0), -min(x.min(), 0.0))
    return max(stat, dual, primal)


def solve_simplex_qp(D, d, x0=None, tol=1e-12, ridge=1e-10, max_iter=None):
    D = np.asarray(D, dtype=float)
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    if D.shape != (n, n):
        raise ValueError("D must be n x n")
    if n == 1:
        return np.ones(1)
    D = 0.5 * (D + D.T)
    tr = np.trace(D)
    if tr > 0:
        D = D + (ridge * tr / n) * np.eye(n)
    scale = max(np.abs(D).max(), np.abs(d).max(), 1e-300)
    lam = np.linalg.eigvalsh(D / scale)
    if lam[0] < -1e-8:
        raise QPError(f"quadratic form is indefinite: smallest scaled eigenvalue {lam[0]:.3e}")
    Ds, ds = D / scale, d / scale

    x = np.full(n, 1.0 / n) if x0 is None else project_simplex(x0)
    active = x <= 0.0
    x[active] = 0.0
    if active.all():  # pragma: no cover - projection always leaves mass somewhere
        x[:] = 1.0 / n
        active[:] = False
    max_iter = max_iter or 20 * n + 100

    for _ in range(max_iter):
        F = np.flatnonzero(~active)
        m = F.size
        kkt = np.zeros((m + 1, m + 1))
        kkt[:m, :m] = 2.0 * Ds[np.ix_(F, F)]
        kkt[:m, m] = -1.0
        kkt[m, :m] = 1.0
        rhs = np.concatenate([2.0 * ds[F], [1.0]])
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        p = sol[:m] - x[F]

        if np.abs(p).max() <= 1e-14:
            g = 2.0 * (Ds @ x - ds)
            nu = g[F].mean()
            A = np.flatnonzero(active)
            if A.size == 0:
                break
            mu = g[A] - nu
            worst = np.argmin(mu)
            if mu[worst] >= -tol:
                break
            active[A[worst]] = False
            continue

        step = 1.0
        block = -1
        neg = p < 0
        if neg.any():
            ratios = -x[F][neg] / p[neg]
            i = np.argmin(ratios)
            if ratios[i] < 1.0:
                step = ratios[i]
                block = F[neg][i]
        x[F] += step * p
        if block >= 0:
            x[block] = 0.0
            active[block] = True
        x[active] = 0.0
    x = np.maximum(x, 0.0)
    return x / x.sum()
