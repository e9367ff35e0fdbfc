"""Hot numeric kernels.

Each kernel has a numba implementation and a vectorized numpy twin with the
same signature. The public names at the bottom of the module point at the
numba versions unless numba is unavailable or disabled through
``CFTOMO_DISABLE_NUMBA``. Both variants are always importable so tests and
``benchmarks/bench_kernels.py`` can compare them.

Mixture components are encoded as three parallel arrays: ``kinds`` (0 atom,
1 uniform, 2 shifted exponential tail), ``lo`` and ``hi``. An atom sits at
``lo``; a uniform covers ``[lo, hi]``; a tail starts at ``lo`` with scale
``hi``.
"""

import numpy as np

from ._accel import HAVE_NUMBA, njit

ATOM, UNIFORM, TAIL = 0, 1, 2

# below this |u (b - a)| the uniform CF switches to its Taylor series
SINC_SWITCH = 1e-4

_CHUNK = 1 << 22  # complex entries per temporary block in numpy paths


# ---------------------------------------------------------------- numpy twins


def _sinc_np(h):
    h = np.asarray(h, dtype=float)
    out = np.empty_like(h)
    small = np.abs(2.0 * h) < SINC_SWITCH
    hs = h[small]
    h2 = hs * hs
    out[small] = 1.0 - h2 / 6.0 + h2 * h2 / 120.0 - h2 * h2 * h2 / 5040.0
    hb = h[~small]
    out[~small] = np.sin(hb) / hb
    return out


def basis_table_numpy(u, kinds, lo, hi):
    u = np.asarray(u, dtype=float)
    shape = u.shape
    u = u.reshape(-1, 1)
    kinds = np.asarray(kinds)
    lo = np.asarray(lo, dtype=float)[None, :]
    hi = np.asarray(hi, dtype=float)[None, :]
    out = np.empty((u.shape[0], kinds.shape[0]), dtype=complex)

    atom = kinds == ATOM
    if atom.any():
        out[:, atom] = np.exp(1j * u * lo[:, atom])
    uni = kinds == UNIFORM
    if uni.any():
        a, b = lo[:, uni], hi[:, uni]
        out[:, uni] = np.exp(0.5j * u * (a + b)) * _sinc_np(0.5 * u * (b - a))
    tail = kinds == TAIL
    if tail.any():
        c, s = lo[:, tail], hi[:, tail]
        out[:, tail] = np.exp(1j * u * c) / (1.0 - 1j * u * s)
    return out.reshape(shape + (kinds.shape[0],))


def ecf_numpy(Y, T):
    Y = np.ascontiguousarray(Y, dtype=float)
    T = np.ascontiguousarray(T, dtype=float)
    N = Y.shape[0]
    K = T.shape[0]
    out = np.empty(K, dtype=complex)
    step = max(1, _CHUNK // max(N, 1))
    for s in range(0, K, step):
        phase = Y @ T[s:s + step].T
        out[s:s + step] = np.exp(1j * phase).mean(axis=0)
    return out


def weight_matrix_numpy(U, kinds, lo, hi, weights, offsets, phi):
    K, J = U.shape
    W = np.empty((K, K), dtype=complex)
    step = max(1, _CHUNK // max(K * int(np.diff(offsets).max()), 1))
    for s in range(0, K, step):
        e = min(K, s + step)
        prod = np.ones((e - s, K), dtype=complex)
        for j in range(J):
            a, b = offsets[j], offsets[j + 1]
            diff = U[s:e, j][:, None] - U[:, j][None, :]
            prod *= basis_table_numpy(diff, kinds[a:b], lo[a:b], hi[a:b]) @ weights[a:b]
        W[s:e] = prod - phi[s:e, None] * np.conj(phi)[None, :]
    return W


def em_step_numpy(configs, group, counts, probs):
    C, J = configs.shape
    n = probs.shape[1]
    p = np.ones(C)
    for j in range(J):
        p *= probs[j, configs[:, j]]
    marg = np.bincount(group, weights=p, minlength=counts.shape[0])
    loglik = float(np.sum(counts * np.log(marg)))
    post = p * (counts / marg)[group]
    total = counts.sum()
    new = np.empty_like(probs)
    for j in range(J):
        new[j] = np.bincount(configs[:, j], weights=post, minlength=n) / total
    return new, loglik


# ---------------------------------------------------------------- numba kernels


@njit
def _basis_value(kind, a, b, u):
    if kind == ATOM:
        return np.exp(1j * u * a)
    if kind == UNIFORM:
        h = 0.5 * u * (b - a)
        if abs(2.0 * h) < SINC_SWITCH:
            h2 = h * h
            s = 1.0 - h2 / 6.0 + h2 * h2 / 120.0 - h2 * h2 * h2 / 5040.0
        else:
            s = np.sin(h) / h
        return np.exp(0.5j * u * (a + b)) * s
    return np.exp(1j * u * a) / (1.0 - 1j * u * b)


@njit
def _basis_table_flat(u, kinds, lo, hi):
    K = u.shape[0]
    n = kinds.shape[0]
    out = np.empty((K, n), dtype=np.complex128)
    for k in range(K):
        for m in range(n):
            out[k, m] = _basis_value(kinds[m], lo[m], hi[m], u[k])
    return out


def basis_table_numba(u, kinds, lo, hi):
    u = np.asarray(u, dtype=float)
    flat = _basis_table_flat(
        np.ascontiguousarray(u.ravel()),
        np.ascontiguousarray(kinds, dtype=np.int64),
        np.ascontiguousarray(lo, dtype=float),
        np.ascontiguousarray(hi, dtype=float),
    )
    return flat.reshape(u.shape + (len(kinds),))


@njit
def _ecf_kernel(Y, T):
    N, I = Y.shape
    K = T.shape[0]
    out = np.empty(K, dtype=np.complex128)
    for k in range(K):
        re = 0.0
        im = 0.0
        for n in range(N):
            ph = 0.0
            for i in range(I):
                ph += T[k, i] * Y[n, i]
            re += np.cos(ph)
            im += np.sin(ph)
        out[k] = complex(re / N, im / N)
    return out


def ecf_numba(Y, T):
    return _ecf_kernel(np.ascontiguousarray(Y, dtype=float), np.ascontiguousarray(T, dtype=float))


@njit
def _weight_matrix_kernel(U, kinds, lo, hi, weights, offsets, phi):
    # real arithmetic throughout; complex exp is noticeably slower here
    K, J = U.shape
    W = np.empty((K, K), dtype=np.complex128)
    for r in range(K):
        for c in range(r, K):
            pr = 1.0
            pi = 0.0
            for j in range(J):
                u = U[r, j] - U[c, j]
                ar = 0.0
                ai = 0.0
                for m in range(offsets[j], offsets[j + 1]):
                    w = weights[m]
                    if w == 0.0:
                        continue
                    k = kinds[m]
                    if k == ATOM:
                        ph = u * lo[m]
                        ar += w * np.cos(ph)
                        ai += w * np.sin(ph)
                    elif k == UNIFORM:
                        h = 0.5 * u * (hi[m] - lo[m])
                        if abs(2.0 * h) < SINC_SWITCH:
                            h2 = h * h
                            s = 1.0 - h2 / 6.0 + h2 * h2 / 120.0 - h2 * h2 * h2 / 5040.0
                        else:
                            s = np.sin(h) / h
                        ph = 0.5 * u * (lo[m] + hi[m])
                        ar += w * s * np.cos(ph)
                        ai += w * s * np.sin(ph)
                    else:
                        ph = u * lo[m]
                        cr = np.cos(ph)
                        ci = np.sin(ph)
                        x = u * hi[m]
                        den = 1.0 + x * x
                        ar += w * (cr - ci * x) / den
                        ai += w * (ci + cr * x) / den
                t = pr * ar - pi * ai
                pi = pr * ai + pi * ar
                pr = t
            vr = pr - (phi[r].real * phi[c].real + phi[r].imag * phi[c].imag)
            vi = pi - (phi[r].imag * phi[c].real - phi[r].real * phi[c].imag)
            W[r, c] = complex(vr, vi)
            W[c, r] = complex(vr, -vi)
    return W


def weight_matrix_numba(U, kinds, lo, hi, weights, offsets, phi):
    return _weight_matrix_kernel(
        np.ascontiguousarray(U, dtype=float),
        np.ascontiguousarray(kinds, dtype=np.int64),
        np.ascontiguousarray(lo, dtype=float),
        np.ascontiguousarray(hi, dtype=float),
        np.ascontiguousarray(weights, dtype=float),
        np.ascontiguousarray(offsets, dtype=np.int64),
        np.ascontiguousarray(phi, dtype=np.complex128),
    )


@njit
def _em_kernel(configs, group, counts, probs):
    C, J = configs.shape
    n = probs.shape[1]
    G = counts.shape[0]
    p = np.ones(C)
    marg = np.zeros(G)
    for c in range(C):
        v = 1.0
        for j in range(J):
            v *= probs[j, configs[c, j]]
        p[c] = v
        marg[group[c]] += v
    loglik = 0.0
    total = 0.0
    for g in range(G):
        loglik += counts[g] * np.log(marg[g])
        total += counts[g]
    new = np.zeros((J, n))
    for c in range(C):
        g = group[c]
        w = p[c] * counts[g] / marg[g]
        for j in range(J):
            new[j, configs[c, j]] += w
    for j in range(J):
        for m in range(n):
            new[j, m] /= total
    return new, loglik


def em_step_numba(configs, group, counts, probs):
    return _em_kernel(
        np.ascontiguousarray(configs, dtype=np.int64),
        np.ascontiguousarray(group, dtype=np.int64),
        np.ascontiguousarray(counts, dtype=float),
        np.ascontiguousarray(probs, dtype=float),
    )


if HAVE_NUMBA:
    basis_table = basis_table_numba
    ecf = ecf_numba
    weight_matrix = weight_matrix_numba
    em_step = em_step_numba
else:  # pragma: no cover - exercised with CFTOMO_DISABLE_NUMBA=1
    basis_table = basis_table_numpy
    ecf = ecf_numpy
    weight_matrix = weight_matrix_numpy
    em_step = em_step_numpy

BACKEND = "numba" if HAVE_NUMBA else "numpy"
