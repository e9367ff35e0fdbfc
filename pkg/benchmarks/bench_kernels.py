"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Sizes follow the simulation studies: 2000 probes, 3000 frequencies, four
receivers, seven links of 13 components, and the 1000-point WCF subset.
"""

import argparse
import time

import numpy as np

from cftomo import kernels
from cftomo.cf_engine import _flatten
from cftomo.delay_models import LinkMixture, MixtureSpec


def best_of(fn, args, repeat):
    fn(*args)  # warm-up, includes JIT compilation for the numba path
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    ends = tuple(np.linspace(0.0, 6.0, 13))
    models = [LinkMixture(MixtureSpec.body(j, ends, 1.5), rng.dirichlet(np.ones(13))) for j in range(7)]
    kinds, lo, hi, w, off = _flatten(models)
    Y = rng.exponential(5.0, size=(2000, 4))
    T = rng.normal(size=(3000, 4))
    U = rng.normal(size=(1000, 7))
    phi = np.exp(1j * U.sum(axis=1)) * 0.3
    J, n = 7, 6
    configs = np.indices((n,) * J).reshape(J, -1).T.astype(np.int64)
    group = rng.integers(0, 2000, len(configs)).astype(np.int64)
    counts = rng.integers(1, 5, 2000).astype(float)
    probs = rng.dirichlet(np.ones(n), size=J)
    k13, lo13, hi13 = models[0].spec.components
    u = rng.normal(scale=3.0, size=3000)
    return {
        "basis_table (3000 x 13)": ((kernels.basis_table_numpy, kernels.basis_table_numba), (u, k13, lo13, hi13)),
        "ecf (2000 probes x 3000 t)": ((kernels.ecf_numpy, kernels.ecf_numba), (Y, T)),
        "weight_matrix (K = 1000)": ((kernels.weight_matrix_numpy, kernels.weight_matrix_numba), (U, kinds, lo, hi, w, off, phi)),
        "em_step (6^7 configs)": ((kernels.em_step_numpy, kernels.em_step_numba), (configs, group, counts, probs)),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    if not kernels.HAVE_NUMBA:
        print("numba disabled (CFTOMO_DISABLE_NUMBA); both columns time the numpy path")
    print(f"{'kernel':<30}{'numpy s':>10}{'numba s':>10}{'speedup':>9}")
    for name, ((f_np, f_nb), a) in cases(np.random.default_rng(0)).items():
        t_np = best_of(f_np, a, args.repeat)
        t_nb = best_of(f_nb, a, args.repeat)
        print(f"{name:<30}{t_np:>10.4f}{t_nb:>10.4f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
