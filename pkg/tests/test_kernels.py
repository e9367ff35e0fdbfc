import os
import subprocess
import sys

import numpy as np

from cftomo import kernels

SCRIPT = """
import numpy as np
from cftomo import kernels
from cftomo.sim import builtin_scenario, run_replication
sc = builtin_scenario("discrete4", config={"k": 200})
rec = run_replication(sc, 0)
print(kernels.BACKEND)
print(repr([float(v) for v in rec.metrics["CF"]]))
"""


def _run(disable):
    env = dict(os.environ)
    env.pop("CFTOMO_DISABLE_NUMBA", None)
    if disable:
        env["CFTOMO_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", SCRIPT], capture_output=True, text=True, env=env, check=True)
    backend, metrics = out.stdout.strip().splitlines()[-2:]
    return backend, np.array(eval(metrics))


def test_env_flag_selects_backend_and_results_agree():
    b0, m0 = _run(False)
    b1, m1 = _run(True)
    assert b1 == "numpy"
    assert b0 in ("numba", "numpy")
    np.testing.assert_allclose(m0, m1, atol=1e-8)


def test_public_names_follow_backend():
    if kernels.BACKEND == "numba":
        assert kernels.ecf is kernels.ecf_numba
    else:
        assert kernels.ecf is kernels.ecf_numpy


def test_taylor_switch_is_seamless():
    kinds = np.array([kernels.UNIFORM])
    lo, hi = np.array([0.0]), np.array([1.0])
    s = kernels.SINC_SWITCH
    u = np.array([s * (1 - 1e-9), s * (1 + 1e-9)])
    for f in (kernels.basis_table_numpy, kernels.basis_table_numba):
        v = f(u, kinds, lo, hi)[:, 0]
        assert abs(v[0] - v[1]) < 1e-12
        exact = np.expm1(1j * u) / (1j * u)
        np.testing.assert_allclose(v, exact, atol=1e-15)
