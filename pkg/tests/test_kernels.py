"""Compiled and fallback kernels must agree bit for bit."""
import math
import os
import subprocess
import sys

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from annealtherm import kernels
from annealtherm.qmc import trotter_couplings
from annealtherm.exact import ThermalPoint


def _run_wolff(kernel, lattice, bond_sign, fields_action, p_space, p_tau, uniforms, clusters):
    lat = lattice.copy()
    N = lat.size
    status = np.zeros(6, dtype=np.int64)
    in_cluster = np.zeros(N, dtype=np.bool_)
    stack = np.zeros(N, dtype=np.int64)
    used = 0
    # feed the buffer in small pieces to exercise the resume path
    while True:
        piece = uniforms[used:used + 37]
        used += kernel(lat, bond_sign, fields_action, p_space, p_tau, piece, clusters, in_cluster, stack, status)
        if status[0] == 0 and status[4] >= clusters:
            return lat, used, status.copy()
        assert used < uniforms.size


@given(st.integers(3, 8), st.integers(2, 12), st.integers(0, 2**31 - 1), st.booleans())
def test_wolff_bit_identical(n, M, seed, with_fields):
    rng = np.random.default_rng(seed)
    lattice = (2 * rng.integers(0, 2, size=(M, n)) - 1).astype(np.int8)
    bond_sign = rng.choice([-1.0, 1.0], n)
    fields_action = rng.normal(scale=0.1, size=n) if with_fields else np.zeros(n)
    k_space, k_tau = trotter_couplings(1.0, 0.7, ThermalPoint(1.0, 0.7, 12.0), M)
    p_space, p_tau = -math.expm1(-2 * k_space), -math.expm1(-2 * k_tau)
    uniforms = rng.random(200_000)
    a = _run_wolff(kernels.wolff_clusters_numba, lattice, bond_sign, fields_action, p_space, p_tau, uniforms, 5)
    b = _run_wolff(kernels.wolff_clusters_numpy, lattice, bond_sign, fields_action, p_space, p_tau, uniforms, 5)
    assert np.array_equal(a[0], b[0])
    assert a[1] == b[1]
    assert np.array_equal(a[2], b[2])


@given(st.integers(3, 12), st.integers(0, 2**31 - 1))
def test_enumerate_energies_identical(n, seed):
    rng = np.random.default_rng(seed)
    J = rng.choice([-1.0, 1.0], n)
    h = rng.normal(size=n)
    assert np.allclose(kernels.enumerate_energies_numba(n, J, h), kernels.enumerate_energies_numpy(n, J, h),
                       rtol=0, atol=1e-12)


@given(st.integers(3, 20), st.integers(1, 30), st.integers(0, 2**31 - 1))
def test_slice_observables_identical(n, M, seed):
    rng = np.random.default_rng(seed)
    lat = (2 * rng.integers(0, 2, size=(M, n)) - 1).astype(np.int8)
    J = rng.choice([-1.0, 1.0], n)
    h = np.zeros(n)
    e1, m1 = kernels.slice_observables_numba(lat, J, h)
    e2, m2 = kernels.slice_observables_numpy(lat, J, h)
    assert np.array_equal(e1, e2) and np.array_equal(m1, m2)


_QMC_SNIPPET = """
from annealtherm._accel import backend
from annealtherm.exact import ThermalPoint
from annealtherm.model import build_frustrated_chain
from annealtherm.qmc import QmcConfig, run_qmc
r = run_qmc(build_frustrated_chain(6), ThermalPoint(0.9, 1.1, 12.0), QmcConfig(16, 50, 200, 3, 16))
print(backend(), repr(r.e_ising.mean), repr(r.m2.mean))
"""


def test_env_flag_switches_backend_without_changing_results():
    outs = {}
    for flag in ("0", "1"):
        env = dict(os.environ, ANNEALTHERM_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", _QMC_SNIPPET], env=env, capture_output=True, text=True,
                             check=True)
        outs[flag] = res.stdout.split()
    assert outs["0"][0] == "numba" and outs["1"][0] == "numpy"
    assert outs["0"][1:] == outs["1"][1:]
