"""Time the numba kernels against their numpy fallbacks and check they agree.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import math
import time

import numpy as np

from annealtherm import kernels
from annealtherm.exact import ThermalPoint
from annealtherm.model import build_frustrated_chain
from annealtherm.qmc import trotter_couplings


def best_of(fn, repeat):
    best = math.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def wolff_case(n=64, M=128, clusters=2000, seed=0):
    spec = build_frustrated_chain(n)
    pt = ThermalPoint(1.2, 0.8, 12.0)
    k_space, k_tau = trotter_couplings(pt.A, pt.B, pt, M)
    rng = np.random.default_rng(seed)
    lattice = (2 * rng.integers(0, 2, size=(M, n)) - 1).astype(np.int8)
    uniforms = rng.random(4 * clusters * n * M // 8 + 100_000)
    args = dict(
        bond_sign=-spec.couplings.astype(np.float64),
        fields_action=np.zeros(n),
        p_space=-math.expm1(-2 * k_space),
        p_tau=-math.expm1(-2 * k_tau),
    )

    def run(kernel):
        lat = lattice.copy()
        status = np.zeros(6, dtype=np.int64)
        in_cluster = np.zeros(n * M, dtype=np.bool_)
        stack = np.zeros(n * M, dtype=np.int64)
        off = 0
        while True:
            off += kernel(lat, args["bond_sign"], args["fields_action"], args["p_space"], args["p_tau"],
                          uniforms[off:], clusters, in_cluster, stack, status)
            if status[0] == 0 and status[4] >= clusters:
                return lat
            if off >= uniforms.size:
                raise RuntimeError("uniform buffer too short for the benchmark")

    return run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(1)
    lattice = (2 * rng.integers(0, 2, size=(512, 138)) - 1).astype(np.int8)
    spec = build_frustrated_chain(138)
    couplings = spec.couplings.astype(np.float64)
    fields = np.zeros(138)
    wolff = wolff_case()
    n_enum = 18

    cases = [
        ("wolff_clusters", lambda: wolff(kernels.wolff_clusters_numba), lambda: wolff(kernels.wolff_clusters_numpy)),
        ("slice_observables", lambda: kernels.slice_observables_numba(lattice, couplings, fields),
         lambda: kernels.slice_observables_numpy(lattice, couplings, fields)),
        ("enumerate_energies", lambda: kernels.enumerate_energies_numba(n_enum, -np.ones(n_enum), np.zeros(n_enum)),
         lambda: kernels.enumerate_energies_numpy(n_enum, -np.ones(n_enum), np.zeros(n_enum))),
    ]
    print(f"{'kernel':<20} {'numba [s]':>10} {'numpy [s]':>10} {'speedup':>8}  agree")
    for name, fast, slow in cases:
        fast()  # compile
        t_nb, r_nb = best_of(fast, args.repeat)
        t_np, r_np = best_of(slow, 1 if name == "wolff_clusters" else args.repeat)
        same = all(np.array_equal(a, b) if a.dtype == np.int8 else np.allclose(a, b, rtol=1e-12, atol=1e-12)
                   for a, b in zip(np.atleast_1d(r_nb) if not isinstance(r_nb, tuple) else r_nb,
                                   np.atleast_1d(r_np) if not isinstance(r_np, tuple) else r_np))
        print(f"{name:<20} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f}  {same}")


if __name__ == "__main__":
    main()
