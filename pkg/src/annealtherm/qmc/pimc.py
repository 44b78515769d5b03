"""Discrete imaginary-time path-integral Monte Carlo for the TFIM ring.

The Suzuki-Trotter decomposition with M slices maps the quantum chain onto
an anisotropic (n x M) classical Ising model with

    K_space = beta_h B / M              per spatial bond (times -J_e),
    K_tau   = -1/2 ln tanh(beta_h A / M) per imaginary-time bond,

which is sampled with Wolff clusters.  Bias is O(1/M^2).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..exact.thermal import ThermalPoint
from ..model import ChainSpec
from .analysis import QmcEstimate, drift_detected, estimate, extrapolate_trotter

#: default bound on beta_h * max(A, B) / M
TROTTER_STEP = 0.05


class QmcError(ValueError):
    pass


class DegenerateMappingError(QmcError):
    """A = 0: worldlines freeze and the classical limit should be used directly."""


class EquilibrationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class QmcConfig:
    slices: int | None = None
    therm_sweeps: int = 500
    measure_sweeps: int = 5000
    seed: int = 0
    bins: int = 32
    trotter_step: float = TROTTER_STEP

    def __post_init__(self):
        if self.slices is not None and self.slices < 2:
            raise QmcError("need at least 2 Trotter slices")
        if self.therm_sweeps < 0 or self.measure_sweeps < 1:
            raise QmcError("sweep counts must be nonnegative (measure >= 1)")
        if self.bins < 16:
            raise QmcError("bins must be >= 16")
        if self.measure_sweeps < 2 * self.bins:
            raise QmcError("measure_sweeps must be at least twice bins")
        if not self.trotter_step > 0:
            raise QmcError("trotter_step must be positive")

    def slices_for(self, pt: ThermalPoint) -> int:
        if self.slices is not None:
            return self.slices
        return default_slices(pt, self.trotter_step)


def default_slices(pt: ThermalPoint, step: float = TROTTER_STEP) -> int:
    """Smallest even M with beta_h * max(A, B) / M <= step."""
    m = math.ceil(pt.beta_h * max(pt.A, pt.B) / step - 1e-9)
    m = max(m, 2)
    return m + (m % 2)


def trotter_couplings(A: float, B: float, pt: ThermalPoint, M: int) -> tuple[float, float]:
    if not A > 0.0:
        raise DegenerateMappingError("transverse field must be positive for the Trotter mapping")
    if M < 2:
        raise QmcError("need at least 2 Trotter slices")
    beta = pt.beta_h
    if not beta > 0.0:
        raise QmcError("Trotter mapping needs beta_h > 0")
    k_space = beta * B / M
    x = beta * A / M
    # -1/2 ln tanh x, written to stay accurate for large x
    q = math.exp(-2.0 * x)
    k_tau = -0.5 * (math.log1p(-q) - math.log1p(q))
    return k_space, k_tau


@dataclass(frozen=True)
class QmcResult:
    e_ising: QmcEstimate
    m2: QmcEstimate
    mz: float
    slices: int
    equilibrated: bool
    e_samples: np.ndarray
    m2_samples: np.ndarray

    def __iter__(self):
        yield self.e_ising
        yield self.m2


class WorldlineSampler:
    """Holds a worldline lattice and advances it with Wolff sweeps."""

    def __init__(self, spec: ChainSpec, pt: ThermalPoint, M: int, seed):
        if spec.n < 3:
            raise QmcError("QMC needs a ring with n >= 3")
        self.spec = spec
        self.M = M
        k_space, k_tau = trotter_couplings(pt.A, pt.B, pt, M)
        self.k_space, self.k_tau = k_space, k_tau
        self.p_space = -math.expm1(-2.0 * k_space)
        self.p_tau = -math.expm1(-2.0 * k_tau)
        self.bond_sign = -np.asarray(spec.couplings, dtype=np.float64)
        self.fields_action = -k_space * np.asarray(spec.fields, dtype=np.float64)
        self.couplings = np.ascontiguousarray(spec.couplings, dtype=np.float64)
        self.fields = np.ascontiguousarray(spec.fields, dtype=np.float64)
        self.rng = np.random.default_rng(seed)
        self.lattice = np.ascontiguousarray(
            (2 * self.rng.integers(0, 2, size=(M, spec.n)) - 1).astype(np.int8)
        )
        N = M * spec.n
        self.n_sites = N
        self._in_cluster = np.zeros(N, dtype=np.bool_)
        self._stack = np.zeros(N, dtype=np.int64)
        self._status = np.zeros(6, dtype=np.int64)
        self.clusters_per_sweep = 1
        self.clusters_built = 0
        self.spins_flipped = 0
        self._chunk = max(4096, 2 * N)
        self._buf = self.rng.random(self._chunk)
        self._off = 0

    def run_clusters(self, count: int) -> int:
        """Grow and flip exactly ``count`` clusters; returns spins flipped."""
        status = self._status
        status[4] = 0
        status[5] = 0
        while True:
            if self._off >= self._buf.size:
                self._buf = self.rng.random(self._chunk)
                self._off = 0
            self._off += kernels.wolff_clusters(
                self.lattice, self.bond_sign, self.fields_action, self.p_space, self.p_tau,
                self._buf[self._off:], count, self._in_cluster, self._stack, status,
            )
            if status[0] == 0 and status[4] >= count:
                break
        self.clusters_built += count
        self.spins_flipped += int(status[5])
        return int(status[5])

    def calibrate(self):
        """Fix clusters per sweep so a sweep flips about n*M spins on average."""
        if self.clusters_built:
            mean_size = self.spins_flipped / self.clusters_built
            self.clusters_per_sweep = max(1, math.ceil(self.n_sites / mean_size))

    def sweep(self) -> int:
        return self.run_clusters(self.clusters_per_sweep)

    def thermalize(self, sweeps: int):
        """Equilibrate, re-estimating the sweep length as clusters settle."""
        done = 0
        while done < sweeps:
            # sweep length starts at one cluster and is refit after each block
            block = max(1, min(sweeps - done, 16))
            for _ in range(block):
                self.run_clusters(self.clusters_per_sweep)
            self.calibrate()
            done += block

    def measure(self) -> tuple[float, float, float]:
        """(e_ising, m2, symmetrized m_z) averaged over slices."""
        energy, mag = kernels.slice_observables(self.lattice, self.couplings, self.fields)
        m = mag / self.spec.n
        mz = 0.5 * (m.mean() + (-m).mean())
        return float(energy.mean()), float((m * m).mean()), float(mz)


def run_qmc(spec: ChainSpec, pt: ThermalPoint, cfg: QmcConfig = QmcConfig()) -> QmcResult:
    """Thermal <H_IM> and <M_z^2> with autocorrelation-corrected error bars."""
    M = cfg.slices_for(pt)
    sampler = WorldlineSampler(spec, pt, M, cfg.seed)
    sampler.thermalize(cfg.therm_sweeps)
    e = np.empty(cfg.measure_sweeps)
    m2 = np.empty(cfg.measure_sweeps)
    mz_sum = 0.0
    for k in range(cfg.measure_sweeps):
        sampler.sweep()
        e[k], m2[k], mz = sampler.measure()
        mz_sum += mz
    equilibrated = not (drift_detected(e, cfg.bins) or drift_detected(m2, cfg.bins))
    if not equilibrated:
        warnings.warn(
            f"QMC bin means drift at n={spec.n}, A={pt.A:g}, B={pt.B:g}, T={pt.temperature:g} mK",
            EquilibrationWarning,
            stacklevel=2,
        )
    return QmcResult(
        e_ising=estimate(e),
        m2=estimate(m2),
        mz=mz_sum / cfg.measure_sweeps,
        slices=M,
        equilibrated=equilibrated,
        e_samples=e,
        m2_samples=m2,
    )


def trotter_extrapolate(spec: ChainSpec, pt: ThermalPoint, cfg: QmcConfig, slice_counts,
                        observable: str = "e_ising") -> QmcEstimate:
    counts = [int(m) for m in slice_counts]
    if len(set(counts)) < 2:
        raise QmcError("need at least two distinct slice counts")
    if observable not in ("e_ising", "m2"):
        raise QmcError(f"unknown observable {observable!r}")
    ests = []
    for k, m in enumerate(counts):
        run_cfg = QmcConfig(m, cfg.therm_sweeps, cfg.measure_sweeps, cfg.seed + k, cfg.bins, cfg.trotter_step)
        ests.append(getattr(run_qmc(spec, pt, run_cfg), observable))
    return extrapolate_trotter(counts, ests)
