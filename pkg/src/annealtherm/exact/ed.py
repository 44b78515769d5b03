"""Dense exact diagonalization of the transverse-field Ising ring.

H = -A sum_i X_i + B * (sum_e J_e Z_e Z_{e+1} + sum_i h_i Z_i), in GHz.

With zero longitudinal fields H commutes with the global spin flip, and the
thermal sums are done on the two parity blocks of half dimension.
"""
from __future__ import annotations

import math

import numpy as np

from ..model import ChainSpec, diagonal_energies
from .thermal import GibbsResult, ThermalError, ThermalPoint

ED_MAX_SITES = 14
STATE_MAX_SITES = 7


class SizeError(ValueError):
    pass


def _check_cap(spec: ChainSpec, cap: int):
    if spec.n > cap:
        raise SizeError(f"n={spec.n} exceeds the dense size cap of {cap} sites")


def squared_magnetization_diagonal(n: int) -> np.ndarray:
    """Per-site normalized M_z^2 for every basis state."""
    dim = 1 << n
    ups = np.zeros(dim, dtype=np.int64)
    idx = np.arange(dim, dtype=np.int64)
    for k in range(n):
        ups += (idx >> k) & 1
    m = (n - 2 * ups) / n
    return m * m


def build_hamiltonian(spec: ChainSpec, A: float, B: float, cap: int = ED_MAX_SITES) -> np.ndarray:
    """Dense real symmetric H; basis index has site 0 as the most significant bit."""
    _check_cap(spec, cap)
    n = spec.n
    dim = 1 << n
    H = np.diag(B * diagonal_energies(spec))
    rows = np.arange(dim)
    for i in range(n):
        H[rows, rows ^ (1 << (n - 1 - i))] -= A
    return H


def _parity_blocks(spec: ChainSpec, A: float, B: float):
    """H restricted to spin-flip even and odd sectors, plus representative indices."""
    n = spec.n
    dim = 1 << n
    full = dim - 1
    half = dim >> 1
    reps = np.arange(half)
    diag = B * diagonal_energies(spec)[reps]
    blocks = []
    for parity in (1.0, -1.0):
        Hb = np.diag(diag)
        for i in range(n):
            y = reps ^ (1 << (n - 1 - i))
            flipped = y >= half
            target = np.where(flipped, y ^ full, y)
            sign = np.where(flipped, parity, 1.0)
            np.add.at(Hb, (reps, target), -A * sign)
        blocks.append(Hb)
    return blocks, reps


def _eig_diagonals(spec: ChainSpec, A: float, B: float):
    """Eigenvalues and eigenbasis expectation values of H_IM and M_z^2."""
    e_diag = diagonal_energies(spec)
    m_diag = squared_magnetization_diagonal(spec.n)
    if spec.has_fields or spec.n < 2:
        w, v = np.linalg.eigh(build_hamiltonian(spec, A, B, cap=spec.n))
        p = v * v
        return w, e_diag @ p, m_diag @ p
    blocks, reps = _parity_blocks(spec, A, B)
    evals, e_vals, m_vals = [], [], []
    for Hb in blocks:
        w, v = np.linalg.eigh(Hb)
        p = v * v
        evals.append(w)
        e_vals.append(e_diag[reps] @ p)
        m_vals.append(m_diag[reps] @ p)
    return np.concatenate(evals), np.concatenate(e_vals), np.concatenate(m_vals)


def spectrum(spec: ChainSpec, A: float, B: float, cap: int = ED_MAX_SITES) -> np.ndarray:
    _check_cap(spec, cap)
    return np.sort(_eig_diagonals(spec, A, B)[0])


def boltzmann_weights(energies: np.ndarray, beta_h: float) -> np.ndarray:
    """Normalized e^{-beta E}, shifted by the ground energy before exponentiating."""
    w = np.exp(-beta_h * (energies - energies.min()))
    return w / w.sum()


def gibbs_expectations(spec: ChainSpec, pt: ThermalPoint, cap: int = ED_MAX_SITES) -> GibbsResult:
    _check_cap(spec, cap)
    beta = pt.beta_h
    if not math.isfinite(beta):
        raise ThermalError("non-finite beta")
    evals, e_k, m_k = _eig_diagonals(spec, pt.A, pt.B)
    order = np.argsort(evals)
    evals, e_k, m_k = evals[order], e_k[order], m_k[order]
    w = boltzmann_weights(evals, beta)
    e0 = evals[0]
    if beta > 0.0:
        free = e0 - math.log(np.sum(np.exp(-beta * (evals - e0)))) / beta
    else:
        free = -math.inf
    gap = float(evals[1] - e0) if evals.size > 1 else 0.0
    return GibbsResult(float(w @ e_k), float(w @ m_k), float(free), max(gap, 0.0))


def gibbs_state(spec: ChainSpec, pt: ThermalPoint, cap: int = STATE_MAX_SITES) -> np.ndarray:
    """Dense Gibbs density matrix e^{-beta H}/Z (real symmetric)."""
    _check_cap(spec, cap)
    return gibbs_state_of(build_hamiltonian(spec, pt.A, pt.B, cap=cap), pt.beta_h)


def gibbs_state_of(H: np.ndarray, beta_h: float) -> np.ndarray:
    w, v = np.linalg.eigh(H)
    p = boltzmann_weights(w, beta_h)
    rho = (v * p) @ v.conj().T
    return 0.5 * (rho + rho.conj().T)
