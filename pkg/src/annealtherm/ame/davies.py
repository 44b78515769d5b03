"""Davies (weak-coupling, secular) generators for qubits with sigma^z baths.

Each qubit couples to its own Ohmic bath through sigma^z.  In the
eigenbasis {|a>} of H the jump operators are

    L_{i,w} = sum_{E_b - E_a = w} <a|Z_i|b> |a><b|

and the dissipator is sum_{i,w} gamma(w) (L rho L^+ - 1/2 {L^+ L, rho}).
Bohr frequencies closer than ``bohr_tol`` (GHz) are treated as equal.

Units: energies and rates are in GHz (1/ns); the coherent part carries the
explicit 2 pi that converts cycles to radians.  Superoperators act on the
row-major flattening ``rho.reshape(-1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..exact.ed import build_hamiltonian
from ..exact.thermal import beta_from_mk
from ..model import ChainSpec

TWO_PI = 2.0 * math.pi
BOHR_TOL = 1e-9
AME_MAX_SITES = 5


class AmeError(ValueError):
    pass


@dataclass(frozen=True)
class BathParams:
    """Ohmic bath: temperature (mK), coupling eta*g^2, cutoff (GHz)."""

    temperature: float = 12.0
    coupling: float = 1e-4
    cutoff: float = 8.0 * math.pi

    def __post_init__(self):
        if not (self.temperature > 0 and math.isfinite(self.temperature)):
            raise AmeError("bath temperature must be positive and finite")
        if not self.coupling >= 0:
            raise AmeError("bath coupling must be nonnegative")
        if not self.cutoff > 0:
            raise AmeError("bath cutoff must be positive")

    @property
    def beta_h(self) -> float:
        return beta_from_mk(self.temperature)


def ohmic_rate(omega, bath: BathParams):
    """gamma(w) = 2 pi eta g^2 w e^{-|w|/w_c} / (1 - e^{-beta w}), with gamma(0) = 2 pi eta g^2 / beta."""
    w = np.asarray(omega, dtype=float)
    beta = bath.beta_h
    aw = np.abs(w)
    x = beta * aw
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        # w / (1 - e^{-beta w}) for w > 0 and |w| / (e^{beta |w|} - 1) for w < 0
        pos = np.where(x > 0, aw / -np.expm1(-x), 1.0 / beta)
        neg = np.where(x > 0, aw / np.expm1(x), 1.0 / beta)
    core = np.where(w >= 0, pos, neg)
    out = TWO_PI * bath.coupling * core * np.exp(-aw / bath.cutoff)
    return float(out) if out.ndim == 0 else out


def sigma_z_diagonals(n: int) -> np.ndarray:
    """(n, 2^n) array: diagonal of Z_i in the computational basis (site 0 = MSB)."""
    idx = np.arange(1 << n)
    return np.array([1.0 - 2.0 * ((idx >> (n - 1 - i)) & 1) for i in range(n)])


def _label_groups(values: np.ndarray, tol: float) -> np.ndarray:
    """Integer labels merging values closer than ``tol`` (single linkage on the sorted list)."""
    order = np.argsort(values, kind="stable")
    sv = values[order]
    breaks = np.concatenate([[0], (np.diff(sv) > tol).astype(np.int64)])
    labels = np.empty(values.size, dtype=np.int64)
    labels[order] = np.cumsum(breaks)
    return labels


def _same_label_pairs(labels: np.ndarray):
    """All (p, q) index pairs with labels[p] == labels[q]."""
    order = np.argsort(labels, kind="stable")
    _, starts, counts = np.unique(labels[order], return_index=True, return_counts=True)
    sq = counts * counts
    gid = np.repeat(np.arange(counts.size), sq)
    local = np.arange(sq.sum()) - np.repeat(np.cumsum(sq) - sq, sq)
    p = order[starts[gid] + local // counts[gid]]
    q = order[starts[gid] + local % counts[gid]]
    return p, q


@dataclass
class DaviesGenerator:
    """Davies generator of a fixed Hamiltonian, stored in its eigenbasis."""

    energies: np.ndarray
    vectors: np.ndarray
    dissipator_eig: np.ndarray
    bath: BathParams

    @property
    def dim(self) -> int:
        return self.energies.size

    def coherent_eig(self) -> np.ndarray:
        """-i 2 pi [E, .] as a diagonal superoperator (vector of its entries)."""
        e = self.energies
        return -1j * TWO_PI * (e[:, None] - e[None, :]).reshape(-1)

    def matrix_eig(self) -> np.ndarray:
        return self.dissipator_eig + np.diag(self.coherent_eig())

    def to_eig(self, rho: np.ndarray) -> np.ndarray:
        v = self.vectors
        return v.conj().T @ rho @ v

    def from_eig(self, rho_eig: np.ndarray) -> np.ndarray:
        v = self.vectors
        return v @ rho_eig @ v.conj().T

    def dissipate(self, rho: np.ndarray) -> np.ndarray:
        """Dissipator alone applied to a computational-basis density matrix."""
        d = self.dim
        r = self.to_eig(rho).reshape(-1)
        return self.from_eig((self.dissipator_eig @ r).reshape(d, d))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Full generator (coherent + dissipative) applied to rho."""
        d = self.dim
        r = self.to_eig(rho).reshape(-1)
        out = self.dissipator_eig @ r + self.coherent_eig() * r
        return self.from_eig(out.reshape(d, d))

    def matrix(self) -> np.ndarray:
        """Full generator as a dense computational-basis superoperator."""
        v = self.vectors
        u = np.kron(v, v.conj())
        return u @ self.matrix_eig() @ u.conj().T


def build_davies(H: np.ndarray, z_diags: np.ndarray, bath: BathParams, bohr_tol: float = BOHR_TOL) -> DaviesGenerator:
    """Davies generator for Hamiltonian ``H`` and sigma^z couplings given by their diagonals."""
    energies, vectors = np.linalg.eigh(H)
    d = energies.size
    if bath.coupling == 0.0:
        return DaviesGenerator(energies, vectors, np.zeros((d * d, d * d), dtype=complex), bath)
    # X_i[a, b] = <a| Z_i |b>
    xs = np.einsum("ka,ik,kb->iab", vectors.conj(), z_diags, vectors)
    # omega[a, b] = E_b - E_a: energy released when jumping b -> a
    omega = energies[None, :] - energies[:, None]
    labels = _label_groups(omega.reshape(-1), bohr_tol)
    gamma = ohmic_rate(omega, bath).reshape(-1)
    # representative rate per label so grouped frequencies share one value
    rep = np.zeros(labels.max() + 1)
    rep[labels] = gamma
    gamma = rep[labels]

    p, q = _same_label_pairs(labels)
    a, b = np.divmod(p, d)
    c, e = np.divmod(q, d)
    xf = xs.reshape(xs.shape[0], -1)
    vals = gamma[p] * np.einsum("ip,ip->p", xf[:, p], xf[:, q].conj())
    D = np.zeros((d * d, d * d), dtype=complex)
    # L rho L^+ : (a, c) <- (b, e)
    D[a * d + c, b * d + e] = vals

    # K = sum_w gamma(w) L_w^+ L_w, nonzero only between levels in the same group
    lab = labels.reshape(d, d)
    g2 = gamma.reshape(d, d)
    K = np.zeros((d, d), dtype=complex)
    for i in range(xs.shape[0]):
        x = xs[i]
        # K[b, e] = sum_a gamma[a, b] conj(x[a, b]) x[a, e] [lab[a, b] == lab[a, e]]
        same = lab[:, :, None] == lab[:, None, :]
        K += np.einsum("ab,ab,ae,abe->be", g2, x.conj(), x, same)
    eye = np.eye(d)
    D -= 0.5 * (np.kron(K, eye) + np.kron(eye, K.T))
    return DaviesGenerator(energies, vectors, D, bath)


def check_ame_size(spec: ChainSpec, cap: int = AME_MAX_SITES):
    if spec.n > cap:
        raise AmeError(f"n={spec.n} exceeds the master-equation cap of {cap} sites")


def davies_generator(spec: ChainSpec, A: float, B: float, bath: BathParams,
                     bohr_tol: float = BOHR_TOL, cap: int = AME_MAX_SITES) -> DaviesGenerator:
    check_ame_size(spec, cap)
    H = build_hamiltonian(spec, A, B, cap=cap)
    return build_davies(H, sigma_z_diagonals(spec.n), bath, bohr_tol)
