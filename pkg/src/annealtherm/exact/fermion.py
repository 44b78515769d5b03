"""Jordan-Wigner solution of the uniform ferromagnetic TFIM ring at finite n.

For H = -A sum X_i - B sum Z_i Z_{i+1} with periodic boundary conditions the
spin-flip parity P = prod X_i selects the fermion boundary condition:
P = +1 pairs with antiperiodic momenta k = pi (2m + 1)/n, P = -1 with
periodic momenta k = 2 pi m / n.  In each sector

    H = sum_k eps_k (n_k - 1/2),   eps_k = 2 sqrt(A^2 + B^2 - 2 A B cos k),

except that the unpaired modes k = 0 and k = pi carry the signed energies
2 (A - B) and 2 (A + B).  The Bogoliubov vacuum has even fermion parity, so

    Z = 1/2 [C_ap + S_ap + C_p - S_p],
    C = prod_k 2 cosh(beta eps_k / 2),   S = prod_k 2 sinh(beta eps_k / 2).

<H_IM> follows from dF/dB evaluated analytically in log space.
"""
from __future__ import annotations

import math

import numpy as np

from ..model import ChainSpec
from .thermal import ThermalPoint


class UnsupportedModelError(ValueError):
    pass


def _mode_energies(n: int, A: float, B: float, periodic: bool):
    """Signed single-particle energies and their B-derivatives for one sector."""
    m = np.arange(n)
    k = (2.0 * np.pi * m / n) if periodic else (np.pi * (2 * m + 1) / n)
    cos_k = np.cos(k)
    eps = 2.0 * np.sqrt(np.maximum(A * A + B * B - 2.0 * A * B * cos_k, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        deps = np.where(eps > 0.0, 4.0 * (B - A * cos_k) / eps, 0.0)
    # unpaired modes keep their sign
    zero = np.isclose(np.sin(k), 0.0, atol=1e-12) & (cos_k > 0)
    pi = np.isclose(np.sin(k), 0.0, atol=1e-12) & (cos_k < 0)
    eps = np.where(zero, 2.0 * (A - B), eps)
    deps = np.where(zero, -2.0, deps)
    eps = np.where(pi, 2.0 * (A + B), eps)
    deps = np.where(pi, 2.0, deps)
    return eps, deps


def _log_cosh2(x):
    """log(2 cosh x), stable."""
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax))


def _product_terms(eps, deps, beta):
    """(sign, log|value|, dvalue/dB / value) for prod 2cosh and prod 2sinh.

    The sinh product may vanish when a signed mode sits at zero energy; that
    case returns the derivative in absolute form via ``zero_deriv``.
    """
    x = 0.5 * beta * eps
    log_c = float(np.sum(_log_cosh2(x)))
    dlog_c = float(np.sum(0.5 * beta * np.tanh(x) * deps))

    zero = x == 0.0
    nz = ~zero
    ax = np.abs(x[nz])
    log_s_parts = ax + np.log(-np.expm1(-2.0 * ax))
    sign_s = float(np.prod(np.sign(x[nz])))
    log_s = float(np.sum(log_s_parts))
    if not np.any(zero):
        dlog_s = float(np.sum(0.5 * beta * deps / np.tanh(x)))
        return (1.0, log_c, dlog_c), (sign_s, log_s, dlog_s, None)
    # product is zero; derivative survives only if exactly one factor vanishes
    if np.count_nonzero(zero) > 1:
        return (1.0, log_c, dlog_c), (0.0, -math.inf, 0.0, 0.0)
    # d/dB [2 sinh(beta eps/2)] at eps = 0 equals beta * deps
    d0 = beta * float(deps[zero][0])
    return (1.0, log_c, dlog_c), (0.0, -math.inf, 0.0, (sign_s, log_s, d0))


def _check_uniform(spec: ChainSpec):
    if not spec.is_uniform_ferromagnet:
        raise UnsupportedModelError("free-fermion oracle needs a uniform ferromagnetic ring with h = 0")


def _sector_sums(n: int, A: float, B: float, beta: float):
    """Signed (value, dvalue/dB) terms of 2Z, each as (sign, log|value|, dlog)."""
    terms = []
    for periodic, sinh_sign in ((False, +1.0), (True, -1.0)):
        eps, deps = _mode_energies(n, A, B, periodic)
        (c_sign, c_log, c_dlog), (s_sign, s_log, s_dlog, zero) = _product_terms(eps, deps, beta)
        terms.append((c_sign, c_log, c_dlog * 1.0, None))
        terms.append((sinh_sign * s_sign, s_log, s_dlog, None if zero is None else
                      (sinh_sign * zero[0], zero[1], zero[2])))
    return terms


def free_fermion_log_z(n: int, A: float, B: float, beta_h: float) -> float:
    """ln Z of the uniform ferromagnetic ring (beta_h > 0)."""
    terms = _sector_sums(n, A, B, beta_h)
    logs = [t[1] for t in terms if t[0] != 0.0]
    ref = max(logs)
    z2 = sum(t[0] * math.exp(t[1] - ref) for t in terms if t[0] != 0.0)
    return ref + math.log(0.5 * z2)


def free_fermion_e_ising(n_or_spec, pt: ThermalPoint) -> float:
    """Thermal <H_IM> for the uniform ferromagnetic ring.

    Accepts a site count or a ChainSpec (which must be uniform ferromagnetic).
    """
    if isinstance(n_or_spec, ChainSpec):
        _check_uniform(n_or_spec)
        n = n_or_spec.n
    else:
        n = int(n_or_spec)
    if n < 2:
        raise UnsupportedModelError("free-fermion oracle needs n >= 2")
    A, B, beta = float(pt.A), float(pt.B), pt.beta_h
    if beta == 0.0:
        return 0.0
    terms = _sector_sums(n, A, B, beta)
    logs = [t[1] for t in terms if t[0] != 0.0]
    logs += [t[3][1] for t in terms if t[3] is not None]
    ref = max(logs)
    z2 = 0.0
    dz2 = 0.0
    for sign, log_v, dlog, zero in terms:
        if sign != 0.0:
            v = sign * math.exp(log_v - ref)
            z2 += v
            dz2 += v * dlog
        if zero is not None:
            zsign, zlog, d0 = zero
            dz2 += zsign * math.exp(zlog - ref) * d0
    # <H_IM> = dF/dB = -(1/beta) d ln Z / dB
    return -dz2 / (beta * z2)
