"""Error bars for correlated Markov-chain time series."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QmcEstimate:
    mean: float
    stderr: float
    tau_int: float
    n_samples: int


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Normalized autocorrelation function rho(t), t = 0..len(x)-1, via FFT."""
    x = np.asarray(x, dtype=float)
    n = x.size
    d = x - x.mean()
    var = d @ d / n
    if var == 0.0:
        out = np.zeros(n)
        out[0] = 1.0
        return out
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(d, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acf / var


def integrated_autocorrelation_time(x: np.ndarray, c: float = 6.0) -> float:
    """tau_int = sum_{t>=1} rho(t) with Sokal's automatic window W >= c (1 + 2 tau).

    With this convention the variance of the mean is inflated by 2 tau_int + 1.
    """
    rho = autocorrelation(x)
    if rho.size < 2:
        return 0.0
    tau = np.cumsum(rho[1:])
    window = np.arange(1, rho.size)
    ok = window >= c * (1.0 + 2.0 * tau)
    w = int(np.argmax(ok)) if np.any(ok) else tau.size - 1
    return float(max(tau[w], 0.0))


def estimate(samples: np.ndarray) -> QmcEstimate:
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 2:
        return QmcEstimate(float(x.mean()) if n else float("nan"), float("inf"), 0.0, n)
    tau = integrated_autocorrelation_time(x)
    naive = x.std(ddof=1) / np.sqrt(n)
    return QmcEstimate(float(x.mean()), float(naive * np.sqrt(2.0 * tau + 1.0)), tau, n)


def bin_means(x: np.ndarray, bins: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    per = x.size // bins
    if per == 0:
        raise ValueError(f"{x.size} samples cannot fill {bins} bins")
    return x[: per * bins].reshape(bins, per).mean(axis=1)


def drift_detected(x: np.ndarray, bins: int, nsigma: float = 3.0) -> bool:
    """Compare first-half and second-half bin means; True means likely not equilibrated."""
    b = bin_means(x, bins)
    half = bins // 2
    first, second = b[:half], b[half: 2 * half]
    se = np.sqrt(first.var(ddof=1) / first.size + second.var(ddof=1) / second.size)
    diff = abs(first.mean() - second.mean())
    if se == 0.0:
        return diff > 0.0
    return bool(diff > nsigma * se)


def extrapolate_trotter(slices, estimates) -> QmcEstimate:
    """Weighted fit mean(M) = a + b / M^2; returns a with its propagated error."""
    m = np.asarray(slices, dtype=float)
    if np.unique(m).size < 2:
        raise ValueError("need at least two distinct slice counts")
    y = np.array([e.mean for e in estimates], dtype=float)
    se = np.array([e.stderr for e in estimates], dtype=float)
    if np.any(se <= 0) or not np.all(np.isfinite(se)):
        se = np.ones_like(y)
    X = np.column_stack([np.ones_like(m), 1.0 / m**2])
    W = 1.0 / se**2
    cov = np.linalg.inv(X.T @ (X * W[:, None]))
    coef = cov @ (X.T @ (W * y))
    return QmcEstimate(
        float(coef[0]),
        float(np.sqrt(cov[0, 0])),
        float(max(e.tau_int for e in estimates)),
        int(sum(e.n_samples for e in estimates)),
    )
