"""Gauge ensembles, observable means and percentile-bootstrap intervals."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .model import (ChainSpec, apply_gauge_config, index_to_spins, ising_energy, spins_to_index,
                    squared_magnetization)

STATS_HEADER = ("observable", "s_p", "mean", "ci_lo", "ci_hi", "n_gauges", "samples_per_gauge")
OBSERVABLES = ("e_ising", "m2")
#: resamples drawn per independent stream; keeps results fixed whatever the chunking
_BOOT_CHUNK = 1000


class StatsError(ValueError):
    pass


@dataclass
class GaugeEnsemble:
    """Samples grouped by gauge, already mapped back to the original frame."""

    spec: ChainSpec
    gauges: list = field(default_factory=list)
    samples: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.gauges) != len(self.samples):
            raise StatsError("one sample block per gauge is required")
        blocks = []
        for g, s in zip(self.gauges, self.samples):
            s = np.asarray(s, dtype=np.int8)
            if s.ndim != 2 or s.shape[1] != self.spec.n:
                raise StatsError(f"sample block must have shape (k, {self.spec.n})")
            if np.asarray(g).shape != (self.spec.n,):
                raise StatsError("gauge length must equal n")
            blocks.append(s)
        self.samples = blocks

    @classmethod
    def from_gauged(cls, spec: ChainSpec, gauges, gauged_samples) -> "GaugeEnsemble":
        """Undo each gauge on samples taken in the gauged frame."""
        back = [apply_gauge_config(s, g) for g, s in zip(gauges, gauged_samples)]
        return cls(spec, [np.asarray(g, dtype=np.int8) for g in gauges], back)

    @property
    def n_gauges(self) -> int:
        return len(self.gauges)

    @property
    def samples_per_gauge(self) -> int:
        return min((s.shape[0] for s in self.samples), default=0)


def ensemble_from_populations(spec: ChainSpec, populations, n_gauges: int, shots: int, seed) -> GaugeEnsemble:
    """Synthetic experiment: per gauge, sample the gauged problem and map back.

    ``populations`` is the computational-basis distribution of ``spec``; the
    gauged problem's distribution is the same one relabelled.
    """
    p = np.asarray(populations, dtype=float)
    if p.size != 1 << spec.n:
        raise StatsError("populations must have length 2^n")
    p = np.clip(p, 0.0, None)
    p /= p.sum()
    ss = np.random.SeedSequence(seed)
    gauges, raw = [], []
    configs = index_to_spins(np.arange(p.size), spec.n)
    for child in ss.spawn(n_gauges):
        rng = np.random.default_rng(child)
        g = (2 * rng.integers(0, 2, size=spec.n) - 1).astype(np.int8)
        # state x of the original problem is state g*x of the gauged one
        gauged_p = np.empty_like(p)
        gauged_p[spins_to_index(apply_gauge_config(configs, g))] = p
        idx = rng.choice(p.size, size=shots, p=gauged_p)
        gauges.append(g)
        raw.append(index_to_spins(idx, spec.n))
    return GaugeEnsemble.from_gauged(spec, gauges, raw)


def observable_mean(ens: GaugeEnsemble, obs: str = "e_ising") -> tuple[np.ndarray, float]:
    """Per-gauge means and their unweighted grand mean."""
    if obs not in OBSERVABLES:
        raise StatsError(f"unknown observable {obs!r}")
    if ens.n_gauges == 0:
        raise StatsError("ensemble has no gauges")
    means = np.empty(ens.n_gauges)
    for k, s in enumerate(ens.samples):
        if s.shape[0] == 0:
            raise StatsError(f"gauge {k} has no samples")
        vals = ising_energy(ens.spec, s) if obs == "e_ising" else squared_magnetization(s)
        means[k] = np.mean(vals)
    return means, float(means.mean())


def symmetrized_magnetization(ens: GaugeEnsemble) -> float:
    """<M_z> averaged over every sample and its global spin flip.

    H_IM without fields is flip-symmetric, so the estimator is exactly 0.
    """
    total = 0.0
    count = 0
    for s in ens.samples:
        m = s.astype(float).mean(axis=1)
        total += 0.5 * (m.sum() + (-m).sum())
        count += m.size
    if count == 0:
        raise StatsError("ensemble has no samples")
    return total / count


@dataclass(frozen=True)
class BootstrapCI:
    mean: float
    lo: float
    hi: float
    level: float
    resamples: int

    @property
    def width(self) -> float:
        return self.hi - self.lo


def bootstrap_distribution(values, resamples: int = 10_000, seed=0) -> np.ndarray:
    """Grand means of ``resamples`` with-replacement resamples of ``values``."""
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise StatsError("bootstrap needs at least 2 gauges")
    if resamples < 1:
        raise StatsError("resamples must be >= 1")
    n_chunks = -(-resamples // _BOOT_CHUNK)
    out = np.empty(resamples)
    for c, child in enumerate(np.random.SeedSequence(seed).spawn(n_chunks)):
        lo = c * _BOOT_CHUNK
        hi = min(resamples, lo + _BOOT_CHUNK)
        idx = np.random.default_rng(child).integers(0, x.size, size=(hi - lo, x.size))
        out[lo:hi] = x[idx].mean(axis=1)
    return out


def bootstrap_ci(per_gauge_means, level: float = 0.95, resamples: int = 10_000, seed=0) -> BootstrapCI:
    """Percentile bootstrap over gauges."""
    if not 0.0 < level < 1.0:
        raise StatsError("level must lie in (0, 1)")
    x = np.asarray(per_gauge_means, dtype=float)
    dist = bootstrap_distribution(x, resamples, seed)
    mean = float(x.mean())
    lo, hi = np.quantile(dist, [(1.0 - level) / 2.0, (1.0 + level) / 2.0])
    # a skewed bootstrap distribution can leave the point estimate outside
    return BootstrapCI(mean, float(min(lo, mean)), float(max(hi, mean)), level, int(resamples))


def relative_difference(x: float, ref: float) -> float:
    if ref == 0 or not math.isfinite(ref):
        raise StatsError("relative difference needs a finite nonzero reference")
    return abs(x - ref) / abs(ref)


@dataclass(frozen=True)
class StatsRow:
    observable: str
    s_p: float
    ci: BootstrapCI
    n_gauges: int
    samples_per_gauge: int


def summarize(ens: GaugeEnsemble, s_p: float, obs: str, level=0.95, resamples=10_000, seed=0) -> StatsRow:
    means, _ = observable_mean(ens, obs)
    return StatsRow(obs, s_p, bootstrap_ci(means, level, resamples, seed), ens.n_gauges, ens.samples_per_gauge)


def write_stats_csv(rows, stream: TextIO):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(STATS_HEADER)
    for r in rows:
        w.writerow([r.observable, repr(r.s_p), repr(r.ci.mean), repr(r.ci.lo), repr(r.ci.hi),
                    r.n_gauges, r.samples_per_gauge])


def read_stats_csv(stream: TextIO) -> list[dict]:
    r = csv.DictReader(stream)
    if tuple(r.fieldnames or ()) != STATS_HEADER:
        raise StatsError(f"unexpected header {r.fieldnames}")
    out = []
    for row in r:
        out.append({
            "observable": row["observable"],
            "s_p": float(row["s_p"]),
            "mean": float(row["mean"]),
            "ci_lo": float(row["ci_lo"]),
            "ci_hi": float(row["ci_hi"]),
            "n_gauges": int(row["n_gauges"]),
            "samples_per_gauge": int(row["samples_per_gauge"]),
        })
    return out
