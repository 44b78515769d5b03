"""Thermal operating points and result records."""
from __future__ import annotations

import math
from dataclasses import dataclass

#: Boltzmann constant over Planck constant, GHz per mK.
KB_OVER_H_GHZ_PER_MK = 0.0208366


class ThermalError(ValueError):
    pass


def beta_from_mk(temperature_mk: float) -> float:
    """Inverse temperature h/(k_B T) in 1/GHz."""
    if not temperature_mk > 0.0:
        raise ThermalError(f"temperature must be positive, got {temperature_mk} mK")
    if math.isinf(temperature_mk):
        return 0.0
    return 1.0 / (KB_OVER_H_GHZ_PER_MK * temperature_mk)


@dataclass(frozen=True)
class ThermalPoint:
    """Transverse field A and Ising scale B (GHz) at a temperature in mK."""

    A: float
    B: float
    temperature: float

    def __post_init__(self):
        if not (math.isfinite(self.A) and math.isfinite(self.B)):
            raise ThermalError("A and B must be finite")
        if self.A < 0 or self.B < 0:
            raise ThermalError("A and B must be nonnegative")
        beta_from_mk(self.temperature)

    @property
    def beta_h(self) -> float:
        return beta_from_mk(self.temperature)

    @classmethod
    def from_beta(cls, A: float, B: float, beta_h: float) -> "ThermalPoint":
        if not (beta_h >= 0.0 and math.isfinite(beta_h)):
            raise ThermalError(f"beta_h must be finite and >= 0, got {beta_h}")
        t = math.inf if beta_h == 0.0 else 1.0 / (KB_OVER_H_GHZ_PER_MK * beta_h)
        return cls(A, B, t)

    @classmethod
    def on_schedule(cls, sched, s: float, temperature: float) -> "ThermalPoint":
        from ..schedule import evaluate

        a, b = evaluate(sched, s)
        return cls(a, b, temperature)


@dataclass(frozen=True)
class GibbsResult:
    e_ising: float
    m2: float
    free_energy: float
    gap: float
