"""Pause-and-quench experiments built on the master-equation integrator."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from ..model import ChainSpec, index_to_spins
from ..schedule import AnnealSchedule, ScheduleProtocol
from .davies import AmeError, BathParams, check_ame_size
from .dynamics import (UNITARY_MAX_SITES, AmeRun, IntegratorError, TrajectoryOutput,
                       _initial_state, _Integrator, unitary_propagator)

SWEEP_HEADER = ("n", "s_p", "rate_us_inv", "e_ising", "pause_effective_us", "trace_error")
TRAJECTORY_HEADER = ("t_us", "s", "e_ising", "trace")
#: long enough for the default bath to converge everywhere on the default schedule
DEFAULT_PAUSE_US = 2000.0


class BracketError(ValueError):
    pass


@dataclass(frozen=True)
class QuenchCell:
    n: int
    s_p: float
    rate: float
    e_ising: float
    pause_effective: float
    trace_error: float
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


def _segment_run(integ: _Integrator, rho, t0, t1, s0, s1):
    gen = integ.pause(rho, t0, t1, s0, [t1]) if s0 == s1 else integ.ramp(rho, t0, t1, s0, s1, [t1])
    for _, r in gen:
        rho = r
    return rho


def _e_ising(rho: np.ndarray, e_diag: np.ndarray) -> float:
    return float(np.real(np.diag(rho)) @ e_diag)


def prepare_paused_state(spec: ChainSpec, sched: AnnealSchedule, bath: BathParams, s_p: float,
                         rate_i: float = 1.0, t_p: float = DEFAULT_PAUSE_US, rtol: float = 1e-5,
                         atol: float = 1e-9, pause_tol: float = 1e-6):
    """Thermal start at s = 0, ramp to s_p at rate_i, pause (cut short on convergence).

    Returns (rho, integrator) so callers can reuse the integrator state.
    """
    if not 0.0 < s_p <= 1.0:
        raise AmeError(f"s_p must lie in (0, 1], got {s_p}")
    t1 = s_p / rate_i
    # dummy protocol for the run record; only the first two segments are integrated
    proto = ScheduleProtocol(np.array([0.0, t1, t1 + t_p + 1.0]), np.array([0.0, s_p, 1.0]))
    if s_p == 1.0:
        proto = ScheduleProtocol(np.array([0.0, t1]), np.array([0.0, 1.0]))
    run = AmeRun(spec, sched, proto, bath, rtol, atol, pause_tol=pause_tol)
    integ = _Integrator(run)
    rho = _initial_state(run, integ.ham)
    rho = _segment_run(integ, rho, 0.0, t1, 0.0, s_p)
    if t_p > 0:
        rho = _segment_run(integ, rho, t1, t1 + t_p, s_p, s_p)
    return rho, integ


def quench_from(integ: _Integrator, rho: np.ndarray, s_p: float, rate: float,
                closed: bool = False) -> np.ndarray:
    """Quench s_p -> 1 at ``rate`` (1/us); infinite rate projects immediately."""
    if s_p == 1.0 or math.isinf(rate):
        return rho
    if not rate > 0:
        raise AmeError(f"quench rate must be positive, got {rate}")
    diss = integ.diss
    if closed:
        integ.diss = None
    try:
        return _segment_run(integ, rho, 0.0, (1.0 - s_p) / rate, s_p, 1.0)
    finally:
        integ.diss = diss


def quench_sweep(spec: ChainSpec, sched: AnnealSchedule, bath: BathParams, s_p_list, rate_list, *,
                 rate_i: float = 1.0, t_p: float = DEFAULT_PAUSE_US, closed: bool = False,
                 rtol: float = 1e-5, atol: float = 1e-9, pause_tol: float = 1e-6) -> list[QuenchCell]:
    """Post-quench e_ising on the (s_p, rate) grid.

    Each s_p is ramped and paused once; every rate then quenches a copy of
    the paused state.  ``closed=True`` switches the bath off for the quench
    only.  Failures are recorded per cell and the sweep carries on.
    """
    check_ame_size(spec)
    rates = [float(r) for r in rate_list]
    if not rates:
        raise AmeError("rate list is empty")
    cells = []
    for s_p in (float(x) for x in s_p_list):
        try:
            rho0, integ = prepare_paused_state(spec, sched, bath, s_p, rate_i, t_p, rtol, atol, pause_tol)
        except (IntegratorError, AmeError, np.linalg.LinAlgError) as exc:
            cells += [QuenchCell(spec.n, s_p, r, math.nan, math.nan, math.nan, str(exc)) for r in rates]
            continue
        pause = integ.pause_effective
        for r in rates:
            try:
                rho = quench_from(integ, rho0, s_p, r, closed)
                tr_err = abs(float(np.real(np.trace(rho))) - 1.0)
                cells.append(QuenchCell(spec.n, s_p, r, _e_ising(rho, integ.ham.e_ising), pause, tr_err))
            except (IntegratorError, AmeError, np.linalg.LinAlgError) as exc:
                cells.append(QuenchCell(spec.n, s_p, r, math.nan, pause, math.nan, str(exc)))
    return cells


def sample_measurements(populations, shots: int, seed) -> np.ndarray:
    """(shots, n) array of +-1 spin configurations drawn from ``populations``."""
    p = np.asarray(populations, dtype=float)
    dim = p.size
    n = dim.bit_length() - 1
    if dim < 2 or (1 << n) != dim:
        raise AmeError("populations must have length 2^n")
    if np.any(p < -1e-9):
        raise AmeError(f"negative probability {p.min():g}")
    total = p.sum()
    if abs(total - 1.0) > 1e-6:
        raise AmeError(f"probabilities sum to {total:.9g}, not 1")
    if shots < 0:
        raise AmeError("shots must be nonnegative")
    p = np.clip(p, 0.0, None)
    p /= p.sum()
    rng = np.random.default_rng(seed)
    idx = rng.choice(dim, size=int(shots), p=p)
    return index_to_spins(idx, n)


def unitary_quench_norm(spec: ChainSpec, sched: AnnealSchedule, s_p: float, rate: float,
                        rtol: float = 1e-8, cap: int = UNITARY_MAX_SITES) -> float:
    """||U - 1|| (largest singular value) for the closed-system quench s_p -> 1."""
    if spec.n > cap:
        raise AmeError(f"n={spec.n} exceeds the unitary cap of {cap} sites")
    if not rate > 0:
        raise AmeError("rate must be positive")
    if math.isinf(rate) or s_p >= 1.0:
        return 0.0
    U = unitary_propagator(spec, sched, s_p, 1.0, (1.0 - s_p) / rate, rtol=rtol, cap=cap)
    return float(np.linalg.norm(U - np.eye(U.shape[0]), 2))


def minimal_quench_rate(spec: ChainSpec, sched: AnnealSchedule, s_p: float, eps: float = 0.1,
                        rate_lo: float = 1.0, rate_hi: float = 1e9, rel_tol: float = 1e-3) -> float:
    """Smallest rate above which the quench unitary stays within ``eps`` of the identity.

    Walks down from ``rate_hi`` by factors of 2 to bracket the last crossing,
    then bisects geometrically.  ||U - 1|| <= 2 always, so eps >= 2 returns
    ``rate_lo`` directly.
    """
    if not eps > 0:
        raise AmeError("eps must be positive")
    if eps >= 2.0:
        return rate_lo

    def ok(r):
        return unitary_quench_norm(spec, sched, s_p, r) <= eps

    if not ok(rate_hi):
        raise BracketError(f"norm exceeds {eps} even at rate {rate_hi:g}")
    hi = rate_hi
    lo = hi / 2.0
    while ok(lo):
        hi = lo
        if lo <= rate_lo:
            return rate_lo
        lo = max(lo / 2.0, rate_lo)
    while hi / lo > 1.0 + rel_tol:
        mid = math.sqrt(lo * hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def fit_loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def write_sweep_csv(cells, stream: TextIO):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for c in cells:
        w.writerow([c.n, repr(c.s_p), repr(c.rate), repr(c.e_ising), repr(c.pause_effective), repr(c.trace_error)])


def read_sweep_csv(stream: TextIO) -> list[QuenchCell]:
    r = csv.reader(stream)
    header = tuple(next(r))
    if header != SWEEP_HEADER:
        raise ValueError(f"unexpected header {header}")
    return [QuenchCell(int(row[0]), *(float(v) for v in row[1:])) for row in r if row]


def write_trajectory_csv(traj: TrajectoryOutput, stream: TextIO):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(TRAJECTORY_HEADER)
    for t, s, e, tr in zip(traj.times, traj.s, traj.e_ising, traj.trace):
        w.writerow([repr(float(t)), repr(float(s)), repr(float(e)), repr(float(tr))])


def read_trajectory_csv(stream: TextIO) -> dict[str, np.ndarray]:
    r = csv.reader(stream)
    header = tuple(next(r))
    if header != TRAJECTORY_HEADER:
        raise ValueError(f"unexpected header {header}")
    rows = np.array([[float(v) for v in row] for row in r if row]).reshape(-1, 4)
    return {k: rows[:, i] for i, k in enumerate(TRAJECTORY_HEADER)}
