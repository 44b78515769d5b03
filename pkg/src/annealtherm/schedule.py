"""Annealing schedules A(s), B(s) and piecewise-linear s(t) protocols.

Energies are frequencies E/h in GHz, times are in microseconds.

The shipped default schedule is synthetic.  Device tables are not public, so
``default_schedule`` tabulates the closed forms

    A(s) = 6.0 * exp(-ln(1200) * s**gamma)          (A(0) = 6 GHz, A(1) = 5 MHz)
    B(s) = 0.04 + 11.96 * s**delta                  (B(0) = 40 MHz, B(1) = 12 GHz)

with ``gamma`` and ``delta`` solved so that A and B cross at s = 0.346 with
A = B = 1.05 GHz.  Pass a measured table to ``load_schedule`` for anything
device-specific.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from typing import TextIO

import numpy as np
from scipy.interpolate import PchipInterpolator

SCHEDULE_HEADER = ("s", "A_GHz", "B_GHz")
PROTOCOL_HEADER = ("t_us", "s")

CROSSING_S = 0.346
CROSSING_GHZ = 1.05

MAX_RATE_PER_US = 1.0
MAX_ANNEAL_US = 2000.0
MAX_TOTAL_MS = 3000.0


class ScheduleError(ValueError):
    pass


class NoCrossingError(ScheduleError):
    pass


@dataclass(frozen=True, eq=False)
class AnnealSchedule:
    s: np.ndarray
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        a = np.asarray(self.A, dtype=float)
        b = np.asarray(self.B, dtype=float)
        if not (s.ndim == a.ndim == b.ndim == 1 and s.size == a.size == b.size):
            raise ScheduleError("s, A, B must be 1-d and equally long")
        if s.size < 4:
            raise ScheduleError(f"need at least 4 knots, got {s.size}")
        if not np.all(np.isfinite(s)) or not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)):
            raise ScheduleError("non-finite schedule entry")
        if np.any(np.diff(s) <= 0):
            raise ScheduleError("s values must be strictly increasing")
        if s[0] != 0.0 or s[-1] != 1.0:
            raise ScheduleError("s must start at 0 and end at 1")
        if np.any(a < 0) or np.any(b < 0):
            raise ScheduleError("A and B must be nonnegative")
        for name, arr in (("s", s), ("A", a), ("B", b)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @cached_property
    def _interp(self):
        return PchipInterpolator(self.s, self.A), PchipInterpolator(self.s, self.B)

    def __call__(self, s):
        return evaluate(self, s)

    def __eq__(self, other):
        if not isinstance(other, AnnealSchedule):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in "sAB")

    __hash__ = None


def evaluate(sched: AnnealSchedule, s):
    """(A(s), B(s)) in GHz; scalar or array ``s`` in [0, 1]."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0.0) or np.any(s_arr > 1.0) or np.any(np.isnan(s_arr)):
        raise ScheduleError(f"s out of range [0, 1]: {s}")
    fa, fb = sched._interp
    a = np.clip(fa(s_arr), 0.0, None)
    b = np.clip(fb(s_arr), 0.0, None)
    # knot values exactly, independent of polynomial rounding
    k = np.clip(np.searchsorted(sched.s, s_arr), 0, sched.s.size - 1)
    hit = sched.s[k] == s_arr
    a = np.where(hit, sched.A[k], a)
    b = np.where(hit, sched.B[k], b)
    if s_arr.ndim == 0:
        return float(a), float(b)
    return a, b


def crossing_point(sched: AnnealSchedule, tol_ghz: float = 1e-6) -> float:
    """Location where A(s) = B(s), by bisection."""
    def gap(x):
        a, b = evaluate(sched, x)
        return a - b

    lo, hi = 0.0, 1.0
    g_lo, g_hi = gap(lo), gap(hi)
    if not (g_lo > 0.0 and g_hi < 0.0):
        raise NoCrossingError("A - B does not change sign from + to - on [0, 1]")
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g = gap(mid)
        if abs(g) < tol_ghz or hi - lo < 1e-15:
            break
        if g > 0.0:
            lo = mid
        else:
            hi = mid
    return mid


def synthetic_schedule_knots() -> np.ndarray:
    """Knot table (s, A, B) of the synthetic default schedule."""
    a0, a1 = 6.0, 0.005
    b0, b1 = 0.04, 12.0
    lam = math.log(a0 / a1)
    gamma = math.log(math.log(a0 / CROSSING_GHZ) / lam) / math.log(CROSSING_S)
    delta = math.log((CROSSING_GHZ - b0) / (b1 - b0)) / math.log(CROSSING_S)
    s = np.union1d(np.round(np.linspace(0.0, 1.0, 101), 12), [CROSSING_S])
    A = a0 * np.exp(-lam * s ** gamma)
    B = b0 + (b1 - b0) * s ** delta
    A[-1] = a1
    B[-1] = b1
    return np.column_stack([s, A, B])


def default_schedule() -> AnnealSchedule:
    text = resources.files("annealtherm.data").joinpath("default_schedule.csv").read_text()
    return load_schedule(io.StringIO(text))


def load_schedule(source: TextIO | str) -> AnnealSchedule:
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise ScheduleError("empty schedule file") from None
    if tuple(h.strip() for h in header) != SCHEDULE_HEADER:
        raise ScheduleError(f"bad header {header!r}; expected {','.join(SCHEDULE_HEADER)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 3:
            raise ScheduleError(f"line {lineno}: expected 3 columns")
        try:
            rows.append([float(x) for x in row])
        except ValueError as exc:
            raise ScheduleError(f"line {lineno}: {exc}") from exc
    if not rows:
        raise ScheduleError("no knots")
    arr = np.array(rows)
    if np.any(arr[:, 0] < 0.0) or np.any(arr[:, 0] > 1.0):
        raise ScheduleError("s outside [0, 1]")
    return AnnealSchedule(arr[:, 0], arr[:, 1], arr[:, 2])


def save_schedule(sched: AnnealSchedule, stream: TextIO | None = None):
    out = io.StringIO() if stream is None else stream
    out.write(",".join(SCHEDULE_HEADER) + "\n")
    for s, a, b in zip(sched.s, sched.A, sched.B):
        out.write(f"{float(s)!r},{float(a)!r},{float(b)!r}\n")
    return out.getvalue() if stream is None else None


# -- protocols ---------------------------------------------------------------

@dataclass(frozen=True)
class ProtocolParams:
    s_p: float
    t_p: float
    rate_i: float = 1.0
    rate_f: float = 1.0
    rate_cap: float = MAX_RATE_PER_US

    def __post_init__(self):
        if not 0.0 < self.s_p < 1.0:
            raise ScheduleError(f"s_p must lie in (0, 1), got {self.s_p}")
        if not self.t_p >= 0.0:
            raise ScheduleError(f"t_p must be >= 0, got {self.t_p}")
        if not 0.0 < self.rate_i <= self.rate_cap:
            raise ScheduleError(f"rate_i must lie in (0, {self.rate_cap}], got {self.rate_i}")
        if not self.rate_f > 0.0:
            raise ScheduleError(f"rate_f must be positive, got {self.rate_f}")


@dataclass(frozen=True, eq=False)
class ScheduleProtocol:
    t: np.ndarray
    s: np.ndarray
    direction: str = "forward"

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        s = np.asarray(self.s, dtype=float)
        if t.shape != s.shape or t.ndim != 1:
            raise ScheduleError("t and s must be equal-length 1-d arrays")
        if self.direction not in ("forward", "reverse"):
            raise ScheduleError(f"unknown direction {self.direction!r}")
        if t.size:
            if t[0] != 0.0 or np.any(np.diff(t) <= 0):
                raise ScheduleError("protocol times must start at 0 and increase strictly")
            if np.any(s < 0.0) or np.any(s > 1.0):
                raise ScheduleError("protocol s outside [0, 1]")
            if s[-1] != 1.0:
                raise ScheduleError("protocol must end at s = 1")
        for name, arr in (("t", t), ("s", s)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def duration(self) -> float:
        return float(self.t[-1]) if self.t.size else 0.0

    def slopes(self) -> np.ndarray:
        return np.diff(self.s) / np.diff(self.t)

    def segments(self):
        """(t0, t1, s0, s1) per segment."""
        return list(zip(self.t[:-1], self.t[1:], self.s[:-1], self.s[1:]))

    def pause_time(self) -> float:
        flat = np.diff(self.s) == 0.0
        return float(np.sum(np.diff(self.t)[flat]))


def _build(points, direction):
    # drop zero-length pause
    t = [points[0][0]]
    s = [points[0][1]]
    for tp, sp in points[1:]:
        if tp == t[-1]:
            continue
        t.append(tp)
        s.append(sp)
    return ScheduleProtocol(np.array(t), np.array(s), direction)


def forward_protocol(p: ProtocolParams, hardware_limits: bool = False) -> ScheduleProtocol:
    """Ramp 0 -> s_p at rate_i, hold for t_p, quench to 1 at rate_f."""
    t1 = p.s_p / p.rate_i
    t2 = t1 + p.t_p
    t3 = t2 + (1.0 - p.s_p) / p.rate_f
    proto = _build([(0.0, 0.0), (t1, p.s_p), (t2, p.s_p), (t3, 1.0)], "forward")
    if hardware_limits:
        _enforce_anneal_time(proto)
    return proto


def reverse_protocol(p: ProtocolParams, hardware_limits: bool = False) -> ScheduleProtocol:
    """Start at s = 1, anneal back to s_p, hold, quench to 1."""
    t1 = (1.0 - p.s_p) / p.rate_i
    t2 = t1 + p.t_p
    t3 = t2 + (1.0 - p.s_p) / p.rate_f
    proto = _build([(0.0, 1.0), (t1, p.s_p), (t2, p.s_p), (t3, 1.0)], "reverse")
    if hardware_limits:
        _enforce_anneal_time(proto)
    return proto


def _enforce_anneal_time(proto):
    if proto.duration > MAX_ANNEAL_US:
        raise ScheduleError(
            f"anneal lasts {proto.duration:g} us, hardware limit is {MAX_ANNEAL_US:g} us"
        )


def s_of_t(proto: ScheduleProtocol, t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0) or np.any(t_arr > proto.duration):
        raise ScheduleError(f"t out of range [0, {proto.duration}]")
    out = np.interp(t_arr, proto.t, proto.s)
    return float(out) if out.ndim == 0 else out


def check_hardware_limits(proto: ScheduleProtocol, n_a: int = 1, rate_cap: float | None = MAX_RATE_PER_US,
                          max_anneal_us: float = MAX_ANNEAL_US, max_total_ms: float = MAX_TOTAL_MS) -> list[str]:
    """List of violated hardware constraints; empty when the protocol is feasible.

    ``rate_cap=None`` skips the slope check.
    """
    report = []
    if proto.t.size < 2:
        return report
    if rate_cap is not None:
        for k, slope in enumerate(proto.slopes()):
            if abs(slope) > rate_cap * (1.0 + 1e-12):
                report.append(f"segment {k}: |ds/dt| = {abs(slope):g} /us exceeds {rate_cap:g} /us")
    if proto.duration > max_anneal_us:
        report.append(f"anneal time {proto.duration:g} us exceeds {max_anneal_us:g} us")
    total_ms = n_a * proto.pause_time() / 1000.0
    if total_ms > max_total_ms:
        report.append(f"total pause time {n_a} x {proto.pause_time():g} us = {total_ms:g} ms exceeds {max_total_ms:g} ms")
    return report


def save_protocol(proto: ScheduleProtocol, stream: TextIO | None = None):
    out = io.StringIO() if stream is None else stream
    out.write(",".join(PROTOCOL_HEADER) + "\n")
    for t, s in zip(proto.t, proto.s):
        out.write(f"{float(t)!r},{float(s)!r}\n")
    return out.getvalue() if stream is None else None


def load_protocol(source: TextIO | str, direction: str | None = None) -> ScheduleProtocol:
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != PROTOCOL_HEADER:
        raise ScheduleError(f"bad protocol header {header!r}")
    rows = np.array([[float(x) for x in row] for row in reader if row], dtype=float).reshape(-1, 2)
    if direction is None:
        direction = "reverse" if rows.size and rows[0, 1] == 1.0 else "forward"
    return ScheduleProtocol(rows[:, 0], rows[:, 1], direction)
