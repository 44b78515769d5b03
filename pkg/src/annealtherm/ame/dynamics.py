"""Open- and closed-system evolution along an annealing protocol.

Times are given in microseconds at the interface and converted to ns
internally, so that 2 pi H (H in GHz) is an angular frequency per ns.

Ramps use a fourth-order Magnus step for the unitary part with step-doubling
error control, and a Strang splitting for the Davies dissipator.  Because
the Davies generator commutes with the coherent part at the same s, the
splitting error comes only from the variation of H along the ramp.  The
dissipator is rebuilt whenever s moves by more than ``cache_ds``.

Pauses have a time-independent generator and are propagated with exact
matrix exponentials on checkpoints whose spacing doubles; the pause is cut
short once successive checkpoints agree to ``pause_tol`` in trace distance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from ..exact.ed import build_hamiltonian, gibbs_state_of
from ..model import ChainSpec, diagonal_energies
from ..schedule import AnnealSchedule, ScheduleProtocol, evaluate
from .davies import (AME_MAX_SITES, TWO_PI, AmeError, BathParams, DaviesGenerator,
                     build_davies, check_ame_size, sigma_z_diagonals)

NS_PER_US = 1000.0
UNITARY_MAX_SITES = 8


class IntegratorError(RuntimeError):
    """Step control failed; ``last_good_time`` is in microseconds."""

    def __init__(self, message: str, last_good_time: float):
        super().__init__(f"{message} (last good t = {last_good_time:.9g} us)")
        self.last_good_time = last_good_time


class ChainHamiltonian:
    """H(s) = A(s) H_x + B(s) H_IM with H_x = -sum X_i, both fixed matrices."""

    def __init__(self, spec: ChainSpec, sched: AnnealSchedule, cap: int = UNITARY_MAX_SITES):
        self.spec = spec
        self.sched = sched
        self.hx = build_hamiltonian(spec, 1.0, 0.0, cap=cap)
        self.e_ising = diagonal_energies(spec)
        self.dim = self.e_ising.size

    def coefficients(self, s: float) -> tuple[float, float]:
        return evaluate(self.sched, min(max(s, 0.0), 1.0))

    def at(self, s: float) -> np.ndarray:
        a, b = self.coefficients(s)
        H = a * self.hx
        H[np.diag_indices(self.dim)] += b * self.e_ising
        return H


def trace_distance(r1: np.ndarray, r2: np.ndarray) -> float:
    w = np.linalg.eigvalsh(0.5 * ((r1 - r2) + (r1 - r2).conj().T))
    return 0.5 * float(np.abs(w).sum())


def _expi(herm: np.ndarray) -> np.ndarray:
    """exp(-i herm) for a (stack of) Hermitian matrices."""
    w, v = np.linalg.eigh(herm)
    return (v * np.exp(-1j * w)[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


def _ordered_product(us: np.ndarray) -> np.ndarray:
    """us[-1] @ ... @ us[0] by pairwise reduction."""
    while us.shape[0] > 1:
        if us.shape[0] % 2:
            eye = np.broadcast_to(np.eye(us.shape[1], dtype=us.dtype), (1,) + us.shape[1:])
            us = np.concatenate([us, eye])
        us = us[1::2] @ us[0::2]
    return us[0]


def magnus4(ham: ChainHamiltonian, s_a: float, s_b: float, duration: float, steps: int) -> np.ndarray:
    """Propagator of dU/dt = -i 2 pi H(s(t)) U for a linear ramp s_a -> s_b over ``duration`` ns.

    Fourth-order Magnus with ``steps`` equal sub-steps, all built in one batch.
    """
    h = duration / steps
    c = math.sqrt(3.0) / 6.0
    left = np.arange(steps) / steps
    frac = np.concatenate([left + (0.5 - c) / steps, left + (0.5 + c) / steps])
    a, b = evaluate(ham.sched, np.clip(s_a + (s_b - s_a) * frac, 0.0, 1.0))
    H = a[:, None, None] * ham.hx
    H += (b[:, None] * ham.e_ising)[:, :, None] * np.eye(ham.dim)
    h1, h2 = H[:steps], H[steps:]
    comm = h2 @ h1 - h1 @ h2
    # Omega = -i G with G = 2 pi h/2 (H1 + H2) - i (sqrt3/12) (2 pi h)^2 [H2, H1]
    g = (TWO_PI * 0.5 * h) * (h1 + h2) - 1j * (math.sqrt(3.0) / 12.0) * (TWO_PI * h) ** 2 * comm
    g = 0.5 * (g + np.swapaxes(g.conj(), -1, -2))
    return _ordered_product(_expi(g))


def adaptive_ramp_unitary(ham: ChainHamiltonian, s_a: float, s_b: float, duration: float,
                          tol: float, steps: int = 1, rho: np.ndarray | None = None,
                          max_steps: int = 1 << 20):
    """Magnus-4 propagator with sub-steps doubled until two resolutions agree to ``tol``.

    Without ``rho`` the error is the operator-norm distance of the two
    unitaries.  With ``rho`` it is the trace-norm distance of the two
    propagated states, which ignores phases of unpopulated levels.
    Returns (U, steps) where ``steps`` seeds the next interval.
    """
    steps = max(1, int(steps))
    coarse = magnus4(ham, s_a, s_b, duration, steps)
    while True:
        fine = magnus4(ham, s_a, s_b, duration, 2 * steps)
        if rho is None:
            err = float(np.linalg.norm(fine - coarse, 2))
        else:
            diff = fine @ rho @ fine.conj().T - coarse @ rho @ coarse.conj().T
            err = float(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))).sum())
        # fourth order: the fine result is about 15x closer than the coarse one
        err /= 15.0
        if err <= tol:
            # comfortably inside tolerance: try fewer sub-steps next time
            return fine, steps if err > tol / 32.0 else max(1, steps // 2)
        steps *= 2
        if steps > max_steps:
            raise IntegratorError("sub-step count exceeded", float("nan"))
        coarse = fine


@dataclass
class AmeRun:
    spec: ChainSpec
    sched: AnnealSchedule
    proto: ScheduleProtocol
    bath: BathParams | None = field(default_factory=BathParams)
    rtol: float = 1e-5
    atol: float = 1e-9
    record_grid: np.ndarray | None = None
    initial: object = None
    seed: int | None = None
    pause_tol: float = 1e-6
    cache_ds: float = 1e-3

    def __post_init__(self):
        check_ame_size(self.spec)
        for name in ("rtol", "atol"):
            v = getattr(self, name)
            if not 0.0 < v <= 1e-3:
                raise AmeError(f"{name} must lie in (0, 1e-3], got {v}")
        if not self.pause_tol > 0:
            raise AmeError("pause_tol must be positive")
        if not 0.0 < self.cache_ds <= 0.1:
            raise AmeError("cache_ds must lie in (0, 0.1]")
        if self.record_grid is not None:
            g = np.asarray(self.record_grid, dtype=float)
            if g.ndim != 1 or np.any(g < 0) or np.any(g > self.proto.duration):
                raise AmeError("record_grid must be times within the protocol")


@dataclass
class TrajectoryOutput:
    times: np.ndarray
    s: np.ndarray
    e_ising: np.ndarray
    trace: np.ndarray
    populations_final: np.ndarray
    final_state: np.ndarray
    trace_error: float
    pause_effective: float = 0.0
    pause_converged: bool = False
    min_eigenvalue: float = 0.0
    hermiticity_error: float = 0.0

    @property
    def e_ising_final(self) -> float:
        return float(self.e_ising[-1])


class _Dissipator:
    """Davies dissipator frozen on a grid of s values."""

    def __init__(self, spec: ChainSpec, ham: ChainHamiltonian, bath: BathParams, ds: float):
        self.ham = ham
        self.bath = bath
        self.ds = ds
        self.z = sigma_z_diagonals(spec.n)
        self.s = None
        self.gen: DaviesGenerator | None = None

    def at(self, s: float) -> DaviesGenerator:
        if self.gen is None or abs(s - self.s) > self.ds:
            self.gen = build_davies(self.ham.at(s), self.z, self.bath)
            self.s = s
            self.rate = float(np.abs(np.diag(self.gen.dissipator_eig)).max())
        return self.gen

    def half_step(self, rho: np.ndarray, s: float, h: float) -> np.ndarray:
        """exp(h/2 D) rho to third order (h ||D|| is kept below 0.05)."""
        gen = self.at(s)
        d = gen.dim
        r = gen.to_eig(rho).reshape(-1)
        x = 0.5 * h
        t1 = gen.dissipator_eig @ r
        t2 = gen.dissipator_eig @ t1
        t3 = gen.dissipator_eig @ t2
        out = r + x * t1 + (x * x / 2.0) * t2 + (x**3 / 6.0) * t3
        return gen.from_eig(out.reshape(d, d))


class _Integrator:
    def __init__(self, run: AmeRun):
        self.run = run
        self.ham = ChainHamiltonian(run.spec, run.sched, cap=AME_MAX_SITES)
        open_system = run.bath is not None and run.bath.coupling > 0.0
        self.diss = _Dissipator(run.spec, self.ham, run.bath, run.cache_ds) if open_system else None
        self.pause_effective = 0.0
        self.pause_converged = False
        self._steps = 1

    # -- ramps ---------------------------------------------------------------
    def ramp(self, rho, t0, t1, s0, s1, stops):
        """Advance from t0 to t1 (us); yields (t, rho) at each stop in (t0, t1].

        The ramp is cut into macro intervals short enough that the frozen
        dissipator is accurate; within each, the unitary is a batched Magnus
        product and the dissipator enters by Strang splitting.
        """
        T = (t1 - t0) * NS_PER_US
        slope = (s1 - s0) / T
        ds_max = self.run.cache_ds if self.diss is not None else 0.01
        t = 0.0
        for ts in stops:
            target = (ts - t0) * NS_PER_US
            while target - t > 1e-12 * T:
                dt = min(target - t, ds_max / abs(slope))
                if self.diss is not None:
                    self.diss.at(s0 + slope * (t + 0.5 * dt))
                    dt = min(dt, 0.05 / max(self.diss.rate, 1e-300))
                if target - (t + dt) <= 1e-12 * T:
                    dt = target - t
                sa, sb = s0 + slope * t, s0 + slope * (t + dt)
                tol = (self.run.atol + self.run.rtol) * dt / T
                try:
                    u, self._steps = adaptive_ramp_unitary(self.ham, sa, sb, dt, tol, self._steps, rho)
                except IntegratorError as exc:
                    raise IntegratorError(str(exc).split(" (")[0], t0 + t / NS_PER_US) from None
                if self.diss is not None:
                    sm = 0.5 * (sa + sb)
                    rho = self.diss.half_step(rho, sm, dt)
                    rho = u @ rho @ u.conj().T
                    rho = self.diss.half_step(rho, sm, dt)
                else:
                    rho = u @ rho @ u.conj().T
                rho = 0.5 * (rho + rho.conj().T)
                if not np.all(np.isfinite(rho)):
                    raise IntegratorError("non-finite state", t0 + t / NS_PER_US)
                t = target if dt == target - t else t + dt
            yield ts, rho

    # -- pauses --------------------------------------------------------------
    def pause(self, rho, t0, t1, s, stops):
        T = (t1 - t0) * NS_PER_US
        stops_ns = np.array([(ts - t0) * NS_PER_US for ts in stops])
        if self.diss is None:
            w, v = np.linalg.eigh(self.ham.at(s))
            for ts, tn in zip(stops, stops_ns):
                u = (v * np.exp(-1j * TWO_PI * w * tn)) @ v.conj().T
                yield ts, u @ rho @ u.conj().T
            self.pause_effective += t1 - t0
            return
        gen = build_davies(self.ham.at(s), self.diss.z, self.run.bath)
        d = gen.dim
        L = gen.matrix_eig()
        r_eig = gen.to_eig(rho).reshape(-1)
        # checkpoints at t = dt, 2 dt, 4 dt, ... with the propagator squared each time
        t = 0.0
        dt = min(T, 1.0)
        P = expm(L * dt)
        converged = False
        k = 0
        while t < T and not converged:
            step = min(dt, T - t)
            nxt = (P if step == dt else expm(L * step)) @ r_eig
            # stops inside (t, t + step]
            while k < len(stops_ns) and stops_ns[k] <= t + step + 1e-12 * T:
                tau = stops_ns[k] - t
                r = expm(L * tau) @ r_eig if tau > 0 else r_eig
                yield stops[k], gen.from_eig(r.reshape(d, d))
                k += 1
            dist = trace_distance(r_eig.reshape(d, d), nxt.reshape(d, d))
            r_eig = nxt
            t += step
            if dist < self.run.pause_tol:
                converged = True
                break
            if t < T:
                P = P @ P
                dt *= 2.0
        rho = gen.from_eig(r_eig.reshape(d, d))
        rho = 0.5 * (rho + rho.conj().T)
        self.pause_effective += t / NS_PER_US
        self.pause_converged = converged or self.pause_converged
        for ts in stops[k:]:
            yield ts, rho


def _initial_state(run: AmeRun, ham: ChainHamiltonian) -> np.ndarray:
    init = run.initial
    dim = ham.dim
    if isinstance(init, np.ndarray):
        rho = np.asarray(init, dtype=complex)
        if rho.ndim == 1:
            rho = np.outer(rho, rho.conj())
        if rho.shape != (dim, dim):
            raise AmeError(f"initial state must be {dim}x{dim}")
        return rho
    if init is None:
        init = "gibbs" if run.proto.direction == "forward" else "classical"
    s0 = float(run.proto.s[0])
    if init == "gibbs":
        if run.bath is None:
            raise AmeError("a Gibbs initial state needs a bath temperature")
        return gibbs_state_of(ham.at(s0), run.bath.beta_h).astype(complex)
    if init in ("classical", "ground"):
        rng = np.random.default_rng(run.seed)
        if init == "classical":
            x = int(rng.integers(dim))
        else:
            e = ham.e_ising
            x = int(rng.choice(np.flatnonzero(e == e.min())))
        rho = np.zeros((dim, dim), dtype=complex)
        rho[x, x] = 1.0
        return rho
    raise AmeError(f"unknown initial state {init!r}")


def _record_times(run: AmeRun) -> np.ndarray:
    if run.record_grid is not None:
        grid = np.asarray(run.record_grid, dtype=float)
    else:
        grid = np.linspace(0.0, run.proto.duration, 201)
    return np.unique(np.concatenate([grid, run.proto.t]))


def evolve(run: AmeRun) -> TrajectoryOutput:
    """Integrate the master equation over the protocol; final state at s = 1."""
    integ = _Integrator(run)
    ham = integ.ham
    rho = _initial_state(run, ham)
    times = _record_times(run)
    proto = run.proto
    states = {0.0: rho}
    for t0, t1, s0, s1 in proto.segments():
        stops = [float(t) for t in times if t0 < t <= t1]
        if not stops or stops[-1] != t1:
            stops.append(float(t1))
        if s0 == s1:
            gen = integ.pause(rho, t0, t1, s0, stops)
        else:
            gen = integ.ramp(rho, t0, t1, s0, s1, stops)
        for ts, r in gen:
            states[ts] = r
            rho = r
    return _summarize(run, ham, times, states, integ)


def _summarize(run, ham, times, states, integ) -> TrajectoryOutput:
    e = np.empty(times.size)
    tr = np.empty(times.size)
    min_eig = np.inf
    herm = 0.0
    for i, t in enumerate(times):
        r = states[float(t)]
        diag = np.real(np.diag(r))
        e[i] = diag @ ham.e_ising
        tr[i] = float(np.real(np.trace(r)))
        herm = max(herm, float(np.abs(r - r.conj().T).max()))
        min_eig = min(min_eig, float(np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min()))
    final = states[float(times[-1])]
    pops = np.real(np.diag(final)).copy()
    return TrajectoryOutput(
        times=times,
        s=np.interp(times, run.proto.t, run.proto.s),
        e_ising=e,
        trace=tr,
        populations_final=pops,
        final_state=final,
        trace_error=float(np.abs(tr - 1.0).max()),
        pause_effective=integ.pause_effective,
        pause_converged=integ.pause_converged,
        min_eigenvalue=min_eig,
        hermiticity_error=herm,
    )


def closed_system_evolve(run: AmeRun) -> TrajectoryOutput:
    """Pure Schroedinger evolution (bath coupling set to zero).

    The initial state defaults as in ``evolve`` and may be any density matrix
    or state vector, e.g. a pause-converged state from an open run.
    """
    if run.bath is not None and run.bath.coupling != 0.0 and run.initial is None:
        # keep the bath only for the temperature of a Gibbs start
        ham = ChainHamiltonian(run.spec, run.sched, cap=AME_MAX_SITES)
        init = _initial_state(run, ham)
    else:
        init = run.initial
    closed = AmeRun(run.spec, run.sched, run.proto, None, run.rtol, run.atol,
                    run.record_grid, init, run.seed, run.pause_tol, run.cache_ds)
    return evolve(closed)


def unitary_propagator(spec: ChainSpec, sched: AnnealSchedule, s0: float, s1: float, duration_us: float,
                       rtol: float = 1e-10, atol: float = 1e-13, cap: int = UNITARY_MAX_SITES) -> np.ndarray:
    """Time-ordered propagator of the linear ramp s0 -> s1 over ``duration_us``."""
    if spec.n > cap:
        raise AmeError(f"n={spec.n} exceeds the unitary cap of {cap} sites")
    ham = ChainHamiltonian(spec, sched, cap=cap)
    T = duration_us * NS_PER_US
    if T <= 0.0:
        return np.eye(ham.dim, dtype=complex)
    U, _ = adaptive_ramp_unitary(ham, s0, s1, T, atol + rtol)
    return U
