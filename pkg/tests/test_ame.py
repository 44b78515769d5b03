import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from annealtherm.ame import (AmeError, AmeRun, BathParams, ChainHamiltonian, IntegratorError, closed_system_evolve,
                             davies_generator, evolve, magnus4, ohmic_rate, trace_distance, unitary_propagator)
from annealtherm.ame.dynamics import adaptive_ramp_unitary
from annealtherm.exact import ThermalPoint, gibbs_state, gibbs_state_of
from annealtherm.model import ChainSpec, build_ferromagnetic_chain, build_frustrated_chain
from annealtherm.schedule import AnnealSchedule, ScheduleProtocol, evaluate

from conftest import PAULI_X

QUBIT = build_ferromagnetic_chain(1, allow_small=True)


def flat_schedule(A, B):
    s = np.linspace(0.0, 1.0, 5)
    return AnnealSchedule(s, np.full(5, A), np.full(5, B))


def random_density(dim, seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


@given(st.floats(1e-3, 50.0), st.floats(5.0, 40.0))
def test_kms(omega, T):
    bath = BathParams(T)
    assert ohmic_rate(-omega, bath) == pytest.approx(math.exp(-bath.beta_h * omega) * ohmic_rate(omega, bath),
                                                     rel=1e-10, abs=1e-300)


def test_rate_zero_limit():
    bath = BathParams()
    assert ohmic_rate(0.0, bath) == pytest.approx(2 * math.pi * 1e-4 / bath.beta_h)
    assert ohmic_rate(1e-9, bath) == pytest.approx(ohmic_rate(0.0, bath), rel=1e-6)


def test_bath_validation():
    for bad in [dict(temperature=0.0), dict(coupling=-1.0), dict(cutoff=0.0)]:
        with pytest.raises(AmeError):
            BathParams(**bad)


chain_cases = st.sampled_from([build_ferromagnetic_chain(3), build_frustrated_chain(3), build_ferromagnetic_chain(4),
                               build_frustrated_chain(4, 1), ChainSpec(3, [-1, -1, 1], [0.3, 0.0, -0.2])])


@given(chain_cases, st.floats(0.0, 3.0), st.floats(0.05, 3.0), st.integers(0, 1000))
def test_generator_structure(spec, A, B, seed):
    bath = BathParams()
    gen = davies_generator(spec, A, B, bath)
    rho = random_density(1 << spec.n, seed)
    out = gen.apply(rho)
    # trace preserving and Hermiticity preserving
    assert abs(np.trace(out)) < 1e-12
    assert np.allclose(out, out.conj().T, atol=1e-12)
    # Gibbs state is a fixed point
    H = gen.vectors @ np.diag(gen.energies) @ gen.vectors.conj().T
    g = gibbs_state_of(H, bath.beta_h)
    assert np.abs(gen.apply(g)).max() <= 1e-12 * max(1.0, np.abs(gen.matrix_eig()).max())


def test_generator_matrix_consistent():
    spec = build_frustrated_chain(3)
    gen = davies_generator(spec, 0.7, 1.2, BathParams())
    rho = random_density(8, 3)
    assert np.allclose((gen.matrix() @ rho.reshape(-1)).reshape(8, 8), gen.apply(rho), atol=1e-12)


def test_evolution_is_positive():
    spec = build_frustrated_chain(3)
    gen = davies_generator(spec, 0.9, 0.9, BathParams(coupling=1e-2))
    P = scipy.linalg.expm(gen.matrix() * 50.0)
    for seed in range(5):
        r = (P @ random_density(8, seed).reshape(-1)).reshape(8, 8)
        assert np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min() > -1e-10


def test_zero_coupling_is_unitary():
    gen = davies_generator(build_ferromagnetic_chain(3), 1.0, 1.0, BathParams(coupling=0.0))
    assert np.count_nonzero(gen.dissipator_eig) == 0


def test_size_cap():
    with pytest.raises(AmeError):
        davies_generator(build_ferromagnetic_chain(6), 1.0, 1.0, BathParams())


def test_single_qubit_relaxes_to_tanh():
    A, bath = 0.4, BathParams()
    gen = davies_generator(QUBIT, A, 0.3, bath)
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    r = (scipy.linalg.expm(gen.matrix() * 1e6) @ rho0.reshape(-1)).reshape(2, 2)
    assert np.real(np.trace(r @ PAULI_X)) == pytest.approx(math.tanh(bath.beta_h * A), abs=1e-8)


def test_rabi_with_two_pi():
    # constant H = -A X: P(|1>) = sin^2(2 pi A t), t in ns
    A, T_us = 0.5, 0.0123
    proto = ScheduleProtocol(np.array([0.0, T_us]), np.array([0.0, 1.0]))
    run = AmeRun(QUBIT, flat_schedule(A, 0.0), proto, None, 1e-8, 1e-12, initial=np.array([1.0, 0.0]))
    out = evolve(run)
    assert out.populations_final[1] == pytest.approx(math.sin(2 * math.pi * A * T_us * 1000) ** 2, abs=1e-8)


def test_closed_pause_rabi():
    A, T_us = 0.25, 0.0031
    proto = ScheduleProtocol(np.array([0.0, 0.001, 0.001 + T_us]), np.array([0.0, 1.0, 1.0]))
    run = AmeRun(QUBIT, flat_schedule(A, 0.0), proto, None, 1e-8, 1e-12, initial=np.array([1.0, 0.0]))
    out = evolve(run)
    assert out.populations_final[1] == pytest.approx(math.sin(2 * math.pi * A * (T_us + 0.001) * 1000) ** 2,
                                                     abs=1e-8)


def test_closed_evolution_keeps_purity(sched):
    proto = ScheduleProtocol(np.array([0.0, 0.05]), np.array([0.3, 1.0]))
    run = AmeRun(build_frustrated_chain(3), sched, proto, None, 1e-6, 1e-9, initial="ground", seed=1)
    out = evolve(run)
    r = out.final_state
    assert np.real(np.trace(r @ r)) == pytest.approx(1.0, abs=1e-8)
    assert out.trace_error < 1e-9


def test_open_run_physical(sched):
    proto = ScheduleProtocol(np.array([0.0, 0.3, 0.8, 0.81]), np.array([0.0, 0.3, 0.3, 1.0]))
    out = evolve(AmeRun(build_frustrated_chain(3), sched, proto))
    assert out.trace_error < 1e-8
    assert out.min_eigenvalue > -1e-8
    assert out.hermiticity_error < 1e-10
    assert out.times[0] == 0.0 and out.times[-1] == pytest.approx(0.81)


def test_pause_converges_to_gibbs(sched):
    spec = build_ferromagnetic_chain(2, allow_small=True)
    # protocols end at s = 1, so read the state off at the end of the pause
    proto = ScheduleProtocol(np.array([0.0, 0.5, 500.5, 500.501]), np.array([0.0, 0.5, 0.5, 1.0]))
    run = AmeRun(spec, sched, proto, record_grid=np.array([500.5]))
    out = evolve(run)
    assert out.pause_converged
    idx = int(np.flatnonzero(out.times == 500.5)[0])
    g = gibbs_state(spec, ThermalPoint.on_schedule(sched, 0.5, 12.0))
    assert out.e_ising[idx] == pytest.approx(np.real(np.diag(g)) @ ChainHamiltonian(spec, sched).e_ising, abs=1e-5)


def test_closed_system_evolve_gibbs_start(sched):
    proto = ScheduleProtocol(np.array([0.0, 0.01]), np.array([0.9, 1.0]))
    out = closed_system_evolve(AmeRun(build_ferromagnetic_chain(3), sched, proto))
    assert out.e_ising_final == pytest.approx(-3.0, abs=1e-3)


def test_run_validation(sched):
    proto = ScheduleProtocol(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    with pytest.raises(AmeError):
        AmeRun(build_ferromagnetic_chain(6), sched, proto)
    with pytest.raises(AmeError):
        AmeRun(build_ferromagnetic_chain(3), sched, proto, rtol=0.1)
    with pytest.raises(AmeError):
        AmeRun(build_ferromagnetic_chain(3), sched, proto, record_grid=np.array([2.0]))
    with pytest.raises(AmeError):
        evolve(AmeRun(build_ferromagnetic_chain(3), sched, proto, initial="bogus"))


def test_magnus_fourth_order(sched):
    ham = ChainHamiltonian(build_frustrated_chain(3), sched)
    ref = magnus4(ham, 0.2, 0.6, 2.0, 4096)
    errs = [np.linalg.norm(magnus4(ham, 0.2, 0.6, 2.0, k) - ref, 2) for k in (64, 128, 256)]
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.25)
    assert errs[1] / errs[2] == pytest.approx(16, rel=0.25)


def test_unitary_propagator_against_ode(sched):
    from scipy.integrate import solve_ivp

    spec = build_frustrated_chain(3)
    ham = ChainHamiltonian(spec, sched)
    T = 5.0

    def rhs(t, y):
        a, b = evaluate(sched, 0.3 + 0.4 * t / T)
        H = a * ham.hx + np.diag(b * ham.e_ising)
        return (-2j * math.pi * H @ y.reshape(8, 8)).reshape(-1)

    sol = solve_ivp(rhs, (0, T), np.eye(8, dtype=complex).reshape(-1), method="DOP853", rtol=1e-12, atol=1e-12)
    U_ref = sol.y[:, -1].reshape(8, 8)
    U = unitary_propagator(spec, sched, 0.3, 0.7, T / 1000.0)
    assert np.linalg.norm(U - U_ref, 2) < 1e-8
    assert np.allclose(U @ U.conj().T, np.eye(8), atol=1e-10)


def test_step_cap_raises(sched):
    ham = ChainHamiltonian(build_frustrated_chain(3), sched)
    with pytest.raises(IntegratorError):
        adaptive_ramp_unitary(ham, 0.0, 1.0, 1000.0, 1e-14, max_steps=4)


def test_trace_distance():
    a = np.diag([1.0, 0.0])
    b = np.diag([0.0, 1.0])
    assert trace_distance(a, b) == pytest.approx(1.0)
    assert trace_distance(a, a) == 0.0
