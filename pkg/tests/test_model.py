import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from annealtherm.model import (ChainSpec, ModelError, all_configs, apply_gauge_config, apply_gauge_spec,
                               build_ferromagnetic_chain, build_frustrated_chain, diagonal_energies,
                               dump_chain, ground_states, index_to_spins, ising_energy, load_chain,
                               random_gauge, spins_to_index, squared_magnetization)

sizes = st.integers(min_value=3, max_value=10)


def test_builders_reject_small_chains():
    with pytest.raises(ModelError):
        build_ferromagnetic_chain(2)
    with pytest.raises(ModelError):
        build_frustrated_chain(5, flipped_edge=5)
    assert build_ferromagnetic_chain(2, allow_small=True).n == 2


def test_spec_validation():
    with pytest.raises(ModelError):
        ChainSpec(3, [-1, -1])
    with pytest.raises(ModelError):
        ChainSpec(3, [-1, 0.5, -1])
    with pytest.raises(ModelError):
        ChainSpec(3, [-1, -1, -1], [0, np.inf, 0])


def test_spec_is_immutable():
    spec = build_ferromagnetic_chain(4)
    with pytest.raises(ValueError):
        spec.couplings[0] = 1.0


def test_ferromagnet_ground_state():
    e0, idx = ground_states(build_ferromagnetic_chain(6))
    assert e0 == -6.0
    assert sorted(idx.tolist()) == [0, 63]


@given(sizes)
def test_index_roundtrip(n):
    idx = np.arange(1 << n)
    assert np.array_equal(spins_to_index(index_to_spins(idx, n)), idx)


def test_msb_convention():
    # site 0 is the most significant bit, bit value 0 is spin +1
    assert index_to_spins(0b100, 3).tolist() == [-1, 1, 1]
    assert index_to_spins(0b001, 3).tolist() == [1, 1, -1]


@given(sizes, st.integers(0, 2**31 - 1))
def test_diagonal_energies_match_loop(n, seed):
    rng = np.random.default_rng(seed)
    spec = ChainSpec(n, rng.choice([-1.0, 1.0], n), rng.normal(size=n))
    configs = all_configs(n)
    by_hand = np.array([sum(spec.couplings[i] * c[i] * c[(i + 1) % n] for i in range(n))
                        + c @ spec.fields for c in configs])
    assert np.allclose(diagonal_energies(spec), by_hand, atol=1e-12)


@given(sizes, st.integers(0, 2**31 - 1))
def test_gauge_preserves_energy(n, seed):
    rng = np.random.default_rng(seed)
    spec = ChainSpec(n, rng.choice([-1.0, 1.0], n), rng.normal(size=n))
    g = random_gauge(n, seed)
    configs = all_configs(n)
    gauged = apply_gauge_spec(spec, g)
    assert np.allclose(ising_energy(gauged, apply_gauge_config(configs, g)), ising_energy(spec, configs))
    assert np.array_equal(apply_gauge_config(apply_gauge_config(configs, g), g), configs)


@given(sizes, st.integers(0, 100))
def test_frustrated_ground_space(n, edge):
    spec = build_frustrated_chain(n, edge % n)
    e0, idx = ground_states(spec)
    assert e0 == -n + 2
    assert idx.size == 2 * n


def test_squared_magnetization_normalized():
    assert squared_magnetization([1, 1, 1, 1]) == 1.0
    assert squared_magnetization([1, -1, 1, -1]) == 0.0
    assert np.allclose(squared_magnetization(all_configs(3)).max(), 1.0)


def test_chain_text_roundtrip():
    spec = ChainSpec(4, [-1, 1, -1, -1], [0.0, 0.25, 0.0, -1.5])
    buf = io.StringIO()
    dump_chain(spec, buf)
    assert load_chain(buf.getvalue()) == spec


@pytest.mark.parametrize("text", ["", "J 0 -1\n", "n 3\nJ 0 -1\nJ 1 -1\n", "n 3\nJ 0 -1\nJ 1 -1\nJ 2 2\n",
                                  "n 3\nQ 1\n"])
def test_chain_text_errors(text):
    with pytest.raises(ModelError):
        load_chain(text)
