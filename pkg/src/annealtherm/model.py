"""Periodic Ising chains, classical spin configurations and gauge relabelings.

Conventions
-----------
The Ising part of the Hamiltonian is

    H_IM = sum_e J_e s_e s_{e+1} + sum_i h_i s_i,

with edge ``e`` joining sites ``e`` and ``(e + 1) % n``.  A ferromagnetic
bond has ``J_e = -1`` so the fully aligned states have energy ``-n``.

Spins are stored as ``int8`` arrays of +/-1.  Computational basis index ``x``
maps to spins with site 0 as the most significant bit and bit value 0 meaning
spin up (+1).
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

MIN_SITES = 3


class ModelError(ValueError):
    """Invalid chain, configuration or gauge."""


def _as_spins(values, name="spins") -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ModelError(f"{name} must be one-dimensional")
    if not np.all((arr == 1) | (arr == -1)):
        raise ModelError(f"{name} entries must be +1 or -1")
    return arr.astype(np.int8)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ChainSpec:
    """A periodic Ising chain.

    ``n`` may be 1 or 2 for analysis helpers (single qubit, double bond), but
    the public builders require ``n >= 3``.
    """

    n: int
    couplings: np.ndarray
    fields: np.ndarray = field(default=None)

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise ModelError(f"chain needs at least one site, got n={n}")
        couplings = np.asarray(self.couplings, dtype=float)
        fields = np.zeros(n) if self.fields is None else np.asarray(self.fields, dtype=float)
        if couplings.shape != (n,):
            raise ModelError(f"expected {n} couplings, got {couplings.size}")
        if fields.shape != (n,):
            raise ModelError(f"expected {n} fields, got {fields.size}")
        if not np.all(np.abs(couplings) == 1.0):
            raise ModelError("couplings must be +1 or -1")
        if not np.all(np.isfinite(fields)):
            raise ModelError("fields must be finite")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "couplings", _frozen(couplings))
        object.__setattr__(self, "fields", _frozen(fields))

    def __eq__(self, other):
        if not isinstance(other, ChainSpec):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.couplings, other.couplings)
            and np.array_equal(self.fields, other.fields)
        )

    def __hash__(self):
        return hash((self.n, self.couplings.tobytes(), self.fields.tobytes()))

    @property
    def has_fields(self) -> bool:
        return bool(np.any(self.fields != 0.0))

    @property
    def is_ferromagnetic(self) -> bool:
        return bool(np.all(self.couplings == -1.0))

    @property
    def is_frustrated(self) -> bool:
        return int(np.sum(self.couplings == 1.0)) == 1

    @property
    def is_uniform_ferromagnet(self) -> bool:
        """All bonds -1 and no longitudinal fields."""
        return self.is_ferromagnetic and not self.has_fields

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        left = np.arange(self.n)
        return left, (left + 1) % self.n


def build_ferromagnetic_chain(n: int, *, allow_small: bool = False) -> ChainSpec:
    """Uniform ferromagnetic ring, all ``J_e = -1`` and zero fields."""
    _check_size(n, allow_small)
    return ChainSpec(n, -np.ones(n))


def build_frustrated_chain(n: int, flipped_edge: int = 0, *, allow_small: bool = False) -> ChainSpec:
    """Ferromagnetic ring with one antiferromagnetic (+1) bond."""
    _check_size(n, allow_small)
    if not 0 <= flipped_edge < n:
        raise ModelError(f"flipped_edge {flipped_edge} out of range for n={n}")
    couplings = -np.ones(n)
    couplings[flipped_edge] = 1.0
    return ChainSpec(n, couplings)


def _check_size(n, allow_small):
    if int(n) != n:
        raise ModelError(f"site count must be an integer, got {n!r}")
    floor = 1 if allow_small else MIN_SITES
    if n < floor:
        raise ModelError(f"invalid chain size n={n}; need n >= {floor}")


def _check_length(spec: ChainSpec, arr: np.ndarray, what: str):
    if arr.shape[-1] != spec.n:
        raise ModelError(f"{what} has length {arr.shape[-1]}, chain has n={spec.n}")


def ising_energy(spec: ChainSpec, config) -> float:
    """Classical energy of one configuration (or a batch along axis 0)."""
    s = np.asarray(config)
    _check_length(spec, s, "config")
    s = s.astype(float)
    left, right = spec.edges()
    bond = s[..., left] * s[..., right]
    e = bond @ spec.couplings + s @ spec.fields
    return float(e) if np.ndim(e) == 0 else e


def squared_magnetization(config) -> float:
    """Per-site normalized ``((sum_i s_i) / n) ** 2``."""
    s = np.asarray(config, dtype=float)
    m = s.sum(axis=-1) / s.shape[-1]
    m2 = m * m
    return float(m2) if np.ndim(m2) == 0 else m2


def apply_gauge_spec(spec: ChainSpec, gauge) -> ChainSpec:
    a = _as_spins(gauge, "gauge").astype(float)
    _check_length(spec, a, "gauge")
    left, right = spec.edges()
    return ChainSpec(spec.n, a[left] * a[right] * spec.couplings, a * spec.fields)


def apply_gauge_config(config, gauge) -> np.ndarray:
    s = np.asarray(config)
    a = _as_spins(gauge, "gauge")
    if s.shape[-1] != a.size:
        raise ModelError(f"config length {s.shape[-1]} does not match gauge length {a.size}")
    return (s * a).astype(np.int8)


def random_gauge(n: int, seed) -> np.ndarray:
    if n < 1:
        raise ModelError("gauge needs n >= 1")
    rng = np.random.default_rng(seed)
    return (2 * rng.integers(0, 2, size=n) - 1).astype(np.int8)


def index_to_spins(index, n: int) -> np.ndarray:
    """Spins for basis index/indices; site 0 is the most significant bit, bit 0 -> +1."""
    idx = np.asarray(index, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    bits = (idx[..., None] >> shifts) & 1
    return (1 - 2 * bits).astype(np.int8)


def spins_to_index(config) -> np.ndarray | int:
    s = np.asarray(config)
    n = s.shape[-1]
    bits = (1 - s.astype(np.int64)) // 2
    weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    out = bits @ weights
    return int(out) if np.ndim(out) == 0 else out


def all_configs(n: int) -> np.ndarray:
    """Every configuration of ``n`` spins, ordered by basis index."""
    return index_to_spins(np.arange(1 << n), n)


def diagonal_energies(spec: ChainSpec) -> np.ndarray:
    """``H_IM`` for every basis state, ordered by basis index."""
    from .kernels import enumerate_energies

    return enumerate_energies(spec.n, spec.couplings, spec.fields)


def ground_states(spec: ChainSpec, atol: float = 1e-9) -> tuple[float, np.ndarray]:
    """Brute-force minimum energy and the basis indices attaining it."""
    energies = diagonal_energies(spec)
    e0 = energies.min()
    return float(e0), np.flatnonzero(energies <= e0 + atol)


# -- text format -------------------------------------------------------------

def dump_chain(spec: ChainSpec, stream: TextIO | None = None) -> str | None:
    """Write ``n``/``J``/``h`` lines.  ``h`` lines are emitted only for nonzero fields."""
    lines = [f"n {spec.n}"]
    lines += [f"J {e} {int(j):+d}" for e, j in enumerate(spec.couplings)]
    lines += [f"h {i} {float(h)!r}" for i, h in enumerate(spec.fields) if h != 0.0]
    text = "\n".join(lines) + "\n"
    if stream is None:
        return text
    stream.write(text)
    return None


def load_chain(source: TextIO | str | Iterable[str]) -> ChainSpec:
    if isinstance(source, str):
        source = io.StringIO(source)
    n = None
    couplings: dict[int, float] = {}
    fields: dict[int, float] = {}
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "n" and len(parts) == 2:
                if n is not None:
                    raise ModelError("duplicate n line")
                n = int(parts[1])
            elif parts[0] == "J" and len(parts) == 3:
                if n is None:
                    raise ModelError("J line before n line")
                couplings[int(parts[1])] = float(int(parts[2]))
            elif parts[0] == "h" and len(parts) == 3:
                fields[int(parts[1])] = float(parts[2])
            else:
                raise ModelError(f"unrecognized line {line!r}")
        except ValueError as exc:
            raise ModelError(f"line {lineno}: {exc}") from exc
    if n is None:
        raise ModelError("missing n line")
    if sorted(couplings) != list(range(n)):
        raise ModelError(f"expected J lines for edges 0..{n - 1}")
    if any(not 0 <= i < n for i in fields):
        raise ModelError("h index out of range")
    h = np.zeros(n)
    for i, v in fields.items():
        h[i] = v
    return ChainSpec(n, [couplings[e] for e in range(n)], h)
