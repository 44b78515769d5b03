"""Hot inner loops, each with a compiled and a fallback implementation.

The public names (``wolff_clusters``, ``slice_observables``,
``enumerate_energies``) point at the numba versions unless the fallback is
selected via ``ANNEALTHERM_DISABLE_NUMBA``.  Both variants are importable
under ``*_numba`` / ``*_numpy`` for benchmarking and cross-checks.

The Wolff kernel draws all randomness from a caller-supplied buffer of
uniforms, so the compiled and interpreted paths consume the same stream and
produce bit-identical lattices.
"""
import numpy as np

from ._accel import USE_NUMBA, njit


def _wolff_clusters_py(lattice, bond_sign, fields_action, p_space, p_tau,
                       uniforms, target, in_cluster, stack, status):
    """Grow and flip Wolff clusters on an (M, n) worldline lattice.

    bond_sign[e] is the sign of the effective coupling on spatial edge e
    (+1 favours alignment).  fields_action[i] is the per-slice action of a
    longitudinal field on site i; nonzero values make each cluster flip a
    Metropolis proposal.

    The kernel is resumable: when ``uniforms`` runs dry mid-cluster it saves
    its position in ``status`` = [active, size, head, direction, clusters,
    flipped] and returns; the next call with a fresh buffer continues exactly
    where it stopped.  The sweep ends after ``target`` completed clusters (a
    count fixed in advance; stopping on a state-dependent criterion such as
    spins flipped would bias measurements).  Returns uniforms used.
    """
    M, n = lattice.shape
    N = M * n
    has_field = False
    for i in range(n):
        if fields_action[i] != 0.0:
            has_field = True
    flat = lattice.reshape(N)
    limit = uniforms.shape[0]
    pos = 0
    active = status[0]
    size = status[1]
    head = status[2]
    d0 = status[3]
    clusters = status[4]
    flipped = status[5]
    while True:
        if active == 0:
            if clusters >= target or pos >= limit:
                break
            seed = int(uniforms[pos] * N)
            pos += 1
            if seed >= N:
                seed = N - 1
            in_cluster[seed] = True
            stack[0] = seed
            size = 1
            head = 0
            d0 = 0
            active = 1
        starved = False
        # stack[0:size] holds the members; head walks it breadth-first
        while head < size:
            site = stack[head]
            tau = site // n
            i = site - tau * n
            s = flat[site]
            d = d0
            while d < 4:
                if d == 0:
                    e = i
                    j = i + 1
                    if j == n:
                        j = 0
                    nb = tau * n + j
                    sat = bond_sign[e] * s * flat[nb] > 0
                    p = p_space
                elif d == 1:
                    e = i - 1
                    if e < 0:
                        e = n - 1
                    nb = tau * n + e
                    sat = bond_sign[e] * s * flat[nb] > 0
                    p = p_space
                elif d == 2:
                    t2 = tau + 1
                    if t2 == M:
                        t2 = 0
                    nb = t2 * n + i
                    sat = s * flat[nb] > 0
                    p = p_tau
                else:
                    t2 = tau - 1
                    if t2 < 0:
                        t2 = M - 1
                    nb = t2 * n + i
                    sat = s * flat[nb] > 0
                    p = p_tau
                if sat and not in_cluster[nb]:
                    if pos >= limit:
                        starved = True
                        break
                    if uniforms[pos] < p:
                        in_cluster[nb] = True
                        stack[size] = nb
                        size += 1
                    pos += 1
                d += 1
            if starved:
                d0 = d
                break
            d0 = 0
            head += 1
        if starved:
            break
        accept = True
        if has_field:
            if pos >= limit:
                break
            d_action = 0.0
            for k in range(size):
                site = stack[k]
                d_action += 2.0 * fields_action[site % n] * flat[site]
            u = uniforms[pos]
            pos += 1
            if d_action > 0.0 and u >= np.exp(-d_action):
                accept = False
        for k in range(size):
            site = stack[k]
            in_cluster[site] = False
            if accept:
                flat[site] = -flat[site]
        if accept:
            flipped += size
        clusters += 1
        active = 0
        size = 0
        head = 0
        d0 = 0
    status[0] = active
    status[1] = size
    status[2] = head
    status[3] = d0
    status[4] = clusters
    status[5] = flipped
    return pos


def _slice_observables_py(lattice, couplings, fields):
    """Per-slice Ising energy and total magnetization (pure numpy)."""
    s = lattice.astype(np.float64)
    bonds = s * np.roll(s, -1, axis=1)
    energy = bonds @ couplings + s @ fields
    mag = s.sum(axis=1)
    return energy, mag


def _slice_observables_nb(lattice, couplings, fields):
    M, n = lattice.shape
    energy = np.zeros(M)
    mag = np.zeros(M)
    for tau in range(M):
        e = 0.0
        m = 0.0
        for i in range(n):
            j = i + 1
            if j == n:
                j = 0
            si = float(lattice[tau, i])
            e += couplings[i] * si * lattice[tau, j] + fields[i] * si
            m += si
        energy[tau] = e
        mag[tau] = m
    return energy, mag


_CHUNK = 1 << 16


def _enumerate_energies_py(n, couplings, fields):
    """H_IM for every basis state; site 0 is the most significant bit."""
    dim = 1 << n
    out = np.empty(dim)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    right = (np.arange(n) + 1) % n
    for start in range(0, dim, _CHUNK):
        idx = np.arange(start, min(dim, start + _CHUNK), dtype=np.int64)
        s = (1 - 2 * ((idx[:, None] >> shifts) & 1)).astype(np.float64)
        out[start:start + idx.size] = (s * s[:, right]) @ couplings + s @ fields
    return out


def _enumerate_energies_nb(n, couplings, fields):
    dim = 1 << n
    out = np.empty(dim)
    for x in range(dim):
        e = 0.0
        for i in range(n):
            si = 1.0 - 2.0 * ((x >> (n - 1 - i)) & 1)
            j = i + 1
            if j == n:
                j = 0
            sj = 1.0 - 2.0 * ((x >> (n - 1 - j)) & 1)
            e += couplings[i] * si * sj + fields[i] * si
        out[x] = e
    return out


wolff_clusters_numpy = _wolff_clusters_py
slice_observables_numpy = _slice_observables_py
enumerate_energies_numpy = _enumerate_energies_py

wolff_clusters_numba = njit(_wolff_clusters_py)
slice_observables_numba = njit(_slice_observables_nb)
enumerate_energies_numba = njit(_enumerate_energies_nb)

if USE_NUMBA:
    wolff_clusters = wolff_clusters_numba
    slice_observables = slice_observables_numba
    enumerate_energies = enumerate_energies_numba
else:
    wolff_clusters = wolff_clusters_numpy
    slice_observables = slice_observables_numpy
    enumerate_energies = enumerate_energies_numpy
