"""Shared fixtures and brute-force oracles for the test suite.

The oracles here deliberately use plain python loops and dense matrices so
they stay independent of the packed layouts under test.
"""

import numpy as np
import pytest

from ctqw.hilbert import JointSpace, build_lattice, joint_index, joint_positions


def brute_neighbor_sets(space):
    """All joint states one single-particle hop away, by direct enumeration.

    Returns a list of sorted lists, one per joint row.  Independent of the
    packed topology table: walks coordinate tuples with python loops.
    """
    lattice = space.lattice
    dims = lattice.dims
    periodic = lattice.boundary == "periodic"
    out = []
    for alpha in range(space.dim):
        digits = joint_positions(alpha, space)
        neighbors = []
        for p in range(space.m):
            site = int(digits[p])
            coords = []
            rem = site
            for extent in reversed(dims):
                coords.append(rem % extent)
                rem //= extent
            coords = coords[::-1]
            for axis in range(len(dims)):
                for dist in range(1, lattice.k_half[axis] + 1):
                    for sign in (+1, -1):
                        c2 = list(coords)
                        c2[axis] += sign * dist
                        if periodic:
                            c2[axis] %= dims[axis]
                        elif not (0 <= c2[axis] < dims[axis]):
                            continue
                        target = 0
                        for extent, c in zip(dims, c2):
                            target = target * extent + c
                        moved = list(digits)
                        moved[p] = target
                        neighbors.append(joint_index(moved, space))
        out.append(sorted(neighbors))
    return out


def brute_dense_hamiltonian(space, coupling, link_values=None, site_values=None):
    """Dense Hermitian matrix built entry by entry from first principles.

    ``coupling`` supplies (onsite_energy, tunneling_per_direction,
    interaction); optional per-link and per-site noise arrays follow the
    ``link = site * K + slot`` keying, slots enumerated axis-major with
    distance 1..k_half within each axis.  Pure python loops throughout.
    """
    lattice = space.lattice
    dims = lattice.dims
    periodic = lattice.boundary == "periodic"
    onsite, tunneling, interaction = coupling
    tunneling = np.broadcast_to(np.asarray(tunneling, dtype=float), (lattice.q,))
    slots = [
        (axis, dist)
        for axis in range(lattice.q)
        for dist in range(1, lattice.k_half[axis] + 1)
    ]
    h = np.zeros((space.dim, space.dim), dtype=np.complex128)
    for alpha in range(space.dim):
        digits = joint_positions(alpha, space)
        diag = space.m * onsite
        for p in range(space.m):
            if site_values is not None:
                diag += site_values[digits[p]]
            for r in range(p + 1, space.m):
                if digits[p] == digits[r]:
                    diag += interaction
        h[alpha, alpha] = diag
        for p in range(space.m):
            site = int(digits[p])
            coords = []
            rem = site
            for extent in reversed(dims):
                coords.append(rem % extent)
                rem //= extent
            coords = coords[::-1]
            for s, (axis, dist) in enumerate(slots):
                c2 = list(coords)
                c2[axis] += dist
                if periodic:
                    c2[axis] %= dims[axis]
                elif c2[axis] >= dims[axis]:
                    continue
                target = 0
                for extent, c in zip(dims, c2):
                    target = target * extent + c
                moved = list(digits)
                moved[p] = target
                beta = joint_index(moved, space)
                amp = tunneling[axis]
                if link_values is not None:
                    amp = amp + link_values[site * len(slots) + s]
                h[alpha, beta] += amp
                h[beta, alpha] += np.conj(amp)
    return h


@pytest.fixture
def ring7_pair():
    """Two particles on a 7-site ring, nearest-neighbor hops."""
    return JointSpace(lattice=build_lattice([7]), m=2)


@pytest.fixture
def chain8_single():
    """One particle on an open 8-site chain with hops up to distance 3."""
    return JointSpace(lattice=build_lattice([8], k_half=[3], boundary="open"), m=1)


@pytest.fixture
def grid34_pair():
    """Two particles on a periodic 3x4 grid."""
    return JointSpace(lattice=build_lattice([3, 4], k_half=[1, 1]), m=2)
