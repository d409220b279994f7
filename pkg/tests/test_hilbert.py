"""Geometry, joint indexing, and the shared topology table."""

import numpy as np
import pytest

from ctqw.errors import CapacityError, ConfigurationError
from ctqw.hilbert import (
    JointSpace,
    build_lattice,
    build_topology,
    joint_index,
    joint_positions,
    site_coordinates,
)

from conftest import brute_neighbor_sets

SMALL_SPACES = [
    ("ring7_m2", dict(dims=[7]), 2),
    ("chain8_k3", dict(dims=[8], k_half=[3], boundary="open"), 1),
    ("grid34_m2", dict(dims=[3, 4]), 2),
    ("grid43_open", dict(dims=[4, 3], boundary="open"), 1),
    ("ring5_m3", dict(dims=[5]), 3),
]


def small_space(entry):
    _, kwargs, m = entry
    return JointSpace(lattice=build_lattice(**kwargs), m=m)


def test_lattice_validation():
    with pytest.raises(ConfigurationError):
        build_lattice([])
    with pytest.raises(ConfigurationError):
        build_lattice([1])
    with pytest.raises(ConfigurationError):
        build_lattice([7], k_half=[0])
    with pytest.raises(ConfigurationError):
        build_lattice([7], k_half=[1, 1])
    with pytest.raises(ConfigurationError):
        build_lattice([6], k_half=[3])  # 2k must stay below the extent
    with pytest.raises(ConfigurationError):
        build_lattice([7], boundary="twisted")
    lat = build_lattice([7, 9], k_half=[1, 2])
    assert lat.q == 2
    assert lat.n_sites == 63
    assert lat.neighbors_per_site == 6


def test_joint_index_row_major():
    space = JointSpace(lattice=build_lattice([7]), m=2)
    assert joint_index([2, 3], space) == 2 * 7 + 3
    assert joint_index([0, 0], space) == 0
    assert joint_index([6, 6], space) == space.dim - 1
    with pytest.raises(ConfigurationError):
        joint_index([7, 0], space)
    with pytest.raises(ConfigurationError):
        joint_index([1, 2, 3], space)


@pytest.mark.parametrize("entry", SMALL_SPACES, ids=[e[0] for e in SMALL_SPACES])
def test_joint_index_round_trip(entry):
    space = small_space(entry)
    rng = np.random.default_rng(7)
    pos = rng.integers(0, space.lattice.n_sites, size=(64, space.m))
    alpha = joint_index(pos, space)
    assert alpha.shape == (64,)
    np.testing.assert_array_equal(joint_positions(alpha, space), pos)
    full = np.arange(space.dim)
    np.testing.assert_array_equal(joint_index(joint_positions(full, space), space), full)


def test_site_coordinates_row_major():
    lat = build_lattice([4, 5], k_half=[1, 2])
    coords = site_coordinates(lat)
    assert coords.shape == (20, 2)
    np.testing.assert_array_equal(coords[7], [1, 2])  # site 7 = row 1, col 2
    np.testing.assert_array_equal(coords[:5, 0], 0)


def test_joint_dimension_overflow():
    with pytest.raises(CapacityError):
        JointSpace(lattice=build_lattice([1000]), m=8)


@pytest.mark.parametrize("entry", SMALL_SPACES, ids=[e[0] for e in SMALL_SPACES])
def test_topology_matches_brute_force(entry):
    space = small_space(entry)
    topo = build_topology(space)
    k = space.lattice.neighbors_per_site
    assert topo.indices.shape == (space.dim, space.m * k + 1)
    assert topo.half == space.m * k // 2
    np.testing.assert_array_equal(topo.indices[:, 0], np.arange(space.dim))

    expected = brute_neighbor_sets(space)
    for alpha in range(space.dim):
        row = topo.indices[alpha, 1:]
        got = sorted(int(b) for b in row if b >= 0)
        assert got == expected[alpha], f"row {alpha} disagrees with brute force"


@pytest.mark.parametrize("entry", SMALL_SPACES, ids=[e[0] for e in SMALL_SPACES])
def test_topology_mirror_slots(entry):
    """A negative move's target holds the matching positive move back.

    This is the pairing that lets the stored half of the values recover
    the other half by conjugation: entry (alpha, H+j) equals the conjugate
    of the value stored at (beta, j) for beta = indices[alpha, H+j].
    """
    space = small_space(entry)
    topo = build_topology(space)
    h = topo.half
    for j in range(1, h + 1):
        beta = topo.indices[:, h + j]
        ok = beta >= 0
        np.testing.assert_array_equal(
            topo.indices[beta[ok], j], np.nonzero(ok)[0]
        )
        beta = topo.indices[:, j]
        ok = beta >= 0
        np.testing.assert_array_equal(
            topo.indices[beta[ok], h + j], np.nonzero(ok)[0]
        )


def test_valid_counts_periodic(ring7_pair):
    topo = build_topology(ring7_pair)
    assert topo.all_valid
    np.testing.assert_array_equal(topo.valid_count, 4)  # m*k = 2*2


def test_valid_counts_open(chain8_single):
    topo = build_topology(chain8_single)
    assert not topo.all_valid
    # Site 0 keeps only the three forward hops; site 3 has all six.
    assert topo.valid_count[0] == 3
    assert topo.valid_count[1] == 4
    assert topo.valid_count[3] == 6
    assert topo.valid_count[7] == 3


def test_coincidence_counts(ring7_pair):
    topo = build_topology(ring7_pair)
    for x in range(7):
        assert topo.coincidence[joint_index([x, x], ring7_pair)] == 1
    assert topo.coincidence[joint_index([1, 4], ring7_pair)] == 0
    # Three particles stacked on one site -> three coinciding pairs.
    space3 = JointSpace(lattice=build_lattice([5]), m=3)
    topo3 = build_topology(space3)
    assert topo3.coincidence[joint_index([2, 2, 2], space3)] == 3
    assert topo3.coincidence[joint_index([2, 2, 4], space3)] == 1


def test_link_fanout_pair_ring():
    """Each lattice link is shared by m * N**(m-1) stored joint entries."""
    space = JointSpace(lattice=build_lattice([31]), m=2)
    topo = build_topology(space)
    n = 31
    assert topo.n_links == n  # one positive slot per site on a k=2 ring
    for link in range(topo.n_links):
        rows, cols = topo.rows_of_link(link)
        assert rows.shape == (2 * n,)
        # Every reported entry really rides this link.
        np.testing.assert_array_equal(topo.link_of_slot[rows, cols - 1], link)
    # Union over links covers each stored off-diagonal slot exactly once.
    assert topo.link_indptr[-1] == space.dim * topo.half


def test_site_rows_cover_occupancy(ring7_pair):
    topo = build_topology(ring7_pair)
    n = 7
    for site in range(n):
        rows = topo.rows_of_site(site)
        assert rows.shape == (2 * n,)  # m * N**(m-1), double-count at (x, x)
        unique = np.unique(rows)
        assert unique.shape == (2 * n - 1,)
        sites = topo.particle_sites[unique]
        assert np.all((sites == site).any(axis=1))


def test_open_boundary_links_absent(chain8_single):
    topo = build_topology(chain8_single)
    # Hop slots that would leave the chain never appear in the link maps.
    for link in range(topo.n_links):
        rows, cols = topo.rows_of_link(link)
        site, slot = divmod(link, 3)
        if site + slot + 1 >= 8:
            assert rows.size == 0
        else:
            assert rows.size == 1  # m=1: a single row rides each link
