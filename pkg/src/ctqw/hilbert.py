"""Lattice geometry and the reduced neighbor table for joint particle states.

A regular lattice with ``q`` directions and extents ``dims`` hosts ``m``
distinguishable particles.  Joint basis states are m-tuples of site indices
flattened row-major, so the joint dimension is ``N**m`` for ``N`` sites.

Because every site sees the same neighborhood pattern, adjacency is stored
once as a dense table of joint indices shared by all stochastic
realizations.  Row ``alpha`` of the table lists, in fixed slot order, the
joint states reachable from ``alpha`` by moving one particle one allowed
hop.  Slots come in matched halves:

* column ``0`` is ``alpha`` itself (diagonal),
* columns ``1 .. H`` move one particle by ``+dist`` along one direction,
* columns ``H+1 .. 2H`` are the mirrored ``-dist`` moves,

where ``H = m * sum(k_half)``.  Hop amplitudes are Hermitian, so values are
only ever stored for the diagonal plus the positive half; the negative half
is reconstructed by conjugation.  The key property making that cheap is
that the matched positive partner of the entry ``(alpha, H+j)`` lives at
the *same* slot ``j`` of the neighbor row: if ``alpha -> beta`` is a
``-dist`` move of particle ``p``, then ``beta -> alpha`` is the ``+dist``
move of ``p`` stored at ``(beta, j)``.

Open boundaries leave some slots without a target; those hold ``-1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ConfigurationError

BOUNDARY_PERIODIC = "periodic"
BOUNDARY_OPEN = "open"

# Hard ceiling for the flattened joint dimension: indices are int64 and the
# table keeps 2H+1 of them per row, so stay well inside the index type.
MAX_JOINT_DIM = 2**62


@dataclass(frozen=True)
class LatticeTopology:
    """Single-particle lattice: directions, extents, hop ranges, boundary.

    ``k_half[i]`` is the number of hop distances along direction ``i``
    (1, 2, ..., k_half[i]), i.e. half the neighbors contributed by that
    direction.  The total neighbors per site is ``k = 2 * sum(k_half)``.
    """

    dims: tuple[int, ...]
    k_half: tuple[int, ...]
    boundary: str = BOUNDARY_PERIODIC

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "k_half", tuple(int(k) for k in self.k_half))
        if len(self.dims) == 0:
            raise ConfigurationError("lattice needs at least one direction")
        if len(self.k_half) != len(self.dims):
            raise ConfigurationError(
                f"k_half has {len(self.k_half)} entries for {len(self.dims)} directions"
            )
        for i, n in enumerate(self.dims):
            if n < 2:
                raise ConfigurationError(f"dims[{i}] = {n}; each extent must be >= 2")
        for i, k in enumerate(self.k_half):
            if k < 1:
                raise ConfigurationError(f"k_half[{i}] = {k}; hop range must be >= 1")
            if 2 * k >= self.dims[i]:
                raise ConfigurationError(
                    f"k_half[{i}] = {k} too large for extent {self.dims[i]}; "
                    f"need 2*k_half < extent so hop targets stay distinct"
                )
        if self.boundary not in (BOUNDARY_PERIODIC, BOUNDARY_OPEN):
            raise ConfigurationError(
                f"boundary {self.boundary!r} not recognized; "
                f"use {BOUNDARY_PERIODIC!r} or {BOUNDARY_OPEN!r}"
            )

    @property
    def q(self) -> int:
        return len(self.dims)

    @property
    def n_sites(self) -> int:
        return math.prod(self.dims)

    @property
    def moves_half(self) -> int:
        """Positive moves per site, K = sum(k_half)."""
        return sum(self.k_half)

    @property
    def neighbors_per_site(self) -> int:
        """Full coordination number k = 2K."""
        return 2 * self.moves_half


def build_lattice(dims, k_half=None, boundary=BOUNDARY_PERIODIC) -> LatticeTopology:
    """Validate and freeze a lattice description.

    ``k_half`` defaults to nearest-neighbor hops (1 per direction).
    """
    dims = tuple(dims)
    if k_half is None:
        k_half = (1,) * len(dims)
    return LatticeTopology(dims=dims, k_half=tuple(k_half), boundary=boundary)


@dataclass(frozen=True)
class JointSpace:
    """m particles on a lattice; joint states flattened row-major."""

    lattice: LatticeTopology
    m: int

    def __post_init__(self):
        object.__setattr__(self, "m", int(self.m))
        if self.m < 1:
            raise ConfigurationError(f"m = {self.m}; need at least one particle")
        if self.dim > MAX_JOINT_DIM:
            raise CapacityError(
                f"joint dimension {self.lattice.n_sites}**{self.m} overflows "
                f"the 64-bit index space"
            )

    @property
    def dim(self) -> int:
        return self.lattice.n_sites**self.m

    @property
    def moves_half(self) -> int:
        """Positive joint moves per row, H = m * K."""
        return self.m * self.lattice.moves_half


def joint_index(positions, space: JointSpace):
    """Flatten particle site indices to a joint basis index.

    ``positions`` is an m-sequence of site indices, or an array whose last
    axis has length m; the mixed-radix flattening is row-major (particle 0
    is the most significant digit).
    """
    pos = np.asarray(positions, dtype=np.int64)
    m = space.m
    n = space.lattice.n_sites
    if pos.shape[-1:] != (m,):
        raise ConfigurationError(
            f"expected {m} particle positions, got shape {pos.shape}"
        )
    if np.any(pos < 0) or np.any(pos >= n):
        raise ConfigurationError(f"site index out of range [0, {n})")
    weights = n ** np.arange(m - 1, -1, -1, dtype=np.int64)
    out = pos @ weights
    return int(out) if out.ndim == 0 else out


def joint_positions(alpha, space: JointSpace):
    """Inverse of :func:`joint_index`: joint index back to site indices."""
    a = np.asarray(alpha, dtype=np.int64)
    n = space.lattice.n_sites
    if np.any(a < 0) or np.any(a >= space.dim):
        raise ConfigurationError(f"joint index out of range [0, {space.dim})")
    digits = np.empty(a.shape + (space.m,), dtype=np.int64)
    rem = a.copy()
    for p in range(space.m - 1, -1, -1):
        digits[..., p] = rem % n
        rem //= n
    return digits


def site_coordinates(lattice: LatticeTopology, sites=None) -> np.ndarray:
    """Per-site coordinate tuples, row-major digits of the site index."""
    if sites is None:
        sites = np.arange(lattice.n_sites, dtype=np.int64)
    sites = np.asarray(sites, dtype=np.int64)
    coords = np.empty(sites.shape + (lattice.q,), dtype=np.int64)
    rem = sites.copy()
    for i in range(lattice.q - 1, -1, -1):
        coords[..., i] = rem % lattice.dims[i]
        rem //= lattice.dims[i]
    return coords


def _site_move_tables(lattice: LatticeTopology):
    """Targets of every signed single-particle move, -1 where off-lattice.

    Returns ``(pos, neg, directions, distances)`` with ``pos``/``neg`` of
    shape (N, K): slot order runs direction-major, distance 1..k_half
    within each direction.
    """
    n = lattice.n_sites
    q = lattice.q
    coords = site_coordinates(lattice)
    strides = np.empty(q, dtype=np.int64)
    acc = 1
    for i in range(q - 1, -1, -1):
        strides[i] = acc
        acc *= lattice.dims[i]

    slots = [(i, dist) for i in range(q) for dist in range(1, lattice.k_half[i] + 1)]
    k_pos = len(slots)
    pos = np.empty((n, k_pos), dtype=np.int64)
    neg = np.empty((n, k_pos), dtype=np.int64)
    base = np.arange(n, dtype=np.int64)
    periodic = lattice.boundary == BOUNDARY_PERIODIC
    for s, (i, dist) in enumerate(slots):
        c = coords[:, i]
        extent = lattice.dims[i]
        if periodic:
            pos[:, s] = base + ((c + dist) % extent - c) * strides[i]
            neg[:, s] = base + ((c - dist) % extent - c) * strides[i]
        else:
            ok = c + dist < extent
            pos[:, s] = np.where(ok, base + dist * strides[i], -1)
            ok = c - dist >= 0
            neg[:, s] = np.where(ok, base - dist * strides[i], -1)
    directions = np.array([i for i, _ in slots], dtype=np.int64)
    distances = np.array([dist for _, dist in slots], dtype=np.int64)
    return pos, neg, directions, distances


@dataclass
class TopologyMatrix:
    """Shared adjacency table plus the lookup maps built alongside it.

    ``indices`` has one row per joint state and ``2*half + 1`` columns in
    the slot order described in the module docstring.  ``link_of_slot``
    tags each stored (positive) slot with the single-particle lattice link
    it rides on (``link = source_site * K + site_slot``), which is what
    lets noise on one lattice element fan out to every joint entry it
    touches.  Two inverted maps in compressed-sparse-row form answer the
    fan-out queries:

    * link ``l`` -> the (row, column) pairs of stored entries on ``l``,
    * site ``x`` -> the rows whose diagonal depends on ``x``.
    """

    space: JointSpace
    indices: np.ndarray        # (dim, 2H+1) int64, -1 = no target
    half: int                  # H, number of stored off-diagonal slots
    valid_count: np.ndarray    # (dim,) valid off-diagonal slots per row
    particle_sites: np.ndarray  # (dim, m) int64
    coincidence: np.ndarray    # (dim,) pairs of particles sharing a site
    link_of_slot: np.ndarray   # (dim, H) int64, -1 where slot invalid
    site_slot_direction: np.ndarray  # (K,) direction of each site slot
    site_slot_distance: np.ndarray   # (K,) hop distance of each site slot
    link_rows: np.ndarray      # CSR payload: joint rows per link
    link_cols: np.ndarray      # CSR payload: stored column (1..H) per link
    link_indptr: np.ndarray    # (n_links+1,)
    site_rows: np.ndarray      # CSR payload: joint rows per site
    site_indptr: np.ndarray    # (n_sites+1,)
    all_valid: bool = field(default=True)

    @property
    def dim(self) -> int:
        return self.indices.shape[0]

    @property
    def n_links(self) -> int:
        return self.link_indptr.shape[0] - 1

    def rows_of_link(self, link: int):
        """Stored entries riding lattice link ``link`` as (rows, cols)."""
        lo, hi = self.link_indptr[link], self.link_indptr[link + 1]
        return self.link_rows[lo:hi], self.link_cols[lo:hi]

    def rows_of_site(self, site: int):
        """Joint rows whose diagonal involves lattice site ``site``."""
        lo, hi = self.site_indptr[site], self.site_indptr[site + 1]
        return self.site_rows[lo:hi]


def build_topology(space: JointSpace) -> TopologyMatrix:
    """Construct the shared adjacency table for a joint space.

    Cost and storage scale as dim * (m*k + 1); realizations never copy
    this, they only read it.
    """
    lattice = space.lattice
    n = lattice.n_sites
    m = space.m
    dim = space.dim
    pos, neg, directions, distances = _site_move_tables(lattice)
    k_site = pos.shape[1]
    half = m * k_site

    try:
        indices = np.full((dim, 2 * half + 1), -1, dtype=np.int64)
        particle_sites = joint_positions(np.arange(dim, dtype=np.int64), space)
        link_of_slot = np.full((dim, half), -1, dtype=np.int64)
    except MemoryError as exc:
        raise CapacityError(
            f"cannot allocate topology table for joint dimension {dim}"
        ) from exc

    base = np.arange(dim, dtype=np.int64)
    indices[:, 0] = base
    for p in range(m):
        shift = n ** (m - 1 - p)
        xs = particle_sites[:, p]
        for s in range(k_site):
            col = 1 + p * k_site + s
            tgt = pos[xs, s]
            ok = tgt >= 0
            indices[:, col] = np.where(ok, base + (tgt - xs) * shift, -1)
            link_of_slot[:, col - 1] = np.where(ok, xs * k_site + s, -1)
            tgt = neg[xs, s]
            ok = tgt >= 0
            indices[:, half + col] = np.where(ok, base + (tgt - xs) * shift, -1)

    valid_count = np.count_nonzero(indices[:, 1:] >= 0, axis=1).astype(np.int64)
    all_valid = bool(np.all(indices >= 0))

    coincidence = np.zeros(dim, dtype=np.int64)
    for p in range(m):
        for r in range(p + 1, m):
            coincidence += particle_sites[:, p] == particle_sites[:, r]

    # Invert slot -> link into link -> slots (stable order keeps runs
    # reproducible bit for bit).
    flat_links = link_of_slot.ravel()
    flat_rows = np.repeat(base, half)
    flat_cols = np.tile(np.arange(1, half + 1, dtype=np.int64), dim)
    keep = flat_links >= 0
    flat_links, flat_rows, flat_cols = flat_links[keep], flat_rows[keep], flat_cols[keep]
    order = np.argsort(flat_links, kind="stable")
    link_rows = flat_rows[order]
    link_cols = flat_cols[order]
    n_links = n * k_site
    link_indptr = np.searchsorted(flat_links[order], np.arange(n_links + 1))

    occ_sites = particle_sites.ravel()
    occ_rows = np.repeat(base, m)
    order = np.argsort(occ_sites, kind="stable")
    site_rows = occ_rows[order]
    site_indptr = np.searchsorted(occ_sites[order], np.arange(n + 1))

    return TopologyMatrix(
        space=space,
        indices=indices,
        half=half,
        valid_count=valid_count,
        particle_sites=particle_sites,
        coincidence=coincidence,
        link_of_slot=link_of_slot,
        site_slot_direction=directions,
        site_slot_distance=distances,
        link_rows=link_rows,
        link_cols=link_cols,
        link_indptr=link_indptr,
        site_rows=site_rows,
        site_indptr=site_indptr,
        all_valid=all_valid,
    )
