"""Reduced Hamiltonian storage and its matrix-free application.

Amplitudes are kept as one value row per joint state: slot 0 holds the
diagonal energy, slots ``1 .. H`` hold the positive-move hop amplitudes in
the slot order fixed by :mod:`ctqw.hilbert`.  Hermiticity supplies the
negative half: the amplitude of the entry ``(alpha, H+j)`` is the
conjugate of the value stored at slot ``j`` of the target row.  Storage
per realization is therefore ``dim * (m*k/2 + 1)`` scalars instead of a
``dim**2`` matrix, and the index table is shared by every realization.

The assembly and application helpers accept leading batch axes so a stack
of realizations can be processed in lockstep; per-row results never depend
on the rest of the batch, which keeps chunked and serial execution bit
for bit identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ConfigurationError
from .hilbert import TopologyMatrix
from .noise import NoiseDelta, NoiseProcess

DENSE_CAP = 4096


@dataclass(frozen=True)
class CouplingModel:
    """Deterministic part of the Hamiltonian.

    ``tunneling`` is a single hop amplitude or one per lattice direction;
    ``interaction`` is the contact energy added once per coinciding pair
    of particles; ``hbar`` scales the generator in the evolution laws.
    """

    onsite_energy: float = 0.0
    tunneling: float | tuple[float, ...] = 1.0
    interaction: float = 0.0
    hbar: float = 1.0

    def __post_init__(self):
        if isinstance(self.tunneling, (list, tuple, np.ndarray)):
            object.__setattr__(
                self, "tunneling", tuple(float(v) for v in self.tunneling)
            )
            values = self.tunneling
        else:
            object.__setattr__(self, "tunneling", float(self.tunneling))
            values = (self.tunneling,)
        for name, value in (
            ("onsite_energy", self.onsite_energy),
            ("interaction", self.interaction),
            ("hbar", self.hbar),
        ):
            if not np.isfinite(value):
                raise ConfigurationError(f"{name} = {value} must be finite")
        if not all(np.isfinite(values)):
            raise ConfigurationError("tunneling amplitudes must be finite")
        if self.hbar <= 0:
            raise ConfigurationError(f"hbar = {self.hbar} must be > 0")

    def tunneling_per_direction(self, q: int) -> np.ndarray:
        if isinstance(self.tunneling, tuple):
            if len(self.tunneling) != q:
                raise ConfigurationError(
                    f"{len(self.tunneling)} tunneling amplitudes for {q} directions"
                )
            return np.asarray(self.tunneling, dtype=np.float64)
        return np.full(q, self.tunneling, dtype=np.float64)


@dataclass
class ReducedHamiltonian:
    """One realization's values over the shared topology."""

    topology: TopologyMatrix
    model: CouplingModel
    values: np.ndarray  # (dim, H+1), complex

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def dtype(self):
        return self.values.dtype


def slot_couplings(topology: TopologyMatrix, model: CouplingModel) -> np.ndarray:
    """Baseline hop amplitude of each stored slot (before noise)."""
    q = topology.space.lattice.q
    per_direction = model.tunneling_per_direction(q)
    site_slots = per_direction[topology.site_slot_direction]
    return np.tile(site_slots, topology.space.m)


def positive_slot_mask(topology: TopologyMatrix) -> np.ndarray:
    """Bool (dim, H) mask of stored slots that have a hop target."""
    return topology.indices[:, 1 : topology.half + 1] >= 0


def assemble_values(
    topology: TopologyMatrix,
    model: CouplingModel,
    link_values=None,
    site_values=None,
    out=None,
    dtype=np.complex128,
):
    """Fill value rows from the model plus optional noise arrays.

    ``link_values`` / ``site_values`` may carry leading batch axes; the
    result then has shape ``batch + (dim, H+1)``.  Rewrites every entry,
    so calling twice with the same inputs is bit-for-bit idempotent.
    """
    dim = topology.dim
    half = topology.half
    batch = ()
    if link_values is not None:
        link_values = np.asarray(link_values)
        batch = link_values.shape[:-1]
    if site_values is not None:
        site_values = np.asarray(site_values)
        batch = site_values.shape[:-1]
    if out is None:
        out = np.empty(batch + (dim, half + 1), dtype=dtype)

    space = topology.space
    diag = space.m * model.onsite_energy + model.interaction * topology.coincidence
    out[..., 0] = diag
    if site_values is not None and site_values.shape[-1]:
        out[..., 0] += site_values[..., topology.particle_sites].sum(axis=-1)

    base = slot_couplings(topology, model)
    out[..., 1:] = base
    if link_values is not None and link_values.shape[-1]:
        links = topology.link_of_slot
        out[..., 1:] += link_values[..., np.where(links >= 0, links, 0)]
    if not topology.all_valid:
        np.copyto(out[..., 1:], 0, where=~positive_slot_mask(topology))
    return out


def assemble(
    topology: TopologyMatrix,
    model: CouplingModel,
    noise: NoiseProcess | None = None,
    dtype=np.complex128,
) -> ReducedHamiltonian:
    """Build one realization's reduced Hamiltonian."""
    link_values = site_values = None
    if noise is not None:
        link_values = noise.link_values if noise.n_links else None
        site_values = noise.site_values if noise.n_sites else None
    values = assemble_values(
        topology, model, link_values=link_values, site_values=site_values, dtype=dtype
    )
    return ReducedHamiltonian(topology=topology, model=model, values=values)


def update(h: ReducedHamiltonian, noise: NoiseProcess, delta: NoiseDelta) -> int:
    """Rewrite exactly the entries invalidated by a noise delta.

    Returns the number of stored entries touched.  A delta with nothing
    changed leaves the values untouched; re-applying the same state is
    idempotent because entries are recomputed from scratch, not adjusted.
    """
    if not delta.changed:
        return 0
    topo = h.topology
    touched = 0
    if delta.links.size:
        base = slot_couplings(topo, h.model)
        for link in delta.links:
            rows, cols = topo.rows_of_link(int(link))
            h.values[rows, cols] = base[cols - 1] + noise.link_values[link]
            touched += rows.size
    if delta.sites.size:
        rows = [topo.rows_of_site(int(site)) for site in delta.sites]
        rows = np.unique(np.concatenate(rows))
        space = topo.space
        diag = (
            space.m * h.model.onsite_energy
            + h.model.interaction * topo.coincidence[rows]
            + noise.site_values[topo.particle_sites[rows]].sum(axis=-1)
        )
        h.values[rows, 0] = diag
        touched += rows.size
    return touched


def apply_values(topology: TopologyMatrix, values, psi, out=None):
    """Matrix-vector product through the reduced layout.

    ``values`` has shape ``batch + (dim, H+1)`` and ``psi`` shape
    ``batch + (dim,)``; each batch row is processed independently.
    """
    if out is None:
        out = np.empty_like(psi)
    half = topology.half
    indices = topology.indices
    np.multiply(values[..., 0], psi, out=out)
    for j in range(1, half + 1):
        beta = indices[:, j]
        if topology.all_valid:
            out += values[..., j] * psi[..., beta]
        else:
            ok = beta >= 0
            clipped = np.where(ok, beta, 0)
            out += np.where(ok, values[..., j] * psi[..., clipped], 0)
        beta = indices[:, half + j]
        if topology.all_valid:
            out += np.conj(values[..., beta, j]) * psi[..., beta]
        else:
            ok = beta >= 0
            clipped = np.where(ok, beta, 0)
            out += np.where(
                ok, np.conj(values[..., clipped, j]) * psi[..., clipped], 0
            )
    return out


def apply(h: ReducedHamiltonian, psi, out=None):
    """Apply one realization's Hamiltonian to a state vector."""
    return apply_values(h.topology, h.values, psi, out=out)


def densify(h: ReducedHamiltonian, cap: int = DENSE_CAP) -> np.ndarray:
    """Expand to a dense Hermitian matrix (double precision).

    Guarded by ``cap`` because the dense form is quadratic in a dimension
    the reduced layout keeps linear; the eigendecomposition backend and
    oracle-style checks are its only intended consumers.
    """
    dim = h.dim
    if dim > cap:
        raise CapacityError(
            f"dense expansion of dimension {dim} exceeds the cap {cap}"
        )
    topo = h.topology
    dense = np.zeros((dim, dim), dtype=np.complex128)
    rows = np.arange(dim)
    for j in range(1, topo.half + 1):
        beta = topo.indices[:, j]
        ok = beta >= 0
        np.add.at(dense, (rows[ok], beta[ok]), h.values[ok, j].astype(np.complex128))
    dense += dense.conj().T
    dense[rows, rows] = h.values[:, 0].real
    return dense
