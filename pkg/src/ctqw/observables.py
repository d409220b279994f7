"""Measurements on ensemble-averaged density matrices.

Everything here reads the packed triangular storage directly where it
can (diagonal-only quantities, purity) and expands to dense form only
where the mathematics demands it (trace distance).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import DensityMatrix
from .errors import ConfigurationError, ConsistencyError, NumericError
from .hilbert import JointSpace, joint_positions

# A variance on a ring stops meaning "spread" once the packet feels both
# edges of the unwrapped coordinate; flag it when more than this much
# per-particle probability sits within the edge window on both sides.
WRAP_EDGE_WINDOW = 2
WRAP_EDGE_MASS = 1e-3


@dataclass
class PositionStats:
    """First two moments of the per-particle position marginal."""

    mean: float
    variance: float
    wrapped: bool


def joint_distribution(rho: DensityMatrix) -> np.ndarray:
    """Probability of each joint basis state (the diagonal, made real)."""
    diag = rho.diagonal()
    return diag.real.copy()


def populations(rho: DensityMatrix, space: JointSpace) -> np.ndarray:
    """Expected particle count per lattice site; sums to m.

    Marginalizes the joint distribution: each joint state contributes its
    probability once per particle occupying the site.
    """
    if rho.dim != space.dim:
        raise ConsistencyError(
            f"density dimension {rho.dim} does not match the space ({space.dim})"
        )
    probs = joint_distribution(rho)
    digits = joint_positions(np.arange(space.dim, dtype=np.int64), space)
    n = space.lattice.n_sites
    out = np.zeros(n, dtype=np.float64)
    for p in range(space.m):
        out += np.bincount(digits[:, p], weights=probs, minlength=n)
    return out


def position_variance(rho: DensityMatrix, space: JointSpace) -> PositionStats:
    """Mean and variance of the position of a uniformly chosen particle.

    Only defined for one lattice direction.  On a periodic lattice the
    raw site coordinate wraps, so when probability mass accumulates on
    both edge windows at once the result is flagged.
    """
    if space.lattice.q != 1:
        raise ConfigurationError(
            f"position variance needs a single direction, lattice has {space.lattice.q}"
        )
    pops = populations(rho, space)
    total = pops.sum()
    if total <= 0:
        raise NumericError("population vector sums to zero")
    marginal = pops / total
    x = np.arange(marginal.shape[0], dtype=np.float64)
    mean = float(marginal @ x)
    variance = float(marginal @ (x - mean) ** 2)
    wrapped = False
    if space.lattice.boundary == "periodic" and marginal.shape[0] > 2 * WRAP_EDGE_WINDOW:
        low = marginal[:WRAP_EDGE_WINDOW].sum()
        high = marginal[-WRAP_EDGE_WINDOW:].sum()
        wrapped = bool(low > WRAP_EDGE_MASS and high > WRAP_EDGE_MASS)
    return PositionStats(mean=mean, variance=variance, wrapped=wrapped)


def purity(rho: DensityMatrix) -> float:
    """Tr rho^2 from the triangle: diagonal once, off-diagonal twice."""
    sq = np.abs(rho.packed) ** 2
    idx = np.arange(rho.dim, dtype=np.int64)
    diag_sq = sq[idx * (idx + 1) // 2 + idx]
    return float(2.0 * sq.sum() - diag_sq.sum())


def participation_ratio(rho: DensityMatrix) -> float:
    """Inverse participation of the joint distribution, in [1, dim]."""
    probs = joint_distribution(rho)
    total = probs.sum()
    denom = float(np.square(probs / total).sum())
    if denom <= 0:
        raise NumericError("joint distribution has no weight")
    return 1.0 / denom


def trace_distance(rho_a: DensityMatrix, rho_b: DensityMatrix) -> float:
    """Half the trace norm of the difference; 0 for equal, 1 for disjoint.

    Needs the spectrum of the dense difference, so this is the one
    observable with quadratic memory and cubic time in the dimension.
    """
    if rho_a.dim != rho_b.dim:
        raise ConsistencyError(
            f"dimensions {rho_a.dim} and {rho_b.dim} cannot be compared"
        )
    diff = rho_a.dense() - rho_b.dense()
    try:
        spectrum = np.linalg.eigvalsh(diff)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"trace distance spectrum failed: {exc}") from exc
    return float(0.5 * np.abs(spectrum).sum())
