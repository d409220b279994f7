"""Ensemble-averaged density matrix in packed triangular storage.

Hermitian, so only the lower triangle is kept, row-major:
``packed[i*(i+1)/2 + j]`` holds entry ``(i, j)`` for ``j <= i``.  The
average over realizations is always accumulated in double precision
regardless of the precision the states were propagated in; a stack of R
single-precision states loses nothing by being summed carefully once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError
from .propagators import WaveFunction

TIME_TAG_SLACK = 1e-9


def packed_length(dim: int) -> int:
    return dim * (dim + 1) // 2


@dataclass
class DensityMatrix:
    """Lower-triangle ensemble average rho(t) with its provenance counts."""

    packed: np.ndarray  # (dim*(dim+1)//2,) complex128
    dim: int
    sample_count: int
    time_tag: float

    def __post_init__(self):
        if self.packed.shape != (packed_length(self.dim),):
            raise ConsistencyError(
                f"packed length {self.packed.shape} does not fit dimension {self.dim}"
            )

    def diagonal(self) -> np.ndarray:
        idx = np.arange(self.dim, dtype=np.int64)
        return self.packed[idx * (idx + 1) // 2 + idx]

    def trace(self) -> float:
        return float(self.diagonal().real.sum())

    def dense(self) -> np.ndarray:
        """Expand to the full Hermitian matrix (quadratic memory)."""
        out = np.zeros((self.dim, self.dim), dtype=np.complex128)
        rows, cols = np.tril_indices(self.dim)
        out[rows, cols] = self.packed
        out[cols, rows] = np.conj(self.packed)
        return out


def accumulate_density(states, time_tag: float | None = None) -> DensityMatrix:
    """Average projectors over a stack of realizations.

    ``states`` is either a sequence of :class:`WaveFunction` (their time
    tags must agree) or a bare (R, dim) array with an explicit
    ``time_tag``.  The Gram product runs over the full matrix in double
    precision, then only the triangle is kept; peak transient memory is
    one dense dim x dim block.

    Accumulation order is fixed by the stack order, so results are
    reproducible bit for bit however the states were produced.
    """
    if isinstance(states, np.ndarray):
        stack = states
        if stack.ndim != 2:
            raise ConsistencyError(f"expected an (R, dim) stack, got {stack.shape}")
        if time_tag is None:
            raise ConsistencyError("a bare stack needs an explicit time_tag")
    else:
        states = list(states)
        if not states:
            raise ConsistencyError("no states to average")
        tags = np.array([w.time_tag for w in states], dtype=np.float64)
        spread = tags.max() - tags.min()
        if spread > TIME_TAG_SLACK * max(1.0, abs(float(tags[0]))):
            raise ConsistencyError(
                f"states carry mixed time tags (spread {spread:.3e}); "
                f"an average across different times is not a state"
            )
        if time_tag is None:
            time_tag = float(tags[0])
        stack = np.stack([w.amplitudes for w in states])

    r = stack.shape[0]
    stack = stack.astype(np.complex128, copy=False)
    gram = stack.T @ stack.conj()
    rows, cols = np.tril_indices(stack.shape[1])
    packed = gram[rows, cols]
    packed /= r
    return DensityMatrix(
        packed=packed, dim=stack.shape[1], sample_count=r, time_tag=float(time_tag)
    )
