"""Single-step propagation backends and norm control.

Three interchangeable integrators advance a state over one time step
``dt`` under a fixed Hamiltonian:

* ``eigen``: exact rotation through the spectral decomposition; needs the
  dense matrix once per Hamiltonian change, then each step is two dense
  products.  Unconditionally norm-preserving up to roundoff.
* ``rk4``: classical 4th-order Runge-Kutta on the linear generator.
* ``taylor``: truncated series sum(phi_j) with the running term
  ``phi_j = (coeff / j) * H @ phi_{j-1}``, ``coeff = -i * dt / hbar``.
  The recursion reuses a fixed pair of scratch vectors, so memory never
  depends on the order.

For a time-independent linear generator the 4th-order Taylor sum and RK4
produce the same polynomial in ``dt * H``, so their single-step results
coincide to rounding; with noise the Hamiltonian is piecewise constant
over steps and the equivalence carries through.

The ``*_values`` variants run on bare arrays with leading batch axes and
are the building blocks of the ensemble engine; the ``step_*`` functions
wrap a single :class:`WaveFunction`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NormFailureError, NumericError
from .hamiltonian import ReducedHamiltonian, apply_values
from .hilbert import TopologyMatrix

BACKEND_EIGEN = "eigen"
BACKEND_RK4 = "rk4"
BACKEND_TAYLOR = "taylor"
BACKENDS = (BACKEND_EIGEN, BACKEND_RK4, BACKEND_TAYLOR)

DEFAULT_DT = 0.05
DEFAULT_TAYLOR_ORDER = 4
DEFAULT_TOL_NORM = 1e-6
DEFAULT_TOL_FAIL = 1e-3


@dataclass
class WaveFunction:
    """Complex amplitudes over the joint basis, tagged with sim time."""

    amplitudes: np.ndarray
    time_tag: float = 0.0

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[-1]


@dataclass(frozen=True)
class StepperConfig:
    """Integrator choice plus the norm-drift policy."""

    backend: str = BACKEND_TAYLOR
    dt: float = DEFAULT_DT
    taylor_order: int = DEFAULT_TAYLOR_ORDER
    tol_norm: float = DEFAULT_TOL_NORM
    tol_fail: float = DEFAULT_TOL_FAIL
    renormalize: bool = True

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ConfigurationError(
                f"backend {self.backend!r} not recognized; use one of {BACKENDS}"
            )
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ConfigurationError(f"dt = {self.dt} must be positive and finite")
        if self.taylor_order < 1:
            raise ConfigurationError(
                f"taylor_order = {self.taylor_order} must be >= 1"
            )
        if not (0 < self.tol_norm < self.tol_fail):
            raise ConfigurationError(
                f"need 0 < tol_norm < tol_fail, got {self.tol_norm} and {self.tol_fail}"
            )


@dataclass
class NormEvent:
    """One norm excursion beyond tol_norm (corrected or merely logged)."""

    deviation: float
    corrected: bool
    realization: int | None = None
    step: int | None = None


@dataclass
class EigenDecomposition:
    """Eigenvalues ascending; eigenvectors as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]


def diagonalize(dense: np.ndarray, hermiticity_tol: float = 1e-12) -> EigenDecomposition:
    """Spectral decomposition of a dense Hermitian matrix.

    Rejects input whose anti-Hermitian part exceeds ``hermiticity_tol``
    (scaled by the largest magnitude entry once that exceeds one).
    """
    dense = np.asarray(dense)
    if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
        raise ConfigurationError(f"expected a square matrix, got shape {dense.shape}")
    scale = max(1.0, float(np.abs(dense).max()))
    defect = float(np.abs(dense - dense.conj().T).max())
    if defect > hermiticity_tol * scale:
        raise NumericError(
            f"matrix is not Hermitian: max deviation {defect:.3e} "
            f"exceeds {hermiticity_tol * scale:.3e}"
        )
    try:
        eigenvalues, eigenvectors = np.linalg.eigh(dense)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from exc
    return EigenDecomposition(eigenvalues=eigenvalues, eigenvectors=eigenvectors)


def step_eigen_values(decomp: EigenDecomposition, psi, dt: float, hbar: float = 1.0):
    """Exact rotation exp(-i H dt / hbar) applied through the eigenbasis."""
    phases = np.exp(-1j * decomp.eigenvalues * (dt / hbar))
    v = decomp.eigenvectors
    coeffs = psi @ v.conj()
    out = (coeffs * phases) @ v.T
    return out.astype(psi.dtype, copy=False)


class StepScratch:
    """Reusable work vectors for the series and Runge-Kutta cores.

    Holds exactly three buffers shaped like the state stack; the Taylor
    recursion touches two of them regardless of order.
    """

    __slots__ = ("a", "b", "c")

    def __init__(self, shape, dtype):
        self.a = np.empty(shape, dtype=dtype)
        self.b = np.empty(shape, dtype=dtype)
        self.c = np.empty(shape, dtype=dtype)

    def matches(self, array) -> bool:
        return self.a.shape == array.shape and self.a.dtype == array.dtype


def _scratch_for(psi, scratch):
    if scratch is None or not scratch.matches(psi):
        scratch = StepScratch(psi.shape, psi.dtype)
    return scratch


def step_taylor_values(
    topology: TopologyMatrix,
    values,
    psi,
    dt: float,
    hbar: float = 1.0,
    order: int = DEFAULT_TAYLOR_ORDER,
    out=None,
    scratch: StepScratch | None = None,
):
    """Truncated-series step on a batch of states.

    The running term lives in one buffer and the product target in a
    second; they swap each order, so the footprint is flat in ``order``.
    """
    scratch = _scratch_for(psi, scratch)
    if out is None:
        out = np.empty_like(psi)
    coeff = -1j * dt / hbar
    term, product = scratch.a, scratch.b
    np.copyto(out, psi)
    np.copyto(term, psi)
    for j in range(1, order + 1):
        apply_values(topology, values, term, out=product)
        product *= coeff / j
        term, product = product, term
        out += term
    return out


def step_rk4_values(
    topology: TopologyMatrix,
    values,
    psi,
    dt: float,
    hbar: float = 1.0,
    out=None,
    scratch: StepScratch | None = None,
):
    """Classical Runge-Kutta step for d psi / dt = -(i/hbar) H psi."""
    scratch = _scratch_for(psi, scratch)
    if out is None:
        out = np.empty_like(psi)
    coeff = -1j * dt / hbar
    stage, arg = scratch.a, scratch.b

    apply_values(topology, values, psi, out=stage)
    stage *= coeff                     # k1
    np.copyto(arg, stage)
    arg *= 0.5
    arg += psi                         # psi + k1/2
    np.copyto(out, psi)
    stage *= 1.0 / 6.0
    out += stage                       # psi + k1/6

    apply_values(topology, values, arg, out=stage)
    stage *= coeff                     # k2
    np.copyto(arg, stage)
    arg *= 0.5
    arg += psi                         # psi + k2/2
    stage *= 1.0 / 3.0
    out += stage                       # + k2/3

    apply_values(topology, values, arg, out=stage)
    stage *= coeff                     # k3
    np.copyto(arg, stage)
    arg += psi                         # psi + k3
    stage *= 1.0 / 3.0
    out += stage                       # + k3/3

    apply_values(topology, values, arg, out=stage)
    stage *= coeff                     # k4
    stage *= 1.0 / 6.0
    out += stage                       # + k4/6
    return out


def _advance(psi, amplitudes, dt):
    if isinstance(psi, WaveFunction):
        return WaveFunction(amplitudes=amplitudes, time_tag=psi.time_tag + dt)
    return amplitudes


def _amplitudes(psi):
    return psi.amplitudes if isinstance(psi, WaveFunction) else psi


def step_eigen(decomp: EigenDecomposition, psi, dt: float, hbar: float = 1.0):
    """Spectral-backend step for a single state."""
    out = step_eigen_values(decomp, _amplitudes(psi), dt, hbar=hbar)
    return _advance(psi, out, dt)


def step_taylor(
    h: ReducedHamiltonian, psi, dt: float, order: int = DEFAULT_TAYLOR_ORDER
):
    """Series-backend step for a single state."""
    out = step_taylor_values(
        h.topology, h.values, _amplitudes(psi), dt, hbar=h.model.hbar, order=order
    )
    return _advance(psi, out, dt)


def step_rk4(h: ReducedHamiltonian, psi, dt: float):
    """Runge-Kutta-backend step for a single state."""
    out = step_rk4_values(
        h.topology, h.values, _amplitudes(psi), dt, hbar=h.model.hbar
    )
    return _advance(psi, out, dt)


def check_norm(psi, stepper: StepperConfig):
    """Enforce the norm-drift policy on one state.

    Returns ``(psi, event)``.  Deviation is measured on the squared norm.
    Within ``tol_norm`` nothing happens; up to ``tol_fail`` the state is
    rescaled when ``renormalize`` is set (and the excursion reported
    either way); beyond ``tol_fail`` the step size is declared too large
    and a :class:`NormFailureError` is raised.
    """
    amps = _amplitudes(psi)
    # Accumulate in double even for single-precision states: the check
    # measures 1e-6 deviations, right at float32 summation noise.
    norm_sq = float(
        np.einsum("i,i->", amps.real, amps.real, dtype=np.float64)
        + np.einsum("i,i->", amps.imag, amps.imag, dtype=np.float64)
    )
    deviation = abs(norm_sq - 1.0)
    if deviation <= stepper.tol_norm:
        return psi, None
    if deviation > stepper.tol_fail:
        raise NormFailureError(deviation)
    if stepper.renormalize:
        amps = amps / np.sqrt(norm_sq)
        if isinstance(psi, WaveFunction):
            psi = WaveFunction(amplitudes=amps, time_tag=psi.time_tag)
        else:
            psi = amps
        return psi, NormEvent(deviation=deviation, corrected=True)
    return psi, NormEvent(deviation=deviation, corrected=False)


def check_norm_stack(stack, stepper: StepperConfig):
    """Vectorized norm policy over a stack of states, mutating in place.

    Returns ``(deviations, corrected_mask)``; raises on the worst row
    past ``tol_fail``, tagging it with the row index so callers can name
    the offending realization.
    """
    norm_sq = np.einsum(
        "...i,...i->...", stack.real, stack.real, dtype=np.float64
    ) + np.einsum("...i,...i->...", stack.imag, stack.imag, dtype=np.float64)
    deviations = np.abs(norm_sq - 1.0)
    failed = deviations > stepper.tol_fail
    if np.any(failed):
        row = int(np.argmax(deviations))
        raise NormFailureError(float(deviations[row]), realization=row)
    over = deviations > stepper.tol_norm
    if stepper.renormalize and np.any(over):
        stack[over] /= np.sqrt(norm_sq[over])[..., None]
        return deviations, over
    return deviations, np.zeros_like(over)
