"""Ensemble simulator for continuous-time quantum walks on noisy lattices."""

__version__ = "0.1.0"

from .density import DensityMatrix, accumulate_density, packed_length
from .ensemble import (
    InitialStateSpec,
    MemorySinks,
    OutputSinks,
    RunConfig,
    RunReport,
    build_initial_state,
    estimate_memory,
    run,
)
from .errors import (
    CapacityError,
    ConfigurationError,
    ConsistencyError,
    CtqwError,
    MemoryBudgetError,
    NormFailureError,
    NumericError,
    OutputError,
    SnapshotFormatError,
)
from .hamiltonian import (
    CouplingModel,
    ReducedHamiltonian,
    apply,
    assemble,
    densify,
    update,
)
from .hilbert import (
    JointSpace,
    LatticeTopology,
    TopologyMatrix,
    build_lattice,
    build_topology,
    joint_index,
    joint_positions,
)
from .noise import NoiseProcess, NoiseSpec, advance, init_process
from .observables import (
    joint_distribution,
    participation_ratio,
    populations,
    position_variance,
    purity,
    trace_distance,
)
from .profiling import STAGES, StageProfile
from .propagators import (
    BACKENDS,
    EigenDecomposition,
    StepperConfig,
    WaveFunction,
    check_norm,
    diagonalize,
    step_eigen,
    step_rk4,
    step_taylor,
)

__all__ = [
    "BACKENDS",
    "CapacityError",
    "ConfigurationError",
    "ConsistencyError",
    "CouplingModel",
    "CtqwError",
    "DensityMatrix",
    "EigenDecomposition",
    "InitialStateSpec",
    "JointSpace",
    "LatticeTopology",
    "MemoryBudgetError",
    "MemorySinks",
    "NoiseProcess",
    "NoiseSpec",
    "NormFailureError",
    "NumericError",
    "OutputError",
    "OutputSinks",
    "ReducedHamiltonian",
    "RunConfig",
    "RunReport",
    "STAGES",
    "SnapshotFormatError",
    "StageProfile",
    "StepperConfig",
    "TopologyMatrix",
    "WaveFunction",
    "accumulate_density",
    "advance",
    "apply",
    "assemble",
    "build_initial_state",
    "build_lattice",
    "build_topology",
    "check_norm",
    "densify",
    "diagonalize",
    "estimate_memory",
    "init_process",
    "joint_distribution",
    "joint_index",
    "joint_positions",
    "packed_length",
    "participation_ratio",
    "populations",
    "position_variance",
    "purity",
    "run",
    "step_eigen",
    "step_rk4",
    "step_taylor",
    "trace_distance",
    "update",
    "__version__",
]
