"""Ensemble evolution engine: R realizations, shared topology, averages.

One run evolves ``realizations`` independent states under independently
drawn telegraph noise over a common step grid, collecting the averaged
density matrix every ``post_rate`` steps.  Realizations are processed as
stacked arrays in chunks; chunks can execute in worker processes, but
every per-row operation is independent of its neighbors and the final
average contracts the realization stack in a fixed order, so the output
is identical bit for bit no matter how many workers participated.

Work is attributed to the four canonical stages of
:mod:`ctqw.profiling`: setup and pool spin-up count as initialization,
stepping and norm control as wavefunction evolution, noise advancement
plus value rewrites (and eigenbasis refreshes) as hamiltonian update,
and averaging plus observable evaluation as density and post-processing.
Transport overhead of shipping chunks to workers is folded into the
evolution stage; sink output is timed separately and never enters the
stage shares.
"""

from __future__ import annotations

import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import observables as obs
from .density import DensityMatrix, accumulate_density, packed_length
from .errors import (
    CapacityError,
    ConfigurationError,
    MemoryBudgetError,
    NormFailureError,
)
from .hamiltonian import (
    DENSE_CAP,
    CouplingModel,
    ReducedHamiltonian,
    assemble_values,
    densify,
    update,
)
from .hilbert import JointSpace, TopologyMatrix, build_topology, joint_index
from .noise import NoiseSpec, advance, init_process
from .profiling import (
    STAGE_DENSITY,
    STAGE_EVOLUTION,
    STAGE_HAMILTONIAN,
    STAGE_INITIALIZATION,
    StageProfile,
)
from .propagators import (
    BACKEND_EIGEN,
    BACKEND_RK4,
    BACKEND_TAYLOR,
    NormEvent,
    StepperConfig,
    StepScratch,
    check_norm_stack,
    diagonalize,
    step_eigen_values,
    step_rk4_values,
    step_taylor_values,
)

__all__ = [
    "DensityMatrix",
    "InitialStateSpec",
    "MemorySinks",
    "OutputSinks",
    "RunConfig",
    "RunReport",
    "accumulate_density",
    "build_initial_state",
    "estimate_memory",
    "run",
]

PRECISION_SINGLE = "single"
PRECISION_DOUBLE = "double"
PRECISIONS = (PRECISION_SINGLE, PRECISION_DOUBLE)

KIND_AUTO = "auto"
KIND_SINGLE_SITE = "single_site"
KIND_PRODUCT = "product"
KIND_SYMMETRIZED = "symmetrized_pair"
KIND_ANTISYMMETRIZED = "antisymmetrized_pair"
KIND_CUSTOM = "custom_vector"
STATE_KINDS = (
    KIND_AUTO,
    KIND_SINGLE_SITE,
    KIND_PRODUCT,
    KIND_SYMMETRIZED,
    KIND_ANTISYMMETRIZED,
    KIND_CUSTOM,
)

OBS_POPULATIONS = "populations"
OBS_POSITION = "position_mean_variance"
OBS_PURITY = "purity"
OBS_PARTICIPATION = "participation_ratio"
OBS_JOINT = "joint_distribution"
KNOWN_OBSERVABLES = (
    OBS_POPULATIONS,
    OBS_POSITION,
    OBS_PURITY,
    OBS_PARTICIPATION,
    OBS_JOINT,
)

WORKERS_ENV = "CTQW_WORKERS"

# Abundant norm excursions would flood IPC and logs; totals stay exact,
# the forwarded event objects are a per-segment sample.
MAX_EVENTS_PER_SEGMENT = 100


@dataclass(frozen=True)
class InitialStateSpec:
    """How the common starting state of every realization is prepared.

    ``auto`` resolves to a single centered particle for m = 1 and to a
    product of adjacent centered sites otherwise.  The pair kinds build
    (anti)symmetrized combinations of two distinct sites.
    """

    kind: str = KIND_AUTO
    positions: tuple[int, ...] | None = None
    amplitudes: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in STATE_KINDS:
            raise ConfigurationError(
                f"initial state kind {self.kind!r} not recognized; "
                f"use one of {STATE_KINDS}"
            )
        if self.positions is not None:
            object.__setattr__(
                self, "positions", tuple(int(x) for x in self.positions)
            )


def build_initial_state(spec: InitialStateSpec, space: JointSpace) -> np.ndarray:
    """Unit-norm joint state vector in double precision."""
    n = space.lattice.n_sites
    m = space.m
    kind = spec.kind
    if kind == KIND_AUTO:
        kind = KIND_SINGLE_SITE if m == 1 else KIND_PRODUCT

    if kind == KIND_CUSTOM:
        if spec.amplitudes is None:
            raise ConfigurationError("custom_vector needs explicit amplitudes")
        amps = np.asarray(spec.amplitudes, dtype=np.complex128)
        if amps.shape != (space.dim,):
            raise ConfigurationError(
                f"custom vector has shape {amps.shape}, expected ({space.dim},)"
            )
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ConfigurationError("custom vector has zero norm")
        return amps / norm

    psi = np.zeros(space.dim, dtype=np.complex128)
    if kind == KIND_SINGLE_SITE:
        if m != 1:
            raise ConfigurationError("single_site describes one particle only")
        positions = spec.positions if spec.positions is not None else ((n - 1) // 2,)
        if len(positions) != 1:
            raise ConfigurationError("single_site takes exactly one position")
        psi[joint_index(positions, space)] = 1.0
        return psi

    if kind == KIND_PRODUCT:
        positions = spec.positions
        if positions is None:
            if m > n:
                raise ConfigurationError(
                    f"no default product placement for {m} particles on {n} sites; "
                    f"give explicit positions"
                )
            start = (n - m) // 2
            positions = tuple(range(start, start + m))
        if len(positions) != m:
            raise ConfigurationError(
                f"product state needs {m} positions, got {len(positions)}"
            )
        psi[joint_index(positions, space)] = 1.0
        return psi

    # Pair kinds from here on.
    if m != 2:
        raise ConfigurationError(f"{kind} requires exactly two particles")
    positions = spec.positions
    if positions is None:
        start = (n - 2) // 2
        positions = (start, start + 1)
    if len(positions) != 2:
        raise ConfigurationError(f"{kind} takes exactly two positions")
    x, y = positions
    if x == y:
        if kind == KIND_ANTISYMMETRIZED:
            raise ConfigurationError(
                "antisymmetrized pair on one site vanishes identically"
            )
        psi[joint_index((x, x), space)] = 1.0
        return psi
    amp = 1.0 / np.sqrt(2.0)
    sign = -1.0 if kind == KIND_ANTISYMMETRIZED else 1.0
    psi[joint_index((x, y), space)] = amp
    psi[joint_index((y, x), space)] = sign * amp
    return psi


@dataclass(frozen=True)
class RunConfig:
    """Complete description of one ensemble run."""

    space: JointSpace
    model: CouplingModel = CouplingModel()
    noise: NoiseSpec = NoiseSpec()
    stepper: StepperConfig = StepperConfig()
    initial: InitialStateSpec = InitialStateSpec()
    realizations: int = 1000
    steps: int = 1500
    post_rate: int = 10
    master_seed: int = 1234
    workers: int = 0          # 0 = take CTQW_WORKERS, else the cpu count
    precision: str = PRECISION_SINGLE
    observables: tuple[str, ...] | None = None
    memory_budget: int = 4 * 2**30
    dense_cap: int = DENSE_CAP

    def __post_init__(self):
        if self.realizations < 1:
            raise ConfigurationError(
                f"realizations = {self.realizations} must be >= 1"
            )
        if self.steps < 0:
            raise ConfigurationError(f"steps = {self.steps} must be >= 0")
        if self.post_rate < 1:
            raise ConfigurationError(
                f"post_rate = {self.post_rate} must be >= 1; "
                f"a rate of 0 would never collect anything"
            )
        if self.steps > 0 and self.post_rate > self.steps:
            raise ConfigurationError(
                f"post_rate = {self.post_rate} exceeds steps = {self.steps}"
            )
        if self.workers < 0:
            raise ConfigurationError(f"workers = {self.workers} must be >= 0")
        if self.precision not in PRECISIONS:
            raise ConfigurationError(
                f"precision {self.precision!r} not recognized; use one of {PRECISIONS}"
            )
        if self.memory_budget <= 0:
            raise ConfigurationError("memory_budget must be positive")
        if self.observables is None:
            names = [OBS_POPULATIONS, OBS_PURITY, OBS_PARTICIPATION]
            if self.space.lattice.q == 1:
                names.insert(1, OBS_POSITION)
            object.__setattr__(self, "observables", tuple(names))
        else:
            object.__setattr__(self, "observables", tuple(self.observables))
            for name in self.observables:
                if name not in KNOWN_OBSERVABLES:
                    raise ConfigurationError(
                        f"observable {name!r} not recognized; "
                        f"use one of {KNOWN_OBSERVABLES}"
                    )
            if not self.observables:
                raise ConfigurationError("observable selection is empty")
        if OBS_POSITION in self.observables and self.space.lattice.q != 1:
            raise ConfigurationError(
                "position_mean_variance is only defined on one-direction lattices"
            )

    @property
    def dtype(self):
        return np.complex64 if self.precision == PRECISION_SINGLE else np.complex128

    @property
    def schedule(self) -> tuple[int, ...]:
        """Collection steps: every post_rate-th step plus the final one."""
        if self.steps == 0:
            return (0,)
        points = list(range(self.post_rate, self.steps + 1, self.post_rate))
        if points[-1] != self.steps:
            points.append(self.steps)
        return tuple(points)


def estimate_memory(config: RunConfig) -> dict:
    """Closed-form working-set estimate in bytes.

    Covers the four dominant arrays: R state vectors, R value tables over
    the reduced layout, the shared topology indices, and the packed
    double-precision density average.  Transients (the dense Gram product
    of a snapshot, scratch vectors) and the dense matrices of the eigen
    backend are not included.
    """
    space = config.space
    dim = space.dim
    half = space.moves_half
    itemsize = 8 if config.precision == PRECISION_SINGLE else 16
    r = config.realizations
    state_bytes = r * dim * itemsize
    hamiltonian_bytes = r * dim * (half + 1) * itemsize
    topology_bytes = dim * (2 * half + 1) * 8
    density_bytes = packed_length(dim) * 16
    return {
        "joint_dim": dim,
        "itemsize": itemsize,
        "state_bytes": state_bytes,
        "hamiltonian_bytes": hamiltonian_bytes,
        "topology_bytes": topology_bytes,
        "density_bytes": density_bytes,
        "total_bytes": state_bytes + hamiltonian_bytes + topology_bytes + density_bytes,
    }


class OutputSinks:
    """Receiver interface for everything a run emits along the way."""

    def observable_rows(self, time_tag: float, rows):
        pass

    def density_snapshot(self, rho: DensityMatrix, step: int):
        pass

    def norm_events(self, events):
        pass

    def message(self, text: str):
        pass

    def finish(self, report):
        pass


class MemorySinks(OutputSinks):
    """Collects run output in lists; the default for library use."""

    def __init__(self, keep_densities: bool = True, max_events: int = 1000):
        self.keep_densities = keep_densities
        self.max_events = max_events
        self.rows: list[tuple[float, str, int, float]] = []
        self.densities: list[DensityMatrix] = []
        self.events: list[NormEvent] = []
        self.messages: list[str] = []
        self.report = None

    def observable_rows(self, time_tag, rows):
        self.rows.extend((time_tag, name, idx, value) for name, idx, value in rows)

    def density_snapshot(self, rho, step):
        if self.keep_densities:
            self.densities.append(rho)

    def norm_events(self, events):
        room = self.max_events - len(self.events)
        if room > 0:
            self.events.extend(events[:room])

    def message(self, text):
        self.messages.append(text)

    def finish(self, report):
        self.report = report


@dataclass
class RunReport:
    """Summary handed back by :func:`run`."""

    config: RunConfig
    profile: StageProfile
    io_seconds: float
    wall_seconds: float
    workers: int
    snapshots: int
    max_norm_deviation: float
    norm_corrections: int
    norm_events: int
    switch_count: int
    memory_estimate: dict


# ---------------------------------------------------------------------------
# Worker machinery.  A context with the shared read-only tables is shipped
# once per worker; per-segment traffic is just chunk state and statistics.

@dataclass
class _WorkerContext:
    topology: TopologyMatrix
    model: CouplingModel
    stepper: StepperConfig
    dtype_name: str
    dense_cap: int


@dataclass
class _ChunkState:
    r0: int                  # global index of the first realization
    psi: np.ndarray          # (B, dim) in the configured precision
    noise: list
    eigen: list | None = None


@dataclass
class _SegmentStats:
    evolution_seconds: float
    hamiltonian_seconds: float
    evolution_calls: int
    hamiltonian_calls: int
    events: list
    event_count: int
    corrections: int
    max_deviation: float


_WORKER: dict = {}


def _set_context(ctx: _WorkerContext):
    _WORKER["ctx"] = ctx


def _init_worker(ctx: _WorkerContext):
    _set_context(ctx)


def _ping(value):
    return value


def _segment_task(chunk: _ChunkState, start_step: int, n_steps: int):
    return _evolve_segment(_WORKER["ctx"], chunk, start_step, n_steps)


def _evolve_segment(ctx, chunk, start_step, n_steps):
    """Advance one chunk by n_steps; the per-chunk inner loop.

    The value stack is reassembled from the noise state on entry, which
    reproduces the incrementally updated stack bit for bit (rewrites are
    idempotent) and keeps the chunk's transfer payload small.
    """
    topology = ctx.topology
    model = ctx.model
    stepper = ctx.stepper
    dtype = np.dtype(ctx.dtype_name)
    psi = chunk.psi
    b = psi.shape[0]
    backend = stepper.backend
    events: list[NormEvent] = []
    event_count = 0
    corrections = 0
    max_deviation = 0.0
    evolution_seconds = 0.0

    clock = time.perf_counter
    t0 = clock()
    link_stack = site_stack = None
    if chunk.noise[0].n_links:
        link_stack = np.stack([p.link_values for p in chunk.noise])
    if chunk.noise[0].n_sites:
        site_stack = np.stack([p.site_values for p in chunk.noise])
    values_dtype = np.complex128 if backend == BACKEND_EIGEN else dtype
    values = assemble_values(
        topology, model, link_stack, site_stack, dtype=values_dtype
    )
    eigen = chunk.eigen
    if backend == BACKEND_EIGEN and eigen is None:
        eigen = [
            diagonalize(
                densify(ReducedHamiltonian(topology, model, values[r]), ctx.dense_cap)
            )
            for r in range(b)
        ]
    out = np.empty_like(psi)
    scratch = StepScratch(psi.shape, psi.dtype)
    hamiltonian_seconds = clock() - t0

    for s in range(n_steps):
        step_number = start_step + s + 1  # steps completed once this one ends

        t0 = clock()
        if backend == BACKEND_TAYLOR:
            step_taylor_values(
                topology, values, psi, stepper.dt, hbar=model.hbar,
                order=stepper.taylor_order, out=out, scratch=scratch,
            )
            psi, out = out, psi
        elif backend == BACKEND_RK4:
            step_rk4_values(
                topology, values, psi, stepper.dt, hbar=model.hbar,
                out=out, scratch=scratch,
            )
            psi, out = out, psi
        else:
            for r in range(b):
                psi[r] = step_eigen_values(
                    eigen[r], psi[r], stepper.dt, hbar=model.hbar
                )
        try:
            deviations, corrected = check_norm_stack(psi, stepper)
        except NormFailureError as exc:
            raise NormFailureError(
                exc.deviation,
                realization=chunk.r0 + (exc.realization or 0),
                step=step_number,
            ) from None
        worst = float(deviations.max())
        if worst > max_deviation:
            max_deviation = worst
        over = deviations > stepper.tol_norm
        if over.any():
            corrections += int(corrected.sum())
            for row in np.nonzero(over)[0]:
                event_count += 1
                if len(events) < MAX_EVENTS_PER_SEGMENT:
                    events.append(
                        NormEvent(
                            deviation=float(deviations[row]),
                            corrected=bool(corrected[row]),
                            realization=chunk.r0 + int(row),
                            step=step_number,
                        )
                    )
        evolution_seconds += clock() - t0

        t0 = clock()
        for r in range(b):
            delta = advance(chunk.noise[r], stepper.dt)
            if delta.changed:
                view = ReducedHamiltonian(topology, model, values[r])
                update(view, chunk.noise[r], delta)
                if backend == BACKEND_EIGEN:
                    eigen[r] = diagonalize(densify(view, ctx.dense_cap))
        hamiltonian_seconds += clock() - t0

    chunk.psi = psi
    chunk.eigen = eigen if backend == BACKEND_EIGEN else None
    stats = _SegmentStats(
        evolution_seconds=evolution_seconds,
        hamiltonian_seconds=hamiltonian_seconds,
        evolution_calls=b * n_steps,
        hamiltonian_calls=b * n_steps,
        events=events,
        event_count=event_count,
        corrections=corrections,
        max_deviation=max_deviation,
    )
    return chunk, stats


def _resolve_workers(config: RunConfig) -> int:
    if config.workers > 0:
        return config.workers
    env = os.environ.get(WORKERS_ENV)
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            value = 0
        if value < 1:
            raise ConfigurationError(
                f"{WORKERS_ENV}={env!r} is not a positive integer"
            )
        return value
    return os.cpu_count() or 1


# Cap on the per-chunk working set (state, swap and scratch buffers,
# value table, gather temporaries — roughly ten dim-sized rows per
# realization).  A chunk marches through a whole segment, so keeping it
# cache-sized makes stepping cost linear in R instead of bending upward
# once the monolithic batch spills to main memory.
CHUNK_STATE_BYTES = 24 * 2**20


def _max_chunk_rows(dim: int, itemsize: int) -> int:
    return max(16, CHUNK_STATE_BYTES // (dim * itemsize * 10))


def _chunk_count(config: RunConfig, workers: int) -> int:
    rows = _max_chunk_rows(config.space.dim, np.dtype(config.dtype).itemsize)
    by_size = -(-config.realizations // rows)
    return min(config.realizations, max(workers, by_size))


def _chunk_bounds(realizations: int, n_chunks: int):
    sizes = [
        realizations // n_chunks + (1 if i < realizations % n_chunks else 0)
        for i in range(n_chunks)
    ]
    bounds = []
    lo = 0
    for size in sizes:
        bounds.append((lo, lo + size))
        lo += size
    return bounds


def _observable_rows(config: RunConfig, rho: DensityMatrix):
    space = config.space
    rows: list[tuple[str, int, float]] = []
    for name in config.observables:
        if name == OBS_POPULATIONS:
            rows.extend(
                ("population", i, float(v))
                for i, v in enumerate(obs.populations(rho, space))
            )
        elif name == OBS_POSITION:
            stats = obs.position_variance(rho, space)
            rows.append(("position_mean", 0, stats.mean))
            rows.append(("position_variance", 0, stats.variance))
            rows.append(("position_wrapped", 0, float(stats.wrapped)))
        elif name == OBS_PURITY:
            rows.append(("purity", 0, obs.purity(rho)))
        elif name == OBS_PARTICIPATION:
            rows.append(("participation_ratio", 0, obs.participation_ratio(rho)))
        elif name == OBS_JOINT:
            rows.extend(
                ("joint_probability", i, float(v))
                for i, v in enumerate(obs.joint_distribution(rho))
            )
    return rows


def run(config: RunConfig, sinks: OutputSinks | None = None) -> RunReport:
    """Execute a full ensemble run.

    Raises on the failures that end a run (norm blow-up, capacity and
    budget violations); partial output already handed to the sinks stays
    there, and the exception names the offending realization and step
    where that makes sense.
    """
    if sinks is None:
        sinks = MemorySinks()
    profile = StageProfile()
    io_seconds = 0.0
    clock = time.perf_counter
    wall_start = clock()

    def emit(method, *args):
        nonlocal io_seconds
        t0 = clock()
        method(*args)
        io_seconds += clock() - t0

    with profile.stage(STAGE_INITIALIZATION):
        estimate = estimate_memory(config)
        if estimate["total_bytes"] > config.memory_budget:
            raise MemoryBudgetError(
                f"estimated working set {estimate['total_bytes']:,} bytes exceeds "
                f"the budget of {config.memory_budget:,}; lower realizations, "
                f"shrink the lattice, or raise memory_budget"
            )
        if config.stepper.backend == BACKEND_EIGEN and config.space.dim > config.dense_cap:
            raise CapacityError(
                f"the eigen backend needs a dense matrix; dimension "
                f"{config.space.dim} exceeds the cap {config.dense_cap}"
            )
        topology = build_topology(config.space)
        psi0 = build_initial_state(config.initial, config.space).astype(config.dtype)
        workers = _resolve_workers(config)
        n_chunks = _chunk_count(config, workers)
        chunks = []
        for lo, hi in _chunk_bounds(config.realizations, n_chunks):
            chunks.append(
                _ChunkState(
                    r0=lo,
                    psi=np.tile(psi0, (hi - lo, 1)),
                    noise=[
                        init_process(
                            config.noise, topology, seed=(config.master_seed, r)
                        )
                        for r in range(lo, hi)
                    ],
                )
            )
        ctx = _WorkerContext(
            topology=topology,
            model=config.model,
            stepper=config.stepper,
            dtype_name=np.dtype(config.dtype).name,
            dense_cap=config.dense_cap,
        )
        pool = None
        if workers > 1:
            pool = ProcessPoolExecutor(
                max_workers=workers,
                mp_context=multiprocessing.get_context("spawn"),
                initializer=_init_worker,
                initargs=(ctx,),
            )
            # Spin the pool up now so spawn and import cost lands in this
            # stage instead of the first evolution segment.
            list(pool.map(_ping, range(2 * workers)))
        else:
            _set_context(ctx)

    emit(
        sinks.message,
        f"run start: dim={config.space.dim} realizations={config.realizations} "
        f"steps={config.steps} backend={config.stepper.backend} "
        f"precision={config.precision} workers={workers} "
        f"snapshots={len(config.schedule)}",
    )

    snapshots = 0
    max_deviation = 0.0
    corrections = 0
    event_total = 0
    try:
        previous = 0
        for target in config.schedule:
            span = target - previous
            if span > 0:
                segment_start = clock()
                if pool is not None:
                    futures = [
                        pool.submit(_segment_task, c, previous, span) for c in chunks
                    ]
                    results = [f.result() for f in futures]
                else:
                    results = [_segment_task(c, previous, span) for c in chunks]
                chunks = [c for c, _ in results]
                stats = [s for _, s in results]
                segment_wall = clock() - segment_start
                evolution = sum(s.evolution_seconds for s in stats)
                hamiltonian = sum(s.hamiltonian_seconds for s in stats)
                # Anything the workers did not see from inside (chunk
                # pickling, scheduling) is transport for the evolution.
                gap = max(0.0, segment_wall - evolution - hamiltonian)
                profile.add(
                    STAGE_EVOLUTION,
                    evolution + gap,
                    calls=sum(s.evolution_calls for s in stats),
                )
                profile.add(
                    STAGE_HAMILTONIAN,
                    hamiltonian,
                    calls=sum(s.hamiltonian_calls for s in stats),
                )
                for s in stats:
                    corrections += s.corrections
                    event_total += s.event_count
                    if s.max_deviation > max_deviation:
                        max_deviation = s.max_deviation
                events = [e for s in stats for e in s.events]
                if events:
                    emit(sinks.norm_events, events)
            previous = target

            with profile.stage(STAGE_DENSITY):
                if len(chunks) == 1:
                    stack = chunks[0].psi
                else:
                    stack = np.concatenate([c.psi for c in chunks])
                rho = accumulate_density(
                    stack, time_tag=target * config.stepper.dt
                )
                rows = _observable_rows(config, rho)
            snapshots += 1
            emit(sinks.observable_rows, rho.time_tag, rows)
            emit(sinks.density_snapshot, rho, target)
    except NormFailureError as exc:
        emit(
            sinks.message,
            f"aborted: norm deviation {exc.deviation:.3e} at realization "
            f"{exc.realization}, step {exc.step}; reduce the time step",
        )
        raise
    finally:
        if pool is not None:
            pool.shutdown(wait=True, cancel_futures=True)

    switch_count = sum(p.switch_count for c in chunks for p in c.noise)
    report = RunReport(
        config=config,
        profile=profile,
        io_seconds=io_seconds,
        wall_seconds=clock() - wall_start,
        workers=workers,
        snapshots=snapshots,
        max_norm_deviation=max_deviation,
        norm_corrections=corrections,
        norm_events=event_total,
        switch_count=switch_count,
        memory_estimate=estimate,
    )
    emit(
        sinks.message,
        f"run end: snapshots={snapshots} corrections={corrections} "
        f"switches={switch_count} max_norm_deviation={max_deviation:.3e}",
    )
    sinks.finish(report)
    return report
