"""Command line interface: configuration files, reports, benchmarks.

Subcommands:

* ``simulate``: one ensemble run from a TOML config; writes
  ``observables.csv``, ``profile.json``, ``run.log``, optional binary
  density snapshots, and rendered figures into the output directory.
* ``benchmark``: sweep lattice size / collection rate / realization
  count over a config template; writes ``benchmark.csv`` plus figures,
  recording per-point failures without stopping the sweep.
* ``validate``: self-contained consistency checks, one pass/fail line
  each.

Exit codes: 0 success, 2 configuration, 3 numerical failure, 4 capacity
or memory budget, 5 input/output, 1 anything unexpected.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import struct
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python 3.10
    import tomli as tomllib

from . import figures
from .density import DensityMatrix, packed_length
from .ensemble import (
    InitialStateSpec,
    MemorySinks,
    OutputSinks,
    PRECISIONS,
    RunConfig,
    RunReport,
    build_initial_state,
    run,
)
from .errors import (
    ConfigurationError,
    CtqwError,
    NumericError,
    OutputError,
    SnapshotFormatError,
)
from .hamiltonian import CouplingModel, apply, assemble, densify
from .hilbert import JointSpace, build_lattice, build_topology
from .noise import NoiseSpec
from .profiling import STAGES, StageProfile
from .propagators import (
    BACKENDS,
    StepperConfig,
    check_norm_stack,
    diagonalize,
    step_eigen,
    step_rk4,
    step_taylor,
)
from .propagators import WaveFunction

SNAPSHOT_MAGIC = b"CTQWRHO1"
# magic, dim, bytes per scalar component, pad, time tag, samples, pad
_SNAPSHOT_HEADER = struct.Struct("<8sIB3xdI4x")

OBSERVABLES_CSV = "observables.csv"
BENCHMARK_CSV = "benchmark.csv"
PROFILE_JSON = "profile.json"
RUN_LOG = "run.log"

_CSV_HEADER = "time,name,component_index,value\n"
_BENCH_COLUMNS = (
    "joint_dim", "lattice_extent", "post_rate", "realizations", "repetition",
    "total_seconds", "initialization_seconds", "wavefunction_evolution_seconds",
    "hamiltonian_update_seconds", "density_and_postprocessing_seconds",
    "io_seconds", "snapshots", "switch_count", "norm_corrections",
)


@dataclass(frozen=True)
class BenchmarkPlan:
    """Sweep axes for the benchmark subcommand."""

    sizes: tuple[int, ...]
    post_rates: tuple[int, ...]
    realizations: tuple[int, ...]
    repetitions: int = 1

    def __post_init__(self):
        for name, values in (
            ("bench_sizes", self.sizes),
            ("bench_post_rates", self.post_rates),
            ("bench_realizations", self.realizations),
        ):
            if not values:
                raise ConfigurationError(f"{name} must not be empty")
            if any(v < 1 for v in values):
                raise ConfigurationError(f"{name} entries must be >= 1")
        if self.repetitions < 1:
            raise ConfigurationError("bench_repetitions must be >= 1")

    @property
    def points(self) -> int:
        return (
            len(self.sizes) * len(self.post_rates) * len(self.realizations)
            * self.repetitions
        )


@dataclass
class LoadedConfig:
    """Everything a config file describes: the run plus output options."""

    run_config: RunConfig
    benchmark: BenchmarkPlan | None
    snapshots: bool
    snapshot_precision: str
    echo: dict


# --- config file parsing ---------------------------------------------------

def _reject_bool(key, value):
    if isinstance(value, bool):
        raise ConfigurationError(f"config key {key!r} expects a number, got a boolean")


def _as_int(key, value) -> int:
    _reject_bool(key, value)
    if not isinstance(value, int):
        raise ConfigurationError(f"config key {key!r} expects an integer, got {value!r}")
    return value


def _as_float(key, value) -> float:
    _reject_bool(key, value)
    if not isinstance(value, (int, float)):
        raise ConfigurationError(f"config key {key!r} expects a number, got {value!r}")
    return float(value)


def _as_bool(key, value) -> bool:
    if not isinstance(value, bool):
        raise ConfigurationError(f"config key {key!r} expects a boolean, got {value!r}")
    return value


def _as_str(key, value) -> str:
    if not isinstance(value, str):
        raise ConfigurationError(f"config key {key!r} expects a string, got {value!r}")
    return value


def _as_int_list(key, value) -> list[int]:
    if isinstance(value, int) and not isinstance(value, bool):
        return [value]
    if isinstance(value, list) and value:
        return [_as_int(key, v) for v in value]
    raise ConfigurationError(
        f"config key {key!r} expects an integer or a non-empty list of integers"
    )


def _as_float_list(key, value) -> list[float]:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [float(value)]
    if isinstance(value, list) and value:
        return [_as_float(key, v) for v in value]
    raise ConfigurationError(
        f"config key {key!r} expects a number or a non-empty list of numbers"
    )


def _as_str_list(key, value) -> list[str]:
    if isinstance(value, str):
        return [value]
    if isinstance(value, list) and value:
        return [_as_str(key, v) for v in value]
    raise ConfigurationError(
        f"config key {key!r} expects a string or a non-empty list of strings"
    )


_KNOWN_KEYS = (
    "dims", "m", "k_half", "boundary",
    "onsite_energy", "tunneling", "interaction", "hbar",
    "noise_target", "noise_levels", "noise_rate",
    "backend", "dt", "taylor_order", "tol_norm", "tol_fail", "renormalize",
    "R", "steps", "post_rate", "master_seed", "workers", "precision",
    "observables", "memory_budget_mb", "dense_cap",
    "initial_kind", "initial_positions",
    "snapshots", "snapshot_precision",
    "bench_sizes", "bench_post_rates", "bench_realizations", "bench_repetitions",
)


def load_config(path) -> LoadedConfig:
    """Parse and validate a flat TOML run description."""
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path} does not exist") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid TOML: {exc}") from None

    unknown = sorted(set(raw) - set(_KNOWN_KEYS))
    if unknown:
        raise ConfigurationError(
            f"unknown config keys {unknown}; valid keys are {sorted(_KNOWN_KEYS)}"
        )
    if "dims" not in raw:
        raise ConfigurationError("config key 'dims' is required")

    dims = _as_int_list("dims", raw["dims"])
    q = len(dims)
    k_half = _as_int_list("k_half", raw["k_half"]) if "k_half" in raw else [1] * q
    lattice = build_lattice(
        dims, k_half=k_half, boundary=_as_str("boundary", raw.get("boundary", "periodic"))
    )
    space = JointSpace(lattice=lattice, m=_as_int("m", raw.get("m", 1)))

    tunneling = raw.get("tunneling", 1.0)
    if isinstance(tunneling, list):
        tunneling = tuple(_as_float_list("tunneling", tunneling))
    else:
        tunneling = _as_float("tunneling", tunneling)
    model = CouplingModel(
        onsite_energy=_as_float("onsite_energy", raw.get("onsite_energy", 0.0)),
        tunneling=tunneling,
        interaction=_as_float("interaction", raw.get("interaction", 0.0)),
        hbar=_as_float("hbar", raw.get("hbar", 1.0)),
    )
    noise = NoiseSpec(
        target=_as_str("noise_target", raw.get("noise_target", "tunneling")),
        levels=tuple(_as_float_list("noise_levels", raw.get("noise_levels", [-0.1, 0.1]))),
        rate=_as_float("noise_rate", raw.get("noise_rate", 0.1)),
    )
    stepper = StepperConfig(
        backend=_as_str("backend", raw.get("backend", "taylor")),
        dt=_as_float("dt", raw.get("dt", 0.05)),
        taylor_order=_as_int("taylor_order", raw.get("taylor_order", 4)),
        tol_norm=_as_float("tol_norm", raw.get("tol_norm", 1e-6)),
        tol_fail=_as_float("tol_fail", raw.get("tol_fail", 1e-3)),
        renormalize=_as_bool("renormalize", raw.get("renormalize", True)),
    )
    positions = raw.get("initial_positions")
    initial = InitialStateSpec(
        kind=_as_str("initial_kind", raw.get("initial_kind", "auto")),
        positions=tuple(_as_int_list("initial_positions", positions))
        if positions is not None
        else None,
    )
    observables = raw.get("observables")
    run_config = RunConfig(
        space=space,
        model=model,
        noise=noise,
        stepper=stepper,
        initial=initial,
        realizations=_as_int("R", raw.get("R", 1000)),
        steps=_as_int("steps", raw.get("steps", 1500)),
        post_rate=_as_int("post_rate", raw.get("post_rate", 10)),
        master_seed=_as_int("master_seed", raw.get("master_seed", 1234)),
        workers=_as_int("workers", raw.get("workers", 0)),
        precision=_as_str("precision", raw.get("precision", "single")),
        observables=tuple(_as_str_list("observables", observables))
        if observables is not None
        else None,
        memory_budget=_as_int("memory_budget_mb", raw.get("memory_budget_mb", 4096))
        * 2**20,
        dense_cap=_as_int("dense_cap", raw.get("dense_cap", 4096)),
    )

    benchmark = None
    if "bench_sizes" in raw:
        benchmark = BenchmarkPlan(
            sizes=tuple(_as_int_list("bench_sizes", raw["bench_sizes"])),
            post_rates=tuple(
                _as_int_list("bench_post_rates", raw["bench_post_rates"])
            )
            if "bench_post_rates" in raw
            else (run_config.post_rate,),
            realizations=tuple(
                _as_int_list("bench_realizations", raw["bench_realizations"])
            )
            if "bench_realizations" in raw
            else (run_config.realizations,),
            repetitions=_as_int(
                "bench_repetitions", raw.get("bench_repetitions", 1)
            ),
        )

    snapshot_precision = _as_str(
        "snapshot_precision", raw.get("snapshot_precision", "double")
    )
    if snapshot_precision not in PRECISIONS:
        raise ConfigurationError(
            f"snapshot_precision {snapshot_precision!r} must be one of {PRECISIONS}"
        )

    echo = {
        "dims": dims,
        "m": space.m,
        "k_half": k_half,
        "boundary": lattice.boundary,
        "joint_dim": space.dim,
        "onsite_energy": model.onsite_energy,
        "tunneling": model.tunneling,
        "interaction": model.interaction,
        "hbar": model.hbar,
        "noise_target": noise.target,
        "noise_levels": list(noise.levels),
        "noise_rate": noise.rate,
        "backend": stepper.backend,
        "dt": stepper.dt,
        "taylor_order": stepper.taylor_order,
        "tol_norm": stepper.tol_norm,
        "tol_fail": stepper.tol_fail,
        "renormalize": stepper.renormalize,
        "R": run_config.realizations,
        "steps": run_config.steps,
        "post_rate": run_config.post_rate,
        "master_seed": run_config.master_seed,
        "workers": run_config.workers,
        "precision": run_config.precision,
        "observables": list(run_config.observables),
        "memory_budget_mb": run_config.memory_budget // 2**20,
        "dense_cap": run_config.dense_cap,
        "initial_kind": initial.kind,
        "initial_positions": list(initial.positions) if initial.positions else None,
        "snapshots": _as_bool("snapshots", raw.get("snapshots", False)),
        "snapshot_precision": snapshot_precision,
    }
    return LoadedConfig(
        run_config=run_config,
        benchmark=benchmark,
        snapshots=echo["snapshots"],
        snapshot_precision=snapshot_precision,
        echo=echo,
    )


# --- binary density snapshots ----------------------------------------------

def write_density_snapshot(rho: DensityMatrix, path, precision: str = "double"):
    """Write the packed triangle to a compact self-describing binary file.

    Layout: a 32-byte header (magic, dimension, bytes per scalar, time
    tag, sample count) followed by the lower triangle row-major as
    little-endian complex pairs at the chosen precision.
    """
    if precision not in PRECISIONS:
        raise ConfigurationError(
            f"snapshot precision {precision!r} must be one of {PRECISIONS}"
        )
    scalar_bytes = 4 if precision == "single" else 8
    payload_dtype = "<c8" if scalar_bytes == 4 else "<c16"
    time_tag = rho.time_tag if np.isfinite(rho.time_tag) else 0.0
    header = _SNAPSHOT_HEADER.pack(
        SNAPSHOT_MAGIC, rho.dim, scalar_bytes, float(time_tag), rho.sample_count
    )
    payload = np.ascontiguousarray(rho.packed.astype(payload_dtype)).tobytes()
    path = Path(path)
    try:
        with open(path, "wb") as handle:
            handle.write(header)
            handle.write(payload)
    except OSError as exc:
        raise OutputError(f"cannot write snapshot {path}: {exc}") from exc


def read_density_snapshot(path) -> DensityMatrix:
    """Read and validate a snapshot written by :func:`write_density_snapshot`."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise SnapshotFormatError(f"cannot read snapshot {path}: {exc}") from exc
    if len(blob) < _SNAPSHOT_HEADER.size:
        raise SnapshotFormatError(f"snapshot {path} is shorter than its header")
    magic, dim, scalar_bytes, time_tag, samples = _SNAPSHOT_HEADER.unpack_from(blob)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotFormatError(f"snapshot {path} has wrong magic {magic!r}")
    if scalar_bytes not in (4, 8):
        raise SnapshotFormatError(
            f"snapshot {path} declares unsupported precision {scalar_bytes}"
        )
    if dim < 1:
        raise SnapshotFormatError(f"snapshot {path} declares dimension {dim}")
    expected = packed_length(dim) * 2 * scalar_bytes
    payload = blob[_SNAPSHOT_HEADER.size:]
    if len(payload) != expected:
        raise SnapshotFormatError(
            f"snapshot {path}: payload is {len(payload)} bytes but dimension "
            f"{dim} requires {expected}"
        )
    dtype = "<c8" if scalar_bytes == 4 else "<c16"
    packed = np.frombuffer(payload, dtype=dtype).astype(np.complex128)
    return DensityMatrix(
        packed=packed, dim=dim, sample_count=samples, time_tag=time_tag
    )


# --- file sinks ------------------------------------------------------------

def _format_float(value: float) -> str:
    # repr round-trips doubles exactly and produces stable text.
    return repr(float(value))


class FileSinks(OutputSinks):
    """Streams run output into an output directory."""

    def __init__(self, out_dir: Path, logger, snapshots=False,
                 snapshot_precision="double"):
        self.out_dir = Path(out_dir)
        self.logger = logger
        self.snapshots = snapshots
        self.snapshot_precision = snapshot_precision
        self.rows: list[tuple[float, str, int, float]] = []
        self.snapshot_paths: list[Path] = []
        self.report: RunReport | None = None
        try:
            self._csv = open(self.out_dir / OBSERVABLES_CSV, "w", encoding="utf-8")
            self._csv.write(_CSV_HEADER)
        except OSError as exc:
            raise OutputError(f"cannot write into {out_dir}: {exc}") from exc

    def observable_rows(self, time_tag, rows):
        stamp = _format_float(time_tag)
        for name, idx, value in rows:
            self._csv.write(f"{stamp},{name},{idx},{_format_float(value)}\n")
        self.rows.extend((time_tag, name, idx, value) for name, idx, value in rows)

    def density_snapshot(self, rho, step):
        if not self.snapshots:
            return
        path = self.out_dir / f"density_step{step:06d}.bin"
        write_density_snapshot(rho, path, precision=self.snapshot_precision)
        self.snapshot_paths.append(path)
        self.logger.info("snapshot: %s (dim %d)", path.name, rho.dim)

    def norm_events(self, events):
        for event in events:
            self.logger.warning(
                "norm excursion %.3e at realization %s step %s%s",
                event.deviation, event.realization, event.step,
                " (rescaled)" if event.corrected else "",
            )

    def message(self, text):
        self.logger.info("%s", text)

    def finish(self, report):
        self.report = report
        self.close()

    def close(self):
        if not self._csv.closed:
            self._csv.flush()
            self._csv.close()


def _make_logger(out_dir: Path) -> logging.Logger:
    # A free-standing logger (not from the registry) so repeated runs in
    # one process never stack handlers.
    logger = logging.Logger("ctqw-run", level=logging.INFO)
    handler = logging.FileHandler(out_dir / RUN_LOG, encoding="utf-8")
    handler.setFormatter(
        logging.Formatter("%(asctime)s %(levelname)s %(message)s")
    )
    logger.addHandler(handler)
    return logger


def _close_logger(logger):
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)


def _profile_payload(report: RunReport) -> dict:
    return {
        "stages": report.profile.as_dict(),
        "stage_seconds_total": report.profile.total_seconds(),
        "io_seconds": report.io_seconds,
        "wall_seconds": report.wall_seconds,
        "workers": report.workers,
        "realizations": report.config.realizations,
        "steps": report.config.steps,
        "snapshots": report.snapshots,
        "joint_dim": report.config.space.dim,
        "backend": report.config.stepper.backend,
        "precision": report.config.precision,
        "switch_count": report.switch_count,
        "norm_corrections": report.norm_corrections,
        "norm_events": report.norm_events,
        "max_norm_deviation": report.max_norm_deviation,
        "memory_estimate": report.memory_estimate,
    }


def simulate(loaded: LoadedConfig, out_dir, render_figures: bool = True) -> int:
    """Run one simulation and write the report files; returns exit code."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out_dir}: {exc}") from exc
    logger = _make_logger(out_dir)
    sinks = None
    try:
        for key, value in loaded.echo.items():
            logger.info("config: %s = %s", key, value)
        sinks = FileSinks(
            out_dir, logger, snapshots=loaded.snapshots,
            snapshot_precision=loaded.snapshot_precision,
        )
        try:
            report = run(loaded.run_config, sinks)
        except CtqwError as exc:
            logger.error("run failed: %s", exc)
            print(f"error: {exc}", file=sys.stderr)
            return exc.exit_code

        payload = _profile_payload(report)
        with open(out_dir / PROFILE_JSON, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, indent=2, sort_keys=True)
            handle.write("\n")
        written = [OBSERVABLES_CSV, PROFILE_JSON, RUN_LOG]
        written += [p.name for p in sinks.snapshot_paths]
        if render_figures:
            for figure_path in figures.render_observables(sinks.rows, out_dir):
                written.append(figure_path.name)
        logger.info("wrote: %s", ", ".join(written))
        print(
            f"simulate: {report.snapshots} snapshots, "
            f"{report.wall_seconds:.2f}s wall, outputs in {out_dir}"
        )
        return 0
    finally:
        if sinks is not None:
            sinks.close()
        _close_logger(logger)


def benchmark(loaded: LoadedConfig, out_dir, render_figures: bool = True) -> int:
    """Sweep the benchmark plan; one CSV row per completed point."""
    if loaded.benchmark is None:
        raise ConfigurationError(
            "benchmark needs bench_sizes in the config file"
        )
    plan = loaded.benchmark
    base = loaded.run_config
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out_dir}: {exc}") from exc
    logger = _make_logger(out_dir)
    records: list[dict] = []
    failures = 0
    try:
        logger.info(
            "benchmark: %d points (sizes=%s post_rates=%s realizations=%s reps=%d)",
            plan.points, list(plan.sizes), list(plan.post_rates),
            list(plan.realizations), plan.repetitions,
        )
        for extent in plan.sizes:
            for post_rate in plan.post_rates:
                for realizations in plan.realizations:
                    for repetition in range(plan.repetitions):
                        record = _benchmark_point(
                            base, extent, post_rate, realizations, repetition, logger
                        )
                        if record is None:
                            failures += 1
                        else:
                            records.append(record)
        try:
            with open(out_dir / BENCHMARK_CSV, "w", encoding="utf-8") as handle:
                handle.write(",".join(_BENCH_COLUMNS) + "\n")
                for record in records:
                    handle.write(
                        ",".join(_format_cell(record[c]) for c in _BENCH_COLUMNS)
                        + "\n"
                    )
        except OSError as exc:
            raise OutputError(f"cannot write benchmark table: {exc}") from exc
        if render_figures and records:
            figures.render_benchmark(records, out_dir)
        logger.info(
            "benchmark done: %d rows, %d failures", len(records), failures
        )
        print(
            f"benchmark: {len(records)} points completed, {failures} failed, "
            f"outputs in {out_dir}"
        )
        return 0
    finally:
        _close_logger(logger)


def _format_cell(value) -> str:
    if isinstance(value, float):
        return _format_float(value)
    return str(value)


def _benchmark_point(base, extent, post_rate, realizations, repetition, logger):
    q = base.space.lattice.q
    try:
        lattice = build_lattice(
            [extent] * q,
            k_half=base.space.lattice.k_half,
            boundary=base.space.lattice.boundary,
        )
        space = JointSpace(lattice=lattice, m=base.space.m)
        config = dataclasses.replace(
            base,
            space=space,
            post_rate=post_rate,
            realizations=realizations,
        )
        started = time.perf_counter()
        report = run(config, MemorySinks(keep_densities=False))
        elapsed = time.perf_counter() - started
    except CtqwError as exc:
        logger.error(
            "benchmark point failed (extent=%d post_rate=%d R=%d rep=%d): %s",
            extent, post_rate, realizations, repetition, exc,
        )
        return None
    profile = report.profile
    record = {
        "joint_dim": config.space.dim,
        "lattice_extent": extent,
        "post_rate": post_rate,
        "realizations": realizations,
        "repetition": repetition,
        "total_seconds": elapsed,
        "io_seconds": report.io_seconds,
        "snapshots": report.snapshots,
        "switch_count": report.switch_count,
        "norm_corrections": report.norm_corrections,
    }
    for stage in STAGES:
        record[f"{stage}_seconds"] = profile.seconds(stage)
    logger.info(
        "benchmark point: extent=%d post_rate=%d R=%d rep=%d total=%.3fs",
        extent, post_rate, realizations, repetition, elapsed,
    )
    return record


# --- validate --------------------------------------------------------------

def _check_topology_pairing():
    space = JointSpace(lattice=build_lattice([7]), m=2)
    topo = build_topology(space)
    h = topo.half
    for j in range(1, h + 1):
        beta = topo.indices[:, h + j]
        if not np.array_equal(topo.indices[beta, j], np.arange(space.dim)):
            return "negative slots do not mirror positive partners"
    if not np.all(topo.valid_count == 2 * h):
        return "periodic ring rows must have m*k valid neighbors"
    return None


def _check_hermitian_apply():
    space = JointSpace(lattice=build_lattice([5, 4], k_half=[1, 1]), m=2)
    topo = build_topology(space)
    from .noise import init_process

    noise = init_process(
        NoiseSpec(target="both", levels=(-0.2, 0.2), rate=1.0), topo, seed=11
    )
    h = assemble(topo, CouplingModel(interaction=1.3), noise=noise)
    dense = densify(h)
    if np.abs(dense - dense.conj().T).max() != 0.0:
        return "dense expansion is not exactly Hermitian"
    rng = np.random.default_rng(0)
    psi = rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim)
    defect = np.abs(apply(h, psi) - dense @ psi).max()
    if defect > 1e-12:
        return f"reduced apply deviates from dense product by {defect:.3e}"
    return None


def _check_taylor_rk4_coincidence():
    space = JointSpace(lattice=build_lattice([8]), m=2)
    topo = build_topology(space)
    h = assemble(topo, CouplingModel(interaction=0.8))
    rng = np.random.default_rng(1)
    psi = rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim)
    psi /= np.linalg.norm(psi)
    a = step_taylor(h, psi, 0.05, order=4)
    b = step_rk4(h, psi, 0.05)
    defect = np.abs(a - b).max()
    if defect > 1e-12:
        return f"4th-order series and Runge-Kutta differ by {defect:.3e}"
    return None


def _check_eigen_norm():
    space = JointSpace(lattice=build_lattice([6]), m=2)
    topo = build_topology(space)
    h = assemble(topo, CouplingModel(interaction=2.0))
    decomp = diagonalize(densify(h))
    psi = WaveFunction(build_initial_state(InitialStateSpec(), space))
    for _ in range(300):
        psi = step_eigen(decomp, psi, 0.1)
    drift = abs(psi.norm() ** 2 - 1.0)
    if drift > 1e-10:
        return f"spectral propagation drifted the norm by {drift:.3e}"
    return None


def _tiny_run_config():
    return RunConfig(
        space=JointSpace(lattice=build_lattice([7]), m=1),
        noise=NoiseSpec(levels=(-0.2, 0.2), rate=1.0),
        stepper=StepperConfig(dt=0.05),
        realizations=4,
        steps=12,
        post_rate=6,
        precision="double",
        workers=1,
    )


def _check_run_determinism():
    a, b = MemorySinks(), MemorySinks()
    run(_tiny_run_config(), a)
    run(_tiny_run_config(), b)
    if a.rows != b.rows:
        return "identical configs produced different observables"
    for x, y in zip(a.densities, b.densities):
        if not np.array_equal(x.packed, y.packed):
            return "identical configs produced different densities"
    return None


def _check_density_physicality():
    sinks = MemorySinks()
    run(_tiny_run_config(), sinks)
    rho = sinks.densities[-1]
    if abs(rho.trace() - 1.0) > 1e-6:
        return f"trace {rho.trace():.8f} strays from one"
    spectrum = np.linalg.eigvalsh(rho.dense())
    if spectrum.min() < -1e-10:
        return f"negative probability weight {spectrum.min():.3e}"
    return None


_VALIDATION_CHECKS = (
    ("topology_pairing", _check_topology_pairing),
    ("hermitian_apply", _check_hermitian_apply),
    ("taylor_rk4_coincidence", _check_taylor_rk4_coincidence),
    ("eigen_norm_preservation", _check_eigen_norm),
    ("run_determinism", _check_run_determinism),
    ("density_physicality", _check_density_physicality),
)


def validate() -> int:
    """Run the built-in consistency checks; exit 0 only if all pass."""
    failed = 0
    for name, check in _VALIDATION_CHECKS:
        try:
            detail = check()
        except Exception as exc:  # a crashed check is a failed check
            detail = f"raised {type(exc).__name__}: {exc}"
        if detail is None:
            print(f"{name}: PASS")
        else:
            failed += 1
            print(f"{name}: FAIL ({detail})")
    if failed:
        print(f"validate: {failed} of {len(_VALIDATION_CHECKS)} checks failed")
        return NumericError.exit_code
    print(f"validate: all {len(_VALIDATION_CHECKS)} checks passed")
    return 0


# --- entry point -----------------------------------------------------------

def _apply_overrides(loaded: LoadedConfig, args) -> LoadedConfig:
    config = loaded.run_config
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigurationError("--workers must be >= 1")
        changes["workers"] = args.workers
    if args.precision is not None:
        changes["precision"] = args.precision
    if getattr(args, "backend", None) is not None:
        changes["stepper"] = dataclasses.replace(
            config.stepper, backend=args.backend
        )
    if changes:
        config = dataclasses.replace(config, **changes)
    snapshots = loaded.snapshots or getattr(args, "snapshots", False)
    echo = dict(loaded.echo)
    echo.update(
        master_seed=config.master_seed, workers=config.workers,
        precision=config.precision, backend=config.stepper.backend,
        snapshots=snapshots,
    )
    return LoadedConfig(
        run_config=config,
        benchmark=loaded.benchmark,
        snapshots=snapshots,
        snapshot_precision=loaded.snapshot_precision,
        echo=echo,
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctqw",
        description="Ensemble simulator for continuous-time quantum walks "
        "on noisy lattices",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML run description")
        p.add_argument(
            "--out", default="ctqw_out", help="output directory (default ctqw_out)"
        )
        p.add_argument("--workers", type=int, help="worker process count")
        p.add_argument(
            "--precision", choices=PRECISIONS, help="state precision override"
        )
        p.add_argument(
            "--no-figures", action="store_true", help="skip figure rendering"
        )

    sim = sub.add_parser("simulate", help="run one ensemble simulation")
    common(sim)
    sim.add_argument("--seed", type=int, help="master seed override")
    sim.add_argument("--backend", choices=BACKENDS, help="stepper backend override")
    sim.add_argument(
        "--snapshots", action="store_true",
        help="write binary density snapshots at every collection",
    )

    bench = sub.add_parser("benchmark", help="sweep sizes and collection rates")
    common(bench)
    bench.add_argument("--seed", type=int, help="master seed override")

    sub.add_parser("validate", help="run built-in consistency checks")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return validate()
        loaded = _apply_overrides(load_config(args.config), args)
        if args.command == "simulate":
            return simulate(loaded, args.out, render_figures=not args.no_figures)
        return benchmark(loaded, args.out, render_figures=not args.no_figures)
    except CtqwError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
