"""Wall-clock accounting over the four canonical workflow stages.

Every run is split into initialization, per-step state evolution,
per-step Hamiltonian refresh, and density/post-processing work; the
profile keeps seconds and call counts per stage so benchmark sweeps can
compare how the shares shift with problem size and collection rate.
File output is deliberately not a stage; the engine reports it
separately so storage speed never pollutes the compute shares.
"""

from __future__ import annotations

import time
from contextlib import contextmanager

STAGE_INITIALIZATION = "initialization"
STAGE_EVOLUTION = "wavefunction_evolution"
STAGE_HAMILTONIAN = "hamiltonian_update"
STAGE_DENSITY = "density_and_postprocessing"
STAGES = (
    STAGE_INITIALIZATION,
    STAGE_EVOLUTION,
    STAGE_HAMILTONIAN,
    STAGE_DENSITY,
)


class StageProfile:
    """Accumulated seconds and call counts for the canonical stages."""

    def __init__(self):
        self._seconds = {name: 0.0 for name in STAGES}
        self._calls = {name: 0 for name in STAGES}

    def add(self, name: str, seconds: float, calls: int = 1):
        if name not in self._seconds:
            raise ValueError(f"unknown stage {name!r}; expected one of {STAGES}")
        self._seconds[name] += float(seconds)
        self._calls[name] += int(calls)

    @contextmanager
    def stage(self, name: str, calls: int = 1):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.add(name, time.perf_counter() - start, calls=calls)

    def seconds(self, name: str) -> float:
        return self._seconds[name]

    def calls(self, name: str) -> int:
        return self._calls[name]

    def total_seconds(self) -> float:
        return sum(self._seconds.values())

    def as_dict(self) -> dict:
        return {
            name: {"seconds": self._seconds[name], "calls": self._calls[name]}
            for name in STAGES
        }
