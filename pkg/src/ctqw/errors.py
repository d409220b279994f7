"""Exception hierarchy shared across the package.

Each class maps to one process exit code so the command line interface can
translate failures uniformly (see :mod:`ctqw.cli`).
"""


class CtqwError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigurationError(CtqwError):
    """Invalid or inconsistent configuration input."""

    exit_code = 2


class NumericError(CtqwError):
    """Numerical failure during a run (divergence, bad matrix, ...)."""

    exit_code = 3


class NormFailureError(NumericError):
    """Wavefunction norm drifted past the failure threshold.

    Carries enough context to name the offending realization and step in
    logs.  The advice string nudges the user toward a smaller time step,
    which is the usual cure.
    """

    def __init__(self, deviation, realization=None, step=None):
        self.deviation = float(deviation)
        self.realization = realization
        self.step = step
        where = ""
        if realization is not None:
            where = f" (realization {realization}, step {step})"
        super().__init__(
            f"norm deviation {self.deviation:.3e} exceeds the failure "
            f"threshold{where}; reduce the time step"
        )

    def __reduce__(self):
        # Keeps the constructor arguments through pickling (worker
        # processes hand these back through the executor).
        return (type(self), (self.deviation, self.realization, self.step))


class ConsistencyError(NumericError):
    """States handed to an aggregate disagree (e.g. mixed time tags)."""


class CapacityError(CtqwError):
    """Requested problem size exceeds a hard capacity limit."""

    exit_code = 4


class MemoryBudgetError(CapacityError):
    """Estimated working set exceeds the configured memory budget."""


class SnapshotFormatError(CtqwError):
    """Binary density snapshot failed validation on read."""

    exit_code = 5


class OutputError(CtqwError):
    """Filesystem output could not be written."""

    exit_code = 5
