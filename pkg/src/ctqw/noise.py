"""Random telegraph noise on lattice elements.

Every tunneling link and/or on-site energy carries an independent
two-state-or-more fluctuator: it holds a level drawn from a discrete set,
waits an exponentially distributed time with mean ``1/rate``, then redraws
uniformly.  ``rate = 0`` degenerates to static disorder: the initial draw
is held for the whole run.

One :class:`NoiseProcess` belongs to one stochastic realization and owns
its own random generator, so realizations evolve independently and
reproducibly no matter how work is scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .hilbert import JointSpace, LatticeTopology, TopologyMatrix

NOISE_TUNNELING = "tunneling"
NOISE_ONSITE = "onsite"
NOISE_BOTH = "both"
_TARGETS = (NOISE_TUNNELING, NOISE_ONSITE, NOISE_BOTH)


@dataclass(frozen=True)
class NoiseSpec:
    """What fluctuates, between which levels, and how often.

    Attributes:
        target: which matrix elements carry noise ("tunneling", "onsite",
            or "both").
        levels: discrete level set sampled uniformly on each switch.
        rate: switching rate per unit time; 0 means static disorder.
    """

    target: str = NOISE_TUNNELING
    levels: tuple[float, ...] = (-0.1, 0.1)
    rate: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        object.__setattr__(self, "rate", float(self.rate))
        if self.target not in _TARGETS:
            raise ConfigurationError(
                f"noise target {self.target!r} not recognized; use one of {_TARGETS}"
            )
        if len(self.levels) == 0:
            raise ConfigurationError("noise level set is empty")
        if not all(np.isfinite(self.levels)):
            raise ConfigurationError("noise levels must be finite")
        if not np.isfinite(self.rate) or self.rate < 0:
            raise ConfigurationError(f"noise rate {self.rate} must be >= 0")

    @property
    def is_static(self) -> bool:
        return self.rate == 0.0

    @property
    def on_links(self) -> bool:
        return self.target in (NOISE_TUNNELING, NOISE_BOTH)

    @property
    def on_sites(self) -> bool:
        return self.target in (NOISE_ONSITE, NOISE_BOTH)


@dataclass
class NoiseDelta:
    """Report of one advance window: what actually changed value."""

    changed: bool
    links: np.ndarray   # link ids whose value differs from before the window
    sites: np.ndarray   # site ids whose value differs from before the window
    switches: int       # switch events processed, including same-level redraws


class NoiseProcess:
    """Telegraph state of every fluctuating element of one realization.

    Layout: a single flat array holds the link block (length ``n_links``)
    followed by the site block (length ``n_sites``); the blocks are views,
    so element values and scheduled switch times stay contiguous.
    """

    __slots__ = (
        "spec", "n_links", "n_sites", "values", "next_switch",
        "rng", "time", "switch_count", "_levels", "_mean_wait",
    )

    def __init__(self, spec, n_links, n_sites, values, next_switch, rng, time=0.0):
        self.spec = spec
        self.n_links = n_links
        self.n_sites = n_sites
        self.values = values
        self.next_switch = next_switch
        self.rng = rng
        self.time = time
        self.switch_count = 0
        self._levels = np.asarray(spec.levels, dtype=np.float64)
        self._mean_wait = np.inf if spec.is_static else 1.0 / spec.rate

    @property
    def link_values(self) -> np.ndarray:
        return self.values[: self.n_links]

    @property
    def site_values(self) -> np.ndarray:
        return self.values[self.n_links:]

    def __getstate__(self):
        return {name: getattr(self, name) for name in self.__slots__}

    def __setstate__(self, state):
        for name, value in state.items():
            setattr(self, name, value)


def _element_counts(spec: NoiseSpec, lattice: LatticeTopology):
    n_links = lattice.n_sites * lattice.moves_half if spec.on_links else 0
    n_sites = lattice.n_sites if spec.on_sites else 0
    return n_links, n_sites


def init_process(spec: NoiseSpec, where, seed) -> NoiseProcess:
    """Draw the initial disorder and schedule first switches.

    Args:
        spec: noise description.
        where: the lattice the noise lives on; a :class:`LatticeTopology`,
            :class:`JointSpace`, or :class:`TopologyMatrix` all work.
        seed: seed for this realization's private generator.

    Returns:
        A fresh process at time 0.  With ``rate = 0`` no switch is ever
        scheduled and the initial draw is permanent.
    """
    if isinstance(where, TopologyMatrix):
        lattice = where.space.lattice
    elif isinstance(where, JointSpace):
        lattice = where.lattice
    elif isinstance(where, LatticeTopology):
        lattice = where
    else:
        raise ConfigurationError(f"cannot take a lattice from {type(where).__name__}")

    n_links, n_sites = _element_counts(spec, lattice)
    total = n_links + n_sites
    rng = np.random.default_rng(seed)
    levels = np.asarray(spec.levels, dtype=np.float64)
    values = rng.choice(levels, size=total)
    if spec.is_static:
        next_switch = np.full(total, np.inf)
    else:
        next_switch = rng.exponential(1.0 / spec.rate, size=total)
    return NoiseProcess(spec, n_links, n_sites, values, next_switch, rng)


_EMPTY = np.empty(0, dtype=np.int64)


def advance(process: NoiseProcess, dt: float) -> NoiseDelta:
    """Advance the process over the window ``(time, time + dt]``.

    Processes every scheduled switch inside the window in order, redrawing
    the level and rescheduling each time; an element may switch more than
    once.  Returns which elements ended the window at a different value
    than they entered it, so a caller can do strictly incremental updates
    downstream.

    Args:
        process: state to mutate in place.
        dt: window length, must be >= 0.
    """
    if dt < 0:
        raise ConfigurationError(f"advance window dt = {dt} must be >= 0")
    t_end = process.time + dt
    if process.spec.is_static or process.values.size == 0:
        process.time = t_end
        return NoiseDelta(False, _EMPTY, _EMPTY, 0)

    due = process.next_switch <= t_end
    if not due.any():
        process.time = t_end
        return NoiseDelta(False, _EMPTY, _EMPTY, 0)

    before = process.values.copy()
    n_switches = 0
    idx = np.nonzero(due)[0]
    while idx.size:
        n_switches += idx.size
        process.values[idx] = process.rng.choice(process._levels, size=idx.size)
        process.next_switch[idx] += process.rng.exponential(
            process._mean_wait, size=idx.size
        )
        idx = idx[process.next_switch[idx] <= t_end]

    process.time = t_end
    process.switch_count += n_switches
    changed = process.values != before
    links = np.nonzero(changed[: process.n_links])[0]
    sites = np.nonzero(changed[process.n_links:])[0]
    return NoiseDelta(bool(links.size or sites.size), links, sites, n_switches)
