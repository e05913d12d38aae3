"""Synthetic photon-count time series of the beat measurement.

Random numbers come from numpy's PCG64 bit generator. Every run is seeded by
``SeedSequence(seed, spawn_key=(point, run))``, so a run is reproducible on its
own and a scan gives identical output whether generated sequentially or in
parallel.
"""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .beatmodel import beat_waveform
from .crystal import TrapConfig, axial_freq_for_spacing, normal_modes, thermal_state, two_ion_spacing

DEFAULT_BIN_WIDTH = 0.05  # s
DEFAULT_DURATION = 50.0  # s
DEFAULT_SCAN_POINTS = 33
DEFAULT_RUNS_PER_POINT = 5


@dataclass(frozen=True)
class Scenario:
    trap: TrapConfig
    n_ions: int = 2
    temperature: float = 3.7e-3  # K
    bin_width: float = DEFAULT_BIN_WIDTH
    duration: float = DEFAULT_DURATION
    mean_counts_per_bin: float = 50.0
    contrast: float = 1.0  # B/A before thermal reduction
    phase_diffusion: float = 0.0  # rad^2/s
    seed: int = 0

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")
        if not self.duration >= self.bin_width:
            raise ValueError("duration must be at least one bin")
        if not self.mean_counts_per_bin > 0:
            raise ValueError("mean_counts_per_bin must be positive")
        if not 0 <= self.contrast <= 1:
            raise ValueError("contrast must lie in [0, 1]")
        if self.phase_diffusion < 0:
            raise ValueError("phase_diffusion must be non-negative")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")

    @property
    def n_bins(self) -> int:
        return int(round(self.duration / self.bin_width))

    @property
    def baseline_rate(self) -> float:
        return self.mean_counts_per_bin / self.bin_width

    def digest(self) -> str:
        """Short stable identifier of the scenario contents."""
        text = repr(sorted(_flatten(asdict(self)).items()))
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out.update(_flatten(v, prefix + k + "."))
        else:
            out[prefix + k] = repr(v)
    return out


@dataclass(frozen=True)
class FluorescenceRun:
    """Binned detector counts.

    ``counts`` is integer-valued for noisy runs; noiseless runs keep the exact
    per-bin means as floats.
    """

    bin_width: float
    counts: np.ndarray = field(repr=False)
    scenario_digest: str = "measured"

    def __post_init__(self):
        counts = np.array(self.counts)
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def times(self) -> np.ndarray:
        """Bin-centre times in seconds."""
        return (np.arange(len(self.counts)) + 0.5) * self.bin_width

    @property
    def duration(self) -> float:
        return len(self.counts) * self.bin_width


@dataclass(frozen=True)
class ScanRun:
    point: int
    run_index: int
    distance: float  # m, two-ion spacing for the point's trap frequency
    axial_freq: float  # rad/s
    run: FluorescenceRun


def _beat_fn(scenario: Scenario):
    modes = normal_modes(scenario.n_ions, scenario.trap)
    thermal = thermal_state(modes, scenario.temperature)

    def beat(t, phi):
        return beat_waveform(modes, thermal, scenario.trap, t, phi)

    return beat


def expected_rate(scenario: Scenario, t, phi_t=0.0):
    """Detected rate baseline * (1 + contrast * beat) in counts/s.

    ``phi_t`` is the interferometric phase drift on top of the trap's fixed
    phase offset. The per-ion contrast never exceeds 1, so the rate is
    non-negative.
    """
    beat = _beat_fn(scenario)(t, phi_t)
    return scenario.baseline_rate * (1.0 + scenario.contrast * beat)


def _rng(seed: int, key: tuple) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def phase_walk(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    """Wiener drift of the optical phase sampled at bin centres, starting at 0."""
    n = scenario.n_bins
    if scenario.phase_diffusion == 0:
        return np.zeros(n)
    steps = rng.normal(0.0, math.sqrt(scenario.phase_diffusion * scenario.bin_width), n)
    steps[0] = 0.0
    return np.cumsum(steps)


def generate_run(scenario: Scenario, noiseless: bool = False, key: tuple = ()) -> FluorescenceRun:
    """Draw one run of Poisson counts.

    The per-bin mean uses the rate at the bin centre; with a beat period of
    ten bins the midpoint error is O((dw * bin_width)^2). ``noiseless``
    suppresses the Poisson draw but not the phase drift.
    """
    rng = _rng(scenario.seed, key)
    n = scenario.n_bins
    t = (np.arange(n) + 0.5) * scenario.bin_width
    phi = phase_walk(scenario, rng)
    mean = expected_rate(scenario, t, phi) * scenario.bin_width
    counts = mean if noiseless else rng.poisson(mean)
    return FluorescenceRun(scenario.bin_width, counts, scenario.digest())


def scan_dataset(
    base: Scenario,
    distances: Optional[Sequence[float]] = None,
    freqs: Optional[Sequence[float]] = None,
    runs_per_point: int = DEFAULT_RUNS_PER_POINT,
    noiseless: bool = False,
    workers: Optional[int] = None,
) -> list[ScanRun]:
    """Repeat runs over a scan of ion distances (m) or axial frequencies (rad/s).

    Distances are converted to axial frequencies with the two-ion spacing
    law. Output order is point-major and independent of ``workers``.
    """
    if (distances is None) == (freqs is None):
        raise ValueError("give exactly one of distances or freqs")
    if runs_per_point < 1:
        raise ValueError("runs_per_point must be >= 1")
    species = base.trap.species
    if distances is not None:
        if any(not d > 0 for d in distances):
            raise ValueError("distances must be positive")
        omegas = [axial_freq_for_spacing(d, species) for d in distances]
    else:
        if any(not w > 0 for w in freqs):
            raise ValueError("frequencies must be positive")
        omegas = list(freqs)

    jobs = []
    for p, w in enumerate(omegas):
        sc = replace(base, trap=base.trap.with_axial_freq(w))
        d = float(distances[p]) if distances is not None else two_ion_spacing(sc.trap)
        for r in range(runs_per_point):
            jobs.append((p, r, d, w, sc))

    def make(job):
        p, r, d, w, sc = job
        return ScanRun(p, r, d, w, generate_run(sc, noiseless=noiseless, key=(p, r)))

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(make, jobs))
    return [make(j) for j in jobs]
