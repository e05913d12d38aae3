"""Extraction of the slow beat component from binned fluorescence.

The run is Fourier transformed, every bin except the positive-frequency band
around the beat is discarded, the band is weighted with a supergaussian
window, and the inverse transform gives the complex analytic signal of the
beat. Its modulus and argument are the beat amplitude and phase.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .synth import FluorescenceRun

MIN_BINS = 16
DEFAULT_EDGE_TRIM = 2.0  # s
COHERENCE_CAP_FACTOR = 10.0


@dataclass(frozen=True)
class WindowSpec:
    center: float = 2.0  # Hz
    fwhm: float = 0.3  # Hz
    order: int = 4

    def __post_init__(self):
        if not self.fwhm > 0:
            raise ValueError("window fwhm must be positive")
        if int(self.order) != self.order or self.order < 1:
            raise ValueError("window order must be a positive integer")
        if not self.center > self.fwhm:
            raise ValueError("window center must exceed its fwhm to keep clear of DC")

    @property
    def sigma(self) -> float:
        """Width parameter such that the weight is 1/2 at center +- fwhm/2."""
        return self.fwhm / (2.0 * (2.0 * math.log(2.0)) ** (1.0 / (2 * self.order)))


@dataclass(frozen=True)
class Envelope:
    times: np.ndarray  # s
    amplitude: np.ndarray  # counts per bin
    phase: np.ndarray  # rad, unwrapped, relative to a carrier at the window centre
    inst_freq: np.ndarray  # rad/s, deviation from the window centre

    @property
    def duration(self) -> float:
        dt = self.times[1] - self.times[0]
        return len(self.times) * dt

    def trimmed(self, edge_trim: float) -> np.ndarray:
        """Boolean mask of samples at least ``edge_trim`` seconds from either end."""
        if not 0 <= edge_trim < self.duration / 2:
            raise ValueError(f"edge_trim must be in [0, duration/2), got {edge_trim!r}")
        dt = self.times[1] - self.times[0]
        t0 = self.times[0] - dt / 2
        rel = self.times - t0
        return (rel >= edge_trim) & (rel <= self.duration - edge_trim)


@dataclass(frozen=True)
class StabilityReport:
    freq_std: float  # rad/s
    coherence_time: float  # s
    n_runs: int = 1


def supergaussian_window(freq_grid, spec: WindowSpec) -> np.ndarray:
    """exp(-(f - center)^(2n) / (2 sigma^(2n))) on ``freq_grid`` (Hz)."""
    x = (np.asarray(freq_grid, dtype=float) - spec.center) / spec.sigma
    return np.exp(-0.5 * x ** (2 * spec.order))


def _check_run(run: FluorescenceRun, spec: WindowSpec) -> None:
    if len(run.counts) < MIN_BINS:
        raise ValueError(f"run has {len(run.counts)} bins, need at least {MIN_BINS}")
    nyquist = 0.5 / run.bin_width
    if spec.center >= nyquist:
        raise ValueError(f"window center {spec.center} Hz is not below Nyquist {nyquist} Hz")


def _band_spectrum(run: FluorescenceRun):
    # mean removal kills the DC bin and the step the zero padding would add;
    # padding to at least twice the length keeps the filter's ringing from
    # wrapping around onto the other end of the run
    x = np.asarray(run.counts, dtype=float)
    n = len(x)
    m = 1 << (2 * n - 1).bit_length()
    spec = np.fft.fft(x - x.mean(), m)
    freqs = np.fft.fftfreq(m, run.bin_width)
    return spec, freqs, n, m


def analytic_signal(run: FluorescenceRun, spec: WindowSpec) -> np.ndarray:
    """Complex beat signal, positive-frequency band only, length of the run.

    The run is zero padded to a power of two of at least twice its length. Because the inverse
    transform carries the matching 1/M normalization, the interior amplitude
    does not depend on the padding and no extra factor is applied.
    """
    _check_run(run, spec)
    x_f, freqs, n, _ = _band_spectrum(run)
    weights = np.where(freqs > 0, supergaussian_window(freqs, spec), 0.0)
    return np.fft.ifft(x_f * weights)[:n]


def analytic_envelope(run: FluorescenceRun, spec: WindowSpec = WindowSpec()) -> Envelope:
    z = analytic_signal(run, spec)
    t = run.times
    base = z * np.exp(-2j * np.pi * spec.center * t)
    phase = np.unwrap(np.angle(base))
    return Envelope(
        times=t,
        amplitude=2.0 * np.abs(z),
        phase=phase,
        inst_freq=np.gradient(phase, run.bin_width),
    )


def noise_floor(run: FluorescenceRun, spec: WindowSpec = WindowSpec(), guard: float = 2.0) -> float:
    """Expected white-noise contribution to the mean squared amplitude.

    The per-bin noise level is taken from the median periodogram outside the
    beat band (``guard`` fwhm away from the centre and its first harmonic,
    and above 0.5 Hz); the median of an exponential variate is ln 2 times its
    mean. The result is what :func:`beat_power` would report for a run of
    pure noise.
    """
    _check_run(run, spec)
    x_f, freqs, n, m = _band_spectrum(run)
    nyquist = 0.5 / run.bin_width
    f = np.abs(freqs)
    quiet = (
        (f > 0.5)
        & (f < 0.95 * nyquist)
        & (np.abs(f - spec.center) > guard * spec.fwhm)
        & (np.abs(f - 2 * spec.center) > guard * spec.fwhm)
    )
    if not np.any(quiet):
        return 0.0
    per_sample_var = np.median(np.abs(x_f[quiet]) ** 2) / math.log(2.0) / n
    weights = np.where(freqs > 0, supergaussian_window(freqs, spec), 0.0)
    # interior samples of the filtered noise carry var * sum(g^2) / m
    return 4.0 * per_sample_var * float(np.sum(weights**2)) / m


def beat_power(env: Envelope, edge_trim: float = DEFAULT_EDGE_TRIM, noise_floor: float = 0.0) -> float:
    """Time mean of A(t)^2 over the edge-trimmed interval, minus ``noise_floor``."""
    mask = env.trimmed(edge_trim)
    return float(np.mean(env.amplitude[mask] ** 2)) - noise_floor


def run_beat_power(
    run: FluorescenceRun,
    spec: WindowSpec = WindowSpec(),
    edge_trim: float = DEFAULT_EDGE_TRIM,
    subtract_noise: bool = True,
) -> float:
    """Beat power of one run, optionally corrected for the shot-noise floor."""
    floor = noise_floor(run, spec) if subtract_noise else 0.0
    return beat_power(analytic_envelope(run, spec), edge_trim, floor)


def phase_stability(envelopes: Sequence[Envelope], edge_trim: float = DEFAULT_EDGE_TRIM) -> StabilityReport:
    """Spread of the beat's instantaneous frequency and the coherence time.

    ``freq_std`` is the run average of the standard deviation of dphi/dt on
    the trimmed interval; the coherence time is its inverse, capped at ten
    times the longest run.
    """
    envelopes = list(envelopes)
    if not envelopes:
        raise ValueError("phase_stability needs at least one envelope")
    stds = [float(np.std(e.inst_freq[e.trimmed(edge_trim)])) for e in envelopes]
    freq_std = float(np.mean(stds))
    cap = COHERENCE_CAP_FACTOR * max(e.duration for e in envelopes)
    tau = cap if freq_std <= 1.0 / cap else 1.0 / freq_std
    return StabilityReport(freq_std=freq_std, coherence_time=tau, n_runs=len(envelopes))
