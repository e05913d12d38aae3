"""Thermally averaged beat fluorescence of ions in a slowly moving standing wave.

Contrasts are normalized so that one perfectly localized ion has a beat
contrast of 1, which keeps crystals of different size comparable.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .crystal import CrystalModes, ThermalState, TrapConfig, ground_state_width, normal_modes, thermal_state


@dataclass(frozen=True)
class BeatParams:
    baseline: float  # counts/s
    modulation: float  # counts/s
    trap: TrapConfig

    def __post_init__(self):
        if not self.baseline >= self.modulation >= 0:
            raise ValueError(
                f"need baseline >= modulation >= 0, got {self.baseline!r}, {self.modulation!r}"
            )


@dataclass(frozen=True)
class BeatAmplitude:
    value: float  # signed contrast multiplying cos(dw t)
    envelope: float  # thermal (Debye-Waller) factor alone


def single_ion_intensity(params: BeatParams, x, t):
    """A + B cos(dk x - dw t + dphi) for one ion at position ``x``."""
    trap = params.trap
    phase = trap.delta_k_eff * np.asarray(x) - trap.delta_omega * np.asarray(t) + trap.phase_offset
    return params.baseline + params.modulation * np.cos(phase)


def debye_waller(delta_k: float, sigma0: float, sigma1: float) -> float:
    """exp(-(1/4) dk^2 (sigma0^2 + sigma1^2)) for the two-ion crystal."""
    return float(np.exp(-0.25 * delta_k**2 * (sigma0**2 + sigma1**2)))


def two_ion_beat(l0: float, sigma0: float, sigma1: float, trap: TrapConfig) -> BeatAmplitude:
    """Beat contrast of two ions at +-l0 with COM/stretch widths sigma0, sigma1."""
    if not l0 > 0:
        raise ValueError(f"l0 must be positive, got {l0!r}")
    if sigma0 < 0 or sigma1 < 0:
        raise ValueError("wavepacket widths must be non-negative")
    env = debye_waller(trap.delta_k_eff, sigma0, sigma1)
    return BeatAmplitude(value=float(np.cos(trap.delta_k_eff * l0)) * env, envelope=env)


def ion_factors(modes: CrystalModes, thermal: ThermalState, delta_k: float) -> np.ndarray:
    """Per-ion thermal factor prod_j exp(-(1/2) dk^2 a_ij^2 sigma_j^2)."""
    a2 = modes.mode_matrix**2
    return np.exp(-0.5 * delta_k**2 * (a2 @ thermal.mode_sigmas**2))


def n_ion_beat(modes: CrystalModes, thermal: ThermalState, trap: TrapConfig) -> BeatAmplitude:
    """Per-ion mean beat contrast of an N-ion chain.

    Each ion contributes ``cos(dk x_i) * prod_j f_ij``; the imaginary parts
    cancel pairwise because the chain is reflection symmetric.
    """
    if len(thermal.mode_sigmas) != modes.n_ions:
        raise ValueError("thermal state does not match the crystal modes")
    f = ion_factors(modes, thermal, trap.delta_k_eff)
    value = np.mean(np.cos(trap.delta_k_eff * modes.positions) * f)
    return BeatAmplitude(value=float(value), envelope=float(np.mean(f)))


def beat_waveform(modes: CrystalModes, thermal: ThermalState, trap: TrapConfig, t, phase=0.0):
    """Time-resolved per-ion mean beat signal.

    ``(1/N) sum_i f_i cos(dk x_i - dw t + dphi + phase)`` where ``phase`` is an
    extra (possibly time dependent) optical phase added to ``trap.phase_offset``.
    """
    f = ion_factors(modes, thermal, trap.delta_k_eff)
    kx = trap.delta_k_eff * modes.positions
    theta = -trap.delta_omega * np.asarray(t, dtype=float) + trap.phase_offset + np.asarray(phase)
    # sum_i f_i cos(kx_i + theta) = Re(S e^{i theta}) with S = sum_i f_i e^{i kx_i}
    s = np.mean(f * np.exp(1j * kx))
    return s.real * np.cos(theta) - s.imag * np.sin(theta)


def lamb_dicke(trap: TrapConfig) -> float:
    """eta = dk_eff sqrt(hbar / (2 m w0))."""
    return float(trap.delta_k_eff * ground_state_width(trap.axial_freq, trap.species.mass))


def stretch_drive_force(spins, spacing: float, trap: TrapConfig, t, detuning: float = 0.0):
    """Differential standing-wave force F_1 - F_2 on a two-ion crystal.

    F_i = sin(dk x_i - detuning t + dphi) m_F^(i) with unit amplitude and the
    ions at -spacing/2, +spacing/2. ``detuning`` is the drive's effective
    detuning from the mode, independent of the probe beat frequency.
    """
    m1, m2 = spins
    t = np.asarray(t, dtype=float)
    half = trap.delta_k_eff * spacing / 2.0
    drift = -detuning * t + trap.phase_offset
    return m1 * np.sin(-half + drift) - m2 * np.sin(half + drift)


def trap_frequency_scan(n_ions: int, freqs, temperature: float, trap: TrapConfig):
    """Per-ion beat contrast and envelope of an N-ion chain versus axial frequency.

    The chain geometry is solved once; positions scale as w0^(-2/3) and mode
    frequencies as w0. Returns ``(values, envelopes)`` arrays matching ``freqs``.
    """
    ref = normal_modes(n_ions, trap)
    w_ref = trap.axial_freq
    values, envelopes = [], []
    for w in np.asarray(freqs, dtype=float):
        s = (w_ref / w) ** (2.0 / 3.0)
        modes = replace(
            ref,
            positions=ref.positions * s,
            mode_freqs=ref.mode_freqs * (w / w_ref),
            length_scale=ref.length_scale * s,
        )
        amp = n_ion_beat(modes, thermal_state(modes, temperature), trap.with_axial_freq(w))
        values.append(amp.value)
        envelopes.append(amp.envelope)
    return np.array(values), np.array(envelopes)
