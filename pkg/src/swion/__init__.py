"""Slowly moving standing-wave measurements on trapped-ion crystals.

Forward models of the thermally averaged beat fluorescence of linear ion
chains, a synthetic detector, the demodulation pipeline that extracts the
beat amplitude and phase, and the distance-scan fit for the standing-wave
period and crystal temperature.
"""
from .beatmodel import (
    BeatAmplitude,
    BeatParams,
    lamb_dicke,
    n_ion_beat,
    single_ion_intensity,
    stretch_drive_force,
    trap_frequency_scan,
    two_ion_beat,
)
from .crystal import (
    CA40,
    CrystalModes,
    IonSpecies,
    ThermalState,
    TrapConfig,
    axial_freq_for_spacing,
    equilibrium_positions,
    normal_modes,
    thermal_state,
    two_ion_spacing,
)
from .dsp import (
    Envelope,
    StabilityReport,
    WindowSpec,
    analytic_envelope,
    beat_power,
    noise_floor,
    phase_stability,
    supergaussian_window,
)
from .errors import NumericalError, UnderdeterminedError
from .fit import (
    DerivedQuantities,
    FitResult,
    ScanPoint,
    analyze_scan,
    derive_quantities,
    fit_scan,
    model_power,
)
from .synth import FluorescenceRun, Scenario, expected_rate, generate_run, scan_dataset

__version__ = "0.1.0"
