"""Equilibrium structure and axial normal modes of a linear ion crystal.

Lengths are handled internally in units of the crystal length scale
``ell = (q^2 / (4 pi eps0 m w0^2))**(1/3)``, in which the axial potential reads

    V(u) = sum_i u_i^2 / 2 + sum_{i<j} 1 / |u_i - u_j|

and the Hessian at equilibrium has eigenvalues ``(w_j / w0)^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import AMU, CA40_MASS_AMU, ELEMENTARY_CHARGE, EPSILON_0, HBAR, K_B
from .errors import NumericalError

MAX_IONS = 32
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 500


@dataclass(frozen=True)
class IonSpecies:
    mass: float  # kg
    charge: float = ELEMENTARY_CHARGE  # C

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"ion mass must be positive, got {self.mass!r}")
        if not self.charge > 0:
            raise ValueError(f"ion charge must be positive, got {self.charge!r}")

    @classmethod
    def from_amu(cls, mass_amu: float, charge_e: float = 1.0) -> IonSpecies:
        return cls(mass=mass_amu * AMU, charge=charge_e * ELEMENTARY_CHARGE)

    @property
    def coulomb_constant(self) -> float:
        """q^2 / (4 pi eps0) in J m."""
        return self.charge**2 / (4.0 * math.pi * EPSILON_0)


CA40 = IonSpecies.from_amu(CA40_MASS_AMU)


@dataclass(frozen=True)
class TrapConfig:
    """Axial trap plus the two-beam standing wave probing it.

    Parameters
    ----------
    species : IonSpecies
    axial_freq : float
        Axial (COM) trap frequency w0 in rad/s.
    delta_k_eff : float
        Projection of the beam wavevector difference on the trap axis, 1/m.
    delta_omega : float
        Detuning between the two beams in rad/s (the beat frequency).
    phase_offset : float
        Optical phase difference between the beams, rad.
    """

    species: IonSpecies
    axial_freq: float
    delta_k_eff: float
    delta_omega: float = 2 * math.pi * 2.0
    phase_offset: float = 0.0

    def __post_init__(self):
        if not self.axial_freq > 0:
            raise ValueError(f"axial_freq must be positive, got {self.axial_freq!r}")
        if not self.delta_k_eff > 0:
            raise ValueError(f"delta_k_eff must be positive, got {self.delta_k_eff!r}")
        if not self.delta_omega >= 0:
            raise ValueError(f"delta_omega must be non-negative, got {self.delta_omega!r}")

    @property
    def wavelength(self) -> float:
        """Standing-wave period along the axis, 2 pi / delta_k_eff."""
        return 2 * math.pi / self.delta_k_eff

    def with_axial_freq(self, axial_freq: float) -> TrapConfig:
        return replace(self, axial_freq=axial_freq)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CrystalModes:
    n_ions: int
    positions: np.ndarray = field(repr=False)  # m, ascending
    mode_freqs: np.ndarray  # rad/s, ascending
    mode_matrix: np.ndarray = field(repr=False)  # a[i, j]: ion i, mode j
    length_scale: float  # m
    species: IonSpecies = CA40

    def __post_init__(self):
        for name in ("positions", "mode_freqs", "mode_matrix"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def eigenvalues(self) -> np.ndarray:
        """Dimensionless Hessian eigenvalues (w_j / w0)^2."""
        return (self.mode_freqs / self.mode_freqs[0]) ** 2


@dataclass(frozen=True)
class ThermalState:
    temperature: float  # K
    mode_nbars: np.ndarray
    mode_sigmas: np.ndarray  # m
    ground_sigmas: np.ndarray  # m

    def __post_init__(self):
        for name in ("mode_nbars", "mode_sigmas", "ground_sigmas"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


def length_scale(trap: TrapConfig) -> float:
    sp = trap.species
    return (sp.coulomb_constant / (sp.mass * trap.axial_freq**2)) ** (1.0 / 3.0)


def two_ion_spacing(trap: TrapConfig) -> float:
    """Distance 2*l0 between two ions in a harmonic well, in meters."""
    sp = trap.species
    return (sp.coulomb_constant * 2.0 / (sp.mass * trap.axial_freq**2)) ** (1.0 / 3.0)


def axial_freq_for_spacing(spacing: float, species: IonSpecies = CA40) -> float:
    """Inverse of :func:`two_ion_spacing`: the w0 giving a two-ion spacing."""
    if not spacing > 0:
        raise ValueError(f"spacing must be positive, got {spacing!r}")
    return math.sqrt(2.0 * species.coulomb_constant / (species.mass * spacing**3))


def _check_n_ions(n_ions: int) -> None:
    if not 1 <= n_ions <= MAX_IONS:
        raise ValueError(f"n_ions must be in [1, {MAX_IONS}], got {n_ions!r}")


def potential(u: np.ndarray) -> float:
    """Dimensionless axial potential energy of the chain."""
    u = np.asarray(u, dtype=float)
    i, j = np.triu_indices(len(u), k=1)
    return 0.5 * float(u @ u) + float(np.sum(1.0 / np.abs(u[i] - u[j])))


def potential_gradient(u: np.ndarray) -> np.ndarray:
    """Dimensionless net force with the sign flipped, dV/du_i."""
    u = np.asarray(u, dtype=float)
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, 1.0)
    coul = np.sign(d) / d**2
    np.fill_diagonal(coul, 0.0)
    return u - coul.sum(axis=1)


def hessian(u: np.ndarray) -> np.ndarray:
    """Dimensionless Hessian of :func:`potential`."""
    u = np.asarray(u, dtype=float)
    d = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(d, 1.0)
    c = 2.0 / d**3
    np.fill_diagonal(c, 0.0)
    h = -c
    h[np.diag_indices_from(h)] = 1.0 + c.sum(axis=1)
    return h


def _initial_guess(n_ions: int) -> np.ndarray:
    # uniform chain with the empirical central spacing 2.018 N^-0.559
    spacing = 2.018 * n_ions**-0.559
    return (np.arange(n_ions) - (n_ions - 1) / 2.0) * spacing


def dimensionless_positions(n_ions: int) -> np.ndarray:
    """Equilibrium positions in units of the length scale.

    Damped Newton iteration on the dimensionless potential, stopped when the
    largest force component is below ``NEWTON_TOL``. The potential is strictly
    convex on the ordered cone u_1 < ... < u_N, so step halving that keeps the
    ordering and makes progress always terminates.
    """
    _check_n_ions(n_ions)
    if n_ions == 1:
        return np.zeros(1)
    u = _initial_guess(n_ions)
    energy = potential(u)
    grad = potential_gradient(u)
    for _ in range(NEWTON_MAX_ITER):
        gnorm = np.max(np.abs(grad))
        if gnorm < NEWTON_TOL:
            break
        step = np.linalg.solve(hessian(u), grad)
        t = 1.0
        while True:
            trial = u - t * step
            if np.all(np.diff(trial) > 0):
                e_trial = potential(trial)
                g_trial = potential_gradient(trial)
                # close to the minimum energy differences drown in rounding,
                # so a smaller gradient is accepted as progress too
                if e_trial < energy or np.max(np.abs(g_trial)) < gnorm:
                    break
            t *= 0.5
            if t < 1e-12:
                raise NumericalError(f"line search stalled for {n_ions} ions at |grad| = {gnorm:.3g}")
        u, energy, grad = trial, e_trial, g_trial
    else:
        raise NumericalError(
            f"equilibrium search for {n_ions} ions did not converge in {NEWTON_MAX_ITER} iterations"
        )
    # impose the reflection symmetry exactly
    return 0.5 * (u - u[::-1])


def equilibrium_positions(n_ions: int, trap: TrapConfig) -> np.ndarray:
    """Ascending equilibrium positions in meters, antisymmetric about 0."""
    return dimensionless_positions(n_ions) * length_scale(trap)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    # largest |entry| positive; among near-ties the highest ion index decides
    out = vecs.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        mags = np.abs(col)
        k = np.flatnonzero(mags >= mags.max() - 1e-9)[-1]
        if col[k] < 0:
            out[:, j] = -col
    return out


def normal_modes(n_ions: int, trap: TrapConfig) -> CrystalModes:
    u = dimensionless_positions(n_ions)
    try:
        evals, evecs = np.linalg.eigh(hessian(u))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Hessian diagonalisation failed: {exc}") from exc
    if evals[0] <= 0:
        raise NumericalError("Hessian is not positive definite at equilibrium")
    ell = length_scale(trap)
    return CrystalModes(
        n_ions=n_ions,
        positions=u * ell,
        mode_freqs=trap.axial_freq * np.sqrt(evals),
        mode_matrix=_fix_signs(evecs),
        length_scale=ell,
        species=trap.species,
    )


def ground_state_width(omega, mass: float):
    """sqrt(hbar / (2 m w)); every mode carries the single-ion mass."""
    return np.sqrt(HBAR / (2.0 * mass * np.asarray(omega, dtype=float)))


def mean_phonon_number(omega, temperature: float):
    """k_B T / (hbar w), the classical occupation used throughout."""
    return K_B * temperature / (HBAR * np.asarray(omega, dtype=float))


def thermal_state(modes: CrystalModes, temperature: float) -> ThermalState:
    if not temperature >= 0:
        raise ValueError(f"temperature must be non-negative, got {temperature!r}")
    nbar = mean_phonon_number(modes.mode_freqs, temperature)
    ground = ground_state_width(modes.mode_freqs, modes.species.mass)
    return ThermalState(
        temperature=temperature,
        mode_nbars=nbar,
        mode_sigmas=np.sqrt(nbar + 0.5) * ground,
        ground_sigmas=ground,
    )
