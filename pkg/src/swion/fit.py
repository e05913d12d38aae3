"""Distance-scan fit of the two-ion beat power.

The measured observable is the beat power versus two-ion distance d. With
l0 = d/2 and the COM/stretch widths evaluated at the trap frequency that
produces d, the model is

    P(d) = scale * [cos(k d / 2) * exp(-(1/4) k^2 (s0^2 + s1^2))]^2,  k = 2 pi / lambda

and the free parameters are lambda, T and scale.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .crystal import CA40, IonSpecies, mean_phonon_number
from .constants import HBAR, K_B
from .dsp import DEFAULT_EDGE_TRIM, WindowSpec, run_beat_power
from .errors import UnderdeterminedError

log = logging.getLogger(__name__)

DEFAULT_LAMBDA_GUESS = 267e-9  # m
DEFAULT_LAMBDA_SPAN = 0.5
DEFAULT_T_GRID = np.concatenate([[0.0], np.geomspace(0.1e-3, 50e-3, 28)])
GTOL = 1e-10
XTOL = 1e-12
MAX_NFEV = 10_000


@dataclass(frozen=True)
class ScanPoint:
    distance: float  # m
    power_mean: float
    power_sem: float
    n_runs: int = 1

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError("distance must be positive")
        if self.power_sem < 0:
            raise ValueError("power_sem must be non-negative")
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")


@dataclass(frozen=True)
class FitResult:
    lambda_eff: float  # m
    temperature: float  # K
    scale: float
    lambda_err: float
    temperature_err: float
    scale_err: float
    residual_norm: float  # reduced chi-square
    relative_residual: float  # ||model - data|| / ||data||
    converged: bool
    n_points: int
    weighted: bool
    covariance: np.ndarray = field(repr=False, compare=False)

    @property
    def uncertainties(self) -> dict:
        return {
            "lambda_eff": self.lambda_err,
            "temperature": self.temperature_err,
            "scale": self.scale_err,
        }


@dataclass(frozen=True)
class DerivedQuantities:
    nbar_com: float
    nbar_str: float
    eta: float


def _omega_for_distance(distance, species: IonSpecies):
    d = np.asarray(distance, dtype=float)
    return np.sqrt(2.0 * species.coulomb_constant / (species.mass * d**3))


def _width_sq(distance, temperature, species: IonSpecies):
    """(s0^2 + s1^2) and its T derivative for COM and stretch at distance d."""
    w0 = _omega_for_distance(distance, species)
    inv = 1.0 / w0 + 1.0 / (math.sqrt(3.0) * w0)
    inv2 = 1.0 / w0**2 + 1.0 / (3.0 * w0**2)
    # s^2 = (k T / (hbar w) + 1/2) * hbar / (2 m w)
    s2 = (K_B * temperature * inv2 + 0.5 * HBAR * inv) / (2.0 * species.mass)
    ds2_dT = K_B * inv2 / (2.0 * species.mass)
    return s2, ds2_dT


def model_power(distance, lambda_eff: float, temperature: float, scale: float, species: IonSpecies = CA40):
    """Beat power at two-ion distance(s) ``distance`` (m)."""
    k = 2.0 * math.pi / lambda_eff
    d = np.asarray(distance, dtype=float)
    s2, _ = _width_sq(d, temperature, species)
    amp = np.cos(0.5 * k * d) * np.exp(-0.25 * k**2 * s2)
    return scale * amp**2


def model_jacobian(distance, lambda_eff: float, temperature: float, scale: float, species: IonSpecies = CA40):
    """d(model_power)/d(lambda, T, scale), shape (n, 3)."""
    k = 2.0 * math.pi / lambda_eff
    d = np.asarray(distance, dtype=float)
    s2, ds2 = _width_sq(d, temperature, species)
    c = np.cos(0.5 * k * d)
    s = np.sin(0.5 * k * d)
    e2 = np.exp(-0.5 * k**2 * s2)
    dp_dk = scale * e2 * (-c * s * d - k * s2 * c**2)
    return np.column_stack(
        [
            dp_dk * (-k / lambda_eff),
            scale * c**2 * e2 * (-0.5 * k**2 * ds2),
            c**2 * e2,
        ]
    )


def scan_points(labelled_powers: Iterable[tuple[float, float]]) -> list[ScanPoint]:
    """Group (distance, power) pairs by distance into mean/SEM points."""
    groups: dict[float, list[float]] = {}
    for d, p in labelled_powers:
        groups.setdefault(d, []).append(p)
    points = []
    for d in sorted(groups):
        vals = np.asarray(groups[d])
        sem = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        points.append(ScanPoint(d, float(vals.mean()), sem, len(vals)))
    return points


def analyze_scan(
    scan,
    spec: WindowSpec = WindowSpec(),
    edge_trim: float = DEFAULT_EDGE_TRIM,
    subtract_noise: bool = True,
) -> list[ScanPoint]:
    """Beat power of every run in a scan, reduced to one point per distance."""
    return scan_points(
        (s.distance, run_beat_power(s.run, spec, edge_trim, subtract_noise)) for s in scan
    )


def _scale_for(model_unit, y, w):
    den = np.sum(w * model_unit**2)
    return max(float(np.sum(w * model_unit * y) / den), 0.0) if den > 0 else 0.0


def _grid_search(d, y, w, lambdas, t_grid, species):
    """Best (cost, lambda, T, scale) over the grid, scale solved linearly."""
    best = (np.inf, None, None, None)
    for lam in lambdas:
        for temp in t_grid:
            unit = model_power(d, lam, temp, 1.0, species)
            a = _scale_for(unit, y, w)
            cost = float(np.sum(w * (a * unit - y) ** 2))
            if cost < best[0]:
                best = (cost, lam, temp, a)
    return best


def _lambda_grid(guess: float, span: float, d_max: float) -> np.ndarray:
    lo, hi = guess / (1.0 + span), guess * (1.0 + span)
    # phase error pi d dlambda / lambda^2 below pi/16 at the far end of the scan
    rel_step = lo / (16.0 * d_max)
    n = int(math.ceil(math.log(hi / lo) / rel_step)) + 1
    return np.geomspace(lo, hi, n)


def fit_scan(
    points: Sequence[ScanPoint],
    species: IonSpecies = CA40,
    lambda_guess: float = DEFAULT_LAMBDA_GUESS,
    temperature_guess: Optional[float] = None,
    lambda_span: float = DEFAULT_LAMBDA_SPAN,
    gtol: float = GTOL,
    xtol: float = XTOL,
    max_nfev: int = MAX_NFEV,
) -> FitResult:
    """Weighted least-squares fit of lambda, T and scale to a distance scan.

    A grid over lambda (log spaced, ``lambda_guess`` divided or multiplied by
    up to ``1 + lambda_span``) and T picks the starting basin; a bounded
    trust-region solve refines it. Weights are 1/sem^2 when every point has a
    positive SEM, otherwise uniform with the covariance rescaled by the
    reduced chi-square.
    """
    points = list(points)
    if len(points) < 4:
        raise UnderdeterminedError(f"need at least 4 scan points, got {len(points)}")
    d = np.array([p.distance for p in points])
    y = np.array([p.power_mean for p in points])
    sem = np.array([p.power_sem for p in points])
    if np.ptp(d) <= lambda_guess:
        raise UnderdeterminedError(
            f"scan spans {np.ptp(d) * 1e9:.1f} nm, less than one model period (~{lambda_guess * 1e9:.1f} nm)"
        )
    weighted = bool(np.all(sem > 0))
    w = 1.0 / sem**2 if weighted else np.ones_like(y)
    sw = np.sqrt(w)

    lambdas = _lambda_grid(lambda_guess, lambda_span, d.max())
    t_grid = DEFAULT_T_GRID if temperature_guess is None else np.array([temperature_guess])
    _, lam0, temp0, scale0 = _grid_search(d, y, w, lambdas, t_grid, species)
    if scale0 is None or scale0 <= 0:
        scale0 = max(float(np.max(y)), 1.0)

    # internal units nm, mK and y-scale keep the problem well conditioned
    y_unit = max(float(np.max(np.abs(y))), 1e-300)
    units = np.array([1e-9, 1e-3, y_unit])

    def resid(p):
        lam, temp, a = p * units
        return sw * (model_power(d, lam, temp, a, species) - y)

    def jac(p):
        lam, temp, a = p * units
        return sw[:, None] * model_jacobian(d, lam, temp, a, species) * units

    x0 = np.array([lam0, max(temp0, 1e-6), scale0]) / units
    sol = least_squares(
        resid,
        x0,
        jac=jac,
        bounds=([1e-6, 0.0, 0.0], [np.inf, np.inf, np.inf]),
        method="trf",
        gtol=gtol,
        xtol=xtol,
        ftol=1e-15,
        max_nfev=max_nfev,
        x_scale="jac",
    )
    lam, temp, a = sol.x * units
    dof = max(len(y) - 3, 1)
    chi2_red = float(2.0 * sol.cost / dof)

    jphys = sw[:, None] * model_jacobian(d, lam, temp, a, species)
    try:
        cov = np.linalg.inv(jphys.T @ jphys)
    except np.linalg.LinAlgError:
        cov = np.full((3, 3), np.nan)
    if not weighted:
        cov = cov * chi2_red
    errs = np.sqrt(np.clip(np.diag(cov), 0.0, None))

    model = model_power(d, lam, temp, a, species)
    rel = float(np.linalg.norm(model - y) / max(np.linalg.norm(y), 1e-300))
    log.debug("fit status %s after %s evaluations", sol.status, sol.nfev)
    return FitResult(
        lambda_eff=float(lam),
        temperature=float(temp),
        scale=float(a),
        lambda_err=float(errs[0]),
        temperature_err=float(errs[1]),
        scale_err=float(errs[2]),
        residual_norm=chi2_red,
        relative_residual=rel,
        converged=bool(sol.status > 0),
        n_points=len(y),
        weighted=weighted,
        covariance=cov,
    )


def derive_quantities(fit: FitResult, omega0: float, species: IonSpecies = CA40) -> DerivedQuantities:
    """Mean phonon numbers of COM and stretch modes and the Lamb-Dicke parameter at ``omega0``."""
    nbar_com = float(mean_phonon_number(omega0, fit.temperature))
    k = 2.0 * math.pi / fit.lambda_eff
    eta = k * math.sqrt(HBAR / (2.0 * species.mass * omega0))
    return DerivedQuantities(nbar_com=nbar_com, nbar_str=nbar_com / math.sqrt(3.0), eta=eta)


def fit_report(fit: FitResult, derived: Optional[DerivedQuantities] = None, omega0: Optional[float] = None) -> dict:
    """JSON-ready dictionary with SI units spelled out in the keys."""
    report = {
        "lambda_eff_m": fit.lambda_eff,
        "lambda_eff_err_m": fit.lambda_err,
        "temperature_k": fit.temperature,
        "temperature_err_k": fit.temperature_err,
        "scale_counts2": fit.scale,
        "scale_err_counts2": fit.scale_err,
        "uncertainty_kind": "1-sigma from the fit covariance",
        "reduced_chi_square": fit.residual_norm,
        "relative_residual": fit.relative_residual,
        "converged": fit.converged,
        "n_points": fit.n_points,
        "weighted": fit.weighted,
    }
    if derived is not None:
        report.update(
            {
                "omega0_rad_s": omega0,
                "nbar_com": derived.nbar_com,
                "nbar_str": derived.nbar_str,
                "lamb_dicke_eta": derived.eta,
            }
        )
    return report
