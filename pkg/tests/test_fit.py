import math

import numpy as np
import pytest

from swion.crystal import CA40, TrapConfig, normal_modes, thermal_state
from swion.beatmodel import two_ion_beat
from swion.errors import UnderdeterminedError
from swion.fit import (
    FitResult,
    ScanPoint,
    analyze_scan,
    derive_quantities,
    fit_report,
    fit_scan,
    model_jacobian,
    model_power,
    _width_sq,
    scan_points,
)
from swion.synth import Scenario, scan_dataset

from oracles import grid_search_lambda

MHZ = 2 * math.pi * 1e6
LAMBDA = 267.8e-9
TEMP = 3.7e-3
D = np.linspace(4.5e-6, 5.8e-6, 33)


def exact_points(scale=150.0, sem=0.0, distances=D):
    y = model_power(distances, LAMBDA, TEMP, scale)
    return [ScanPoint(float(d), float(p), sem, 5) for d, p in zip(distances, y)]


def fake_fit(lam=LAMBDA, temp=TEMP):
    return FitResult(lam, temp, 1.0, 0, 0, 0, 1.0, 0.0, True, 33, True, np.eye(3))


class TestModel:
    def test_matches_beat_model_squared(self):
        for d in (4.6e-6, 4.86e-6, 5.5e-6):
            trap = TrapConfig(CA40, math.sqrt(2 * CA40.coulomb_constant / (CA40.mass * d**3)), 2 * math.pi / LAMBDA)
            th = thermal_state(normal_modes(2, trap), TEMP)
            amp = two_ion_beat(d / 2, th.mode_sigmas[0], th.mode_sigmas[1], trap)
            assert model_power(d, LAMBDA, TEMP, 2.0) == pytest.approx(2.0 * amp.value**2, rel=1e-12)

    def test_integer_and_half_integer(self):
        assert model_power(18 * LAMBDA, LAMBDA, 0.0, 1.0) > 0.9
        assert model_power(17.5 * LAMBDA, LAMBDA, TEMP, 1.0) < 1e-28

    def test_strong_versus_weak_distance(self):
        strong = model_power(4.82e-6, LAMBDA, TEMP, 1.0)
        weak = model_power(4.73e-6, LAMBDA, TEMP, 1.0)
        assert strong > weak

    def test_period_in_distance(self):
        d = np.linspace(4.5e-6, 5.0e-6, 101)
        k = 2 * math.pi / LAMBDA

        def fringe(x):
            # divide out the slowly varying thermal factor
            return model_power(x, LAMBDA, TEMP, 1.0) / np.exp(-0.5 * k**2 * _width_sq(x, TEMP, CA40)[0])

        np.testing.assert_allclose(fringe(d + LAMBDA), fringe(d), atol=1e-9)
        np.testing.assert_allclose(fringe(d + LAMBDA / 2), 1 - fringe(d), atol=1e-9)

    def test_jacobian(self):
        p = np.array([LAMBDA, TEMP, 150.0])
        steps = np.array([1e-15, 1e-9, 1e-4])
        jac = model_jacobian(D, *p)
        for j in range(3):
            hi, lo = p.copy(), p.copy()
            hi[j] += steps[j]
            lo[j] -= steps[j]
            fd = (model_power(D, *hi) - model_power(D, *lo)) / (2 * steps[j])
            np.testing.assert_allclose(jac[:, j], fd, rtol=1e-6, atol=1e-6 * np.max(np.abs(fd)))


class TestFitExact:
    def test_recovers_parameters(self):
        fit = fit_scan(exact_points())
        assert fit.lambda_eff == pytest.approx(LAMBDA, rel=1e-8)
        assert fit.temperature == pytest.approx(TEMP, rel=1e-8)
        assert fit.scale == pytest.approx(150.0, rel=1e-8)
        assert fit.relative_residual < 1e-12
        assert fit.converged
        assert not fit.weighted

    @pytest.mark.parametrize("factor", [1.3, 0.7])
    def test_far_guess_agrees_with_grid_oracle(self, factor):
        pts = exact_points()
        d = np.array([p.distance for p in pts])
        y = np.array([p.power_mean for p in pts])
        fit = fit_scan(pts, lambda_guess=factor * LAMBDA)
        lam_o, temp_o = grid_search_lambda(
            d, y, np.ones_like(y), np.linspace(267.0e-9, 268.6e-9, 161), np.linspace(2e-3, 5e-3, 31),
            lambda x, lam, t: model_power(x, lam, t, 1.0),
        )
        assert fit.lambda_eff == pytest.approx(lam_o, abs=0.011e-9)
        assert fit.temperature == pytest.approx(temp_o, abs=0.06e-3)
        assert fit.lambda_eff == pytest.approx(LAMBDA, rel=1e-8)

    def test_reduced_chi_square_calibrated(self):
        rng = np.random.default_rng(11)
        base = exact_points()
        sem = 4.0
        chis = []
        for _ in range(50):
            pts = [ScanPoint(p.distance, p.power_mean + rng.normal(0, sem), sem, 5) for p in base]
            fit = fit_scan(pts)
            assert fit.weighted
            chis.append(fit.residual_norm)
        assert 0.5 <= np.mean(chis) <= 1.5

    def test_uncertainties_cover_truth(self):
        rng = np.random.default_rng(5)
        sem = 3.0
        pts = [ScanPoint(p.distance, p.power_mean + rng.normal(0, sem), sem, 5) for p in exact_points()]
        fit = fit_scan(pts)
        assert abs(fit.lambda_eff - LAMBDA) < 5 * fit.lambda_err
        assert abs(fit.temperature - TEMP) < 5 * fit.temperature_err
        assert set(fit.uncertainties) == {"lambda_eff", "temperature", "scale"}


class TestFitErrors:
    def test_too_few_points(self):
        with pytest.raises(UnderdeterminedError):
            fit_scan(exact_points()[:3])

    def test_single_point(self):
        with pytest.raises(UnderdeterminedError):
            fit_scan(exact_points()[:1])

    def test_span_shorter_than_period(self):
        with pytest.raises(UnderdeterminedError):
            fit_scan(exact_points(distances=np.linspace(5e-6, 5.2e-6, 6)))

    def test_iteration_cap(self):
        fit = fit_scan(exact_points(), max_nfev=1)
        assert not fit.converged

    def test_error_is_value_error(self):
        assert issubclass(UnderdeterminedError, ValueError)

    @pytest.mark.parametrize("kwargs", [{"distance": 0.0}, {"power_sem": -1.0}, {"n_runs": 0}])
    def test_point_validation(self, kwargs):
        args = {"distance": 5e-6, "power_mean": 1.0, "power_sem": 0.1, "n_runs": 5} | kwargs
        with pytest.raises(ValueError):
            ScanPoint(**args)


class TestDerived:
    omega0 = 1.24 * MHZ

    def test_lamb_dicke(self):
        q = derive_quantities(fake_fit(), self.omega0)
        assert q.eta == pytest.approx(0.237, abs=0.001)

    def test_phonon_numbers(self):
        q = derive_quantities(fake_fit(), self.omega0)
        assert round(q.nbar_com, 1) == 62.2
        assert q.nbar_str == pytest.approx(q.nbar_com / math.sqrt(3), rel=1e-14)

    def test_zero_temperature(self):
        q = derive_quantities(fake_fit(temp=0.0), self.omega0)
        assert q.nbar_com == 0 and q.nbar_str == 0

    def test_report_keys(self):
        rep = fit_report(fake_fit(), derive_quantities(fake_fit(), self.omega0), self.omega0)
        assert rep["lambda_eff_m"] == LAMBDA
        assert rep["lamb_dicke_eta"] == pytest.approx(0.237, abs=0.001)
        assert "nbar_com" not in fit_report(fake_fit())


class TestScanPoints:
    def test_grouping(self):
        pts = scan_points([(2e-6, 1.0), (1e-6, 4.0), (2e-6, 3.0), (1e-6, 4.0)])
        assert [p.distance for p in pts] == [1e-6, 2e-6]
        assert pts[0].power_sem == 0.0
        assert pts[1].power_mean == 2.0
        assert pts[1].power_sem == pytest.approx(1.0)
        assert pts[1].n_runs == 2

    def test_analyze_scan_noiseless(self):
        trap = TrapConfig(CA40, 1.24 * MHZ, 2 * math.pi / LAMBDA)
        sc = Scenario(trap, contrast=0.8, temperature=TEMP)
        d = np.linspace(4.5e-6, 5.8e-6, 9)
        pts = analyze_scan(scan_dataset(sc, distances=d, runs_per_point=2, noiseless=True))
        assert len(pts) == 9 and all(p.n_runs == 2 for p in pts)
        # noiseless repeats are identical
        assert all(p.power_sem == 0 for p in pts)
        model = model_power(d, LAMBDA, TEMP, 1.0)
        ratio = np.array([p.power_mean for p in pts]) / model
        strong = model > 0.3 * model.max()
        np.testing.assert_allclose(ratio[strong], np.median(ratio[strong]), rtol=0.05)
