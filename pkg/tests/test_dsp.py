import math

import numpy as np
import pytest

from swion.crystal import CA40, TrapConfig, axial_freq_for_spacing
from swion.dsp import (
    COHERENCE_CAP_FACTOR,
    Envelope,
    WindowSpec,
    analytic_envelope,
    beat_power,
    noise_floor,
    phase_stability,
    run_beat_power,
    supergaussian_window,
)
from swion.synth import FluorescenceRun, Scenario, generate_run

LAMBDA = 267.8e-9
K = 2 * math.pi / LAMBDA
DT = 0.05
T = (np.arange(1000) + 0.5) * DT
SETTLED = 8.0  # s, filter transients have died out this far from either end


def tone(freq=2.0, amp=10.0, base=50.0, phase=0.0):
    return FluorescenceRun(DT, base + amp * np.cos(2 * math.pi * freq * T + phase))


class TestWindow:
    spec = WindowSpec()

    def test_half_maximum(self):
        g = supergaussian_window([2.0, 1.85, 2.15], self.spec)
        np.testing.assert_allclose(g, [1.0, 0.5, 0.5], atol=1e-12)

    @pytest.mark.parametrize("order", [1, 2, 4, 8])
    def test_half_maximum_any_order(self, order):
        spec = WindowSpec(center=3.0, fwhm=0.7, order=order)
        assert supergaussian_window(3.35, spec) == pytest.approx(0.5, abs=1e-12)

    def test_sigma(self):
        assert self.spec.sigma == pytest.approx(0.14400, abs=5e-6)

    def test_shape(self):
        f = np.linspace(0, 4, 4001)
        g = supergaussian_window(f, self.spec)
        assert np.all((0 <= g) & (g <= 1))
        np.testing.assert_allclose(g, g[::-1], atol=1e-12)
        # flat top: much flatter than a gaussian of the same fwhm
        assert supergaussian_window(2.1, self.spec) > 0.95

    @pytest.mark.parametrize("kwargs", [{"fwhm": 0}, {"order": 0}, {"order": 2.5}, {"center": 0.2}])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            WindowSpec(**kwargs)


class TestEnvelope:
    def test_tone_amplitude(self):
        env = analytic_envelope(tone())
        mask = env.trimmed(SETTLED)
        np.testing.assert_allclose(env.amplitude[mask], 10.0, rtol=0.02)
        np.testing.assert_allclose(env.inst_freq[mask], 0.0, atol=2e-3)

    def test_offset_tone_frequency(self):
        env = analytic_envelope(tone(freq=2.05))
        mask = env.trimmed(SETTLED)
        np.testing.assert_allclose(env.inst_freq[mask], 2 * math.pi * 0.05, rtol=0.05)

    def test_zero_signal(self):
        env = analytic_envelope(FluorescenceRun(DT, np.full(1000, 30.0)))
        np.testing.assert_allclose(env.amplitude, 0.0, atol=1e-12)

    def test_linearity(self):
        a = analytic_envelope(FluorescenceRun(DT, 3.0 * np.sin(2 * math.pi * 2 * T) + 5.0))
        b = analytic_envelope(FluorescenceRun(DT, 7.0 * (3.0 * np.sin(2 * math.pi * 2 * T) + 5.0)))
        np.testing.assert_allclose(b.amplitude, 7.0 * a.amplitude, rtol=1e-9, atol=1e-9)

    def test_phase_is_unwrapped(self):
        env = analytic_envelope(tone(freq=2.1))
        assert np.max(np.abs(np.diff(env.phase))) <= math.pi

    def test_phase_offset(self):
        env = analytic_envelope(tone(phase=1.0))
        mask = env.trimmed(SETTLED)
        wrapped = np.angle(np.exp(1j * (env.phase[mask] - 1.0)))
        np.testing.assert_allclose(wrapped, 0.0, atol=0.02)

    def test_short_run(self):
        with pytest.raises(ValueError):
            analytic_envelope(FluorescenceRun(DT, np.ones(8)))

    def test_nyquist(self):
        with pytest.raises(ValueError):
            analytic_envelope(FluorescenceRun(0.3, np.ones(100)))

    def test_trim_bounds(self):
        env = analytic_envelope(tone())
        with pytest.raises(ValueError):
            env.trimmed(25.0 + DT)
        with pytest.raises(ValueError):
            env.trimmed(-1.0)
        assert env.trimmed(0.0).all()


class TestBeatPower:
    def test_tone_power(self):
        assert beat_power(analytic_envelope(tone(amp=6.0))) == pytest.approx(36.0, rel=0.05)

    def test_noise_floor_matches_pure_noise(self):
        sc = Scenario(TrapConfig(CA40, axial_freq_for_spacing(5e-6), K), contrast=0.0)
        raw, floors = [], []
        for r in range(40):
            run = generate_run(sc, key=(r,))
            raw.append(beat_power(analytic_envelope(run)))
            floors.append(noise_floor(run))
        assert np.mean(floors) == pytest.approx(np.mean(raw), rel=0.1)

    def test_floor_of_noiseless_run_is_negligible(self):
        # only spectral leakage of the truncated tone remains
        run = tone()
        assert noise_floor(run) < 1e-4 * run_beat_power(run, subtract_noise=False)

    def test_integer_versus_half_integer_spacing(self):
        powers = []
        for d in (18 * LAMBDA, 17.5 * LAMBDA):
            sc = Scenario(TrapConfig(CA40, axial_freq_for_spacing(d), K), contrast=0.8, seed=3)
            powers.append(np.mean([run_beat_power(generate_run(sc, key=(0, r))) for r in range(5)]))
        peak, null = powers
        assert peak > 100 * null

    def test_subtraction_switch(self):
        sc = Scenario(TrapConfig(CA40, axial_freq_for_spacing(5e-6), K), contrast=0.8)
        run = generate_run(sc)
        raw = run_beat_power(run, subtract_noise=False)
        assert raw - run_beat_power(run) == pytest.approx(noise_floor(run), rel=1e-12)


class TestPhaseStability:
    def test_matched_tone_hits_cap(self):
        rep = phase_stability([analytic_envelope(tone())])
        assert rep.coherence_time == pytest.approx(COHERENCE_CAP_FACTOR * 50.0)
        assert rep.n_runs == 1

    def test_drifting_phase_lowers_coherence(self):
        sc = Scenario(TrapConfig(CA40, axial_freq_for_spacing(18 * LAMBDA), K), contrast=0.8,
                      mean_counts_per_bin=200.0, phase_diffusion=0.05)
        envs = [analytic_envelope(generate_run(sc, key=(r,))) for r in range(5)]
        rep = phase_stability(envs)
        assert rep.coherence_time < 100
        assert rep.freq_std == pytest.approx(1 / rep.coherence_time)

    def test_empty(self):
        with pytest.raises(ValueError):
            phase_stability([])

    def test_envelope_duration(self):
        env = Envelope(T, np.ones_like(T), np.zeros_like(T), np.zeros_like(T))
        assert env.duration == pytest.approx(50.0)
