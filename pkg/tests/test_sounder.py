import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from subthz_sounder.scene import CanyonGeometry, PathKind, PropagationPath, placement_along_street, trace_paths
from subthz_sounder.sounder import (AntennaPattern, SounderConfig, antenna_gain_at, effective_cir,
                                    kraus_hpbw, simulate_angle, simulate_capture)
from subthz_sounder.waveform import make_b2b_reference, make_sequence, synthesize_baseband


def los_path(delay=100.07e-9, gain=10 ** (-105.96 / 20), aoa=0.0):
    return PropagationPath(delay, aoa, complex(gain), PathKind.LOS)


def setup(**overrides):
    cfg = SounderConfig(**overrides)
    seq = make_sequence(cfg.bandwidth, cfg.sequence_duration, cfg.zc_root)
    wf, _ = synthesize_baseband(seq, cfg.oversampling)
    ref = make_b2b_reference(seq, cfg.chain_gain, cfg.chain_delay, cfg.oversampling, cfg.tx_power_w)
    return cfg, wf, ref


def xcorr(x, ref):
    return np.fft.ifft(np.fft.fft(x, axis=-1) * np.fft.fft(ref.samples).conj(), axis=-1) / ref.energy


class TestAntenna:
    pattern = AntennaPattern()

    def test_boresight(self):
        assert antenna_gain_at(self.pattern, 0.0) == pytest.approx(100.0, rel=1e-15)

    def test_half_power(self):
        g = antenna_gain_at(self.pattern, self.pattern.hpbw / 2)
        assert 10 * math.log10(g / 100.0) == pytest.approx(-3.0103, abs=0.01)

    def test_back(self):
        assert antenna_gain_at(self.pattern, math.pi) == pytest.approx(100.0 * 1e-3)

    def test_kraus(self):
        assert math.degrees(kraus_hpbw(20.0)) == pytest.approx(20.31, abs=0.01)

    @given(st.floats(-20.0, 20.0))
    def test_bounds(self, offset):
        g = antenna_gain_at(self.pattern, offset)
        assert 0.1 - 1e-12 <= g <= 100.0
        assert g == pytest.approx(antenna_gain_at(self.pattern, -offset))

    def test_invalid(self):
        with pytest.raises(ValueError):
            AntennaPattern(sidelobe_floor=3.0)


class TestEffectiveCir:
    pattern = AntennaPattern()

    def test_boresight_product(self):
        p = los_path()
        (delay, amp), = effective_cir([p], 0.0, self.pattern, 8.0)
        assert delay == p.delay
        assert amp == pytest.approx(p.gain * math.sqrt(10 ** 0.8 * 100.0))

    def test_back_lobe(self):
        p = los_path()
        (_, front), = effective_cir([p], 0.0, self.pattern, 8.0)
        (_, back), = effective_cir([p], math.pi, self.pattern, 8.0)
        assert 20 * math.log10(abs(back) / abs(front)) == pytest.approx(-30.0, abs=1e-9)

    def test_symmetric_pair(self):
        h = self.pattern.hpbw / 2
        paths = [los_path(aoa=1.0 - h), los_path(aoa=1.0 + h)]
        (_, a), (_, b) = effective_cir(paths, 1.0, self.pattern, 0.0)
        assert abs(a) == pytest.approx(abs(b), rel=1e-12)

    def test_empty(self):
        with pytest.raises(ValueError):
            effective_cir([], 0.0, self.pattern, 0.0)


class TestConfig:
    def test_rotation_coverage(self):
        az = np.degrees(SounderConfig().pointing_azimuths)
        assert np.allclose(az, np.arange(24) * 15.0, atol=1e-12)

    @pytest.mark.parametrize("kw", [dict(n_angle_bins=23), dict(angle_step=0.2),
                                    dict(bandwidth=0), dict(n_snapshots=0),
                                    dict(sequence_duration=-1.0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SounderConfig(**kw)


class TestSimulate:
    def test_noiseless_identical_snapshots(self):
        cfg, wf, ref = setup(add_noise=False, phase_drift_std_per_snapshot=0.0, n_snapshots=5)
        cap = simulate_angle(cfg, [los_path()], wf, 0)
        assert cap.snapshots.shape == (5, len(wf))
        assert np.all(cap.snapshots == cap.snapshots[0])
        corr = np.abs(xcorr(cap.snapshots[0].astype(complex), ref))
        peak = int(np.argmax(corr))
        assert abs(peak / cfg.sample_rate - 100.07e-9) <= 0.5 / cfg.sample_rate

    def test_determinism(self):
        cfg, wf, _ = setup(n_snapshots=4, rng_seed=11)
        a = simulate_capture(cfg, [los_path()], wf, [0, 3])
        b = simulate_capture(cfg, [los_path()], wf, [0, 3])
        assert all(x.snapshots.tobytes() == y.snapshots.tobytes() for x, y in zip(a, b))
        c = simulate_capture(dataclasses.replace(cfg, rng_seed=12), [los_path()], wf, [0])
        assert c[0].snapshots.tobytes() != a[0].snapshots.tobytes()

    def test_bin_streams_independent_of_order(self):
        cfg, wf, _ = setup(n_snapshots=3, n_angle_bins=4, angle_step=math.pi / 2)
        full = simulate_capture(cfg, [los_path()], wf)
        alone = simulate_angle(cfg, [los_path()], wf, 2)
        assert full[2].snapshots.tobytes() == alone.snapshots.tobytes()

    def test_window_too_short(self):
        cfg, wf, _ = setup(sequence_duration=0.1e-6)
        with pytest.raises(ValueError):
            simulate_angle(cfg, [los_path()], wf, 0)

    def test_tx_power_snr_difference(self):
        def snr_db(tx_power, seed):
            cfg, wf, ref = setup(tx_power=tx_power, rx_noise_figure=22.7, n_snapshots=1,
                                 rng_seed=seed)
            cap = simulate_angle(cfg, [los_path()], wf, 0)
            power = np.abs(xcorr(cap.snapshots[0].astype(complex), ref)) ** 2
            peak = int(np.argmax(power))
            floor = np.delete(power, np.arange(peak - 20, peak + 21) % len(power)).mean()
            return 10 * math.log10(power[peak] / floor)

        diffs = [snr_db(10.0, s) - snr_db(3.0, s + 1000) for s in range(20)]
        assert np.mean(diffs) == pytest.approx(7.0, abs=0.3)

    def test_noise_whiteness(self):
        cfg, wf, _ = setup(n_snapshots=128)
        cap = simulate_angle(cfg, [], wf, 0)
        psd = np.mean(np.abs(np.fft.fft(cap.snapshots.astype(complex), axis=-1)) ** 2, axis=0)
        bands = psd[: len(psd) // 64 * 64].reshape(64, -1).mean(axis=1)
        level = 10 * np.log10(bands / bands.mean())
        assert np.max(np.abs(level)) <= 1.0
        expected = cfg.noise_power_w * cfg.chain_gain ** 2 * len(wf)
        assert bands.mean() == pytest.approx(expected, rel=0.05)

    def test_phase_drift_statistics(self):
        sigma = 0.05
        cfg, wf, ref = setup(add_noise=False, phase_drift_std_per_snapshot=sigma, n_snapshots=501,
                             rng_seed=3)
        cap = simulate_angle(cfg, [los_path()], wf, 0)
        corr = xcorr(cap.snapshots.astype(complex), ref)
        peak = int(np.argmax(np.abs(corr[0])))
        steps = np.angle(corr[1:, peak] * corr[:-1, peak].conj())
        circ_std = math.sqrt(-2 * math.log(abs(np.mean(np.exp(1j * steps)))))
        assert circ_std == pytest.approx(sigma, rel=0.2)


def test_canyon_capture_shapes():
    cfg, wf, _ = setup(n_snapshots=2)
    paths = trace_paths(CanyonGeometry(), placement_along_street(30.0), cfg.carrier_frequency)
    caps = simulate_capture(cfg, paths, wf)
    assert [c.angle_bin for c in caps] == list(range(24))
    assert all(c.snapshots.dtype == np.complex64 and c.snapshots.shape == (2, len(wf)) for c in caps)
