import collections

import numpy as np
import pytest

from noir.signal import DEFAULT_MONTAGE, FilterSpec, apply_filter, select_channels
from noir.synth import (
    MI_CLASS_GROUPS,
    ClenchProfile,
    MiProfile,
    SsvepStimulus,
    band_limited_noise,
    gen_calibration_session,
    gen_clench_window,
    gen_mi,
    gen_ssvep,
    pink_noise,
)

FS = 250.0


class TestProfiles:
    def test_ssvep_validation(self):
        with pytest.raises(ValueError):
            SsvepStimulus(frequencies=(6.0, 6.0))
        with pytest.raises(ValueError):
            SsvepStimulus(duration_s=0.0)

    def test_mi_validation(self):
        with pytest.raises(ValueError):
            MiProfile(classes=())
        with pytest.raises(ValueError):
            MiProfile(classes=("LeftHand", "Telekinesis"))

    def test_clench_validation(self):
        with pytest.raises(ValueError):
            ClenchProfile(rest_var=2.0, clench_var=1.0)
        with pytest.raises(ValueError):
            ClenchProfile(window_s=0.0)


class TestNoise:
    def test_pink_noise_slope(self):
        # average periodogram over many draws should fall off with frequency
        rng = np.random.default_rng(0)
        n = 4096
        psd = np.zeros(n // 2)
        for _ in range(30):
            x = pink_noise(n, rng)
            psd += np.abs(np.fft.rfft(x - x.mean())[1 : n // 2 + 1]) ** 2
        lo = psd[2:20].mean()
        hi = psd[-200:].mean()
        assert lo > 10 * hi  # 1/f: low frequencies dominate

    def test_band_limited_noise_stays_in_band(self):
        rng = np.random.default_rng(1)
        x = band_limited_noise(2000, FS, (10.0, 26.0), rng)
        spec = np.abs(np.fft.rfft(x)) ** 2
        freqs = np.fft.rfftfreq(2000, 1 / FS)
        inside = spec[(freqs >= 10.0) & (freqs <= 26.0)].sum()
        outside = spec[(freqs < 10.0) | (freqs > 26.0)].sum()
        assert outside < 1e-9 * inside


class TestGenSsvep:
    def test_noise_free_is_pure_target_tones(self):
        stim = SsvepStimulus(snr_db=float("inf"))
        epoch = gen_ssvep(stim, 1, seed=0)  # 7.5 Hz
        vis = select_channels(epoch, "visual")
        t = np.arange(vis.n_samples) / FS
        basis = np.vstack(
            [np.sin(2 * np.pi * f * t) for f in (7.5, 15.0)]
            + [np.cos(2 * np.pi * f * t) for f in (7.5, 15.0)]
        )
        # every visual channel lies in the span of the target tones
        coef, *_ = np.linalg.lstsq(basis.T, vis.data.T, rcond=None)
        assert np.allclose(basis.T @ coef, vis.data.T, atol=1e-9)
        # non-visual channels carry nothing in the noise-free limit
        rest = [c for c in epoch.channel_ids if c not in vis.channel_ids]
        assert np.allclose(select_channels(epoch, rest).data, 0.0)

    def test_determinism(self):
        stim = SsvepStimulus(snr_db=0.0)
        a = gen_ssvep(stim, 2, seed=42)
        b = gen_ssvep(stim, 2, seed=42)
        assert np.array_equal(a.data, b.data)
        c = gen_ssvep(stim, 2, seed=43)
        assert not np.array_equal(a.data, c.data)

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            gen_ssvep(SsvepStimulus(), 4, seed=0)

    def test_fft_peak_at_target(self):
        # FFT peak-picking oracle at SNR 0 dB
        stim = SsvepStimulus(snr_db=0.0)
        epoch = gen_ssvep(stim, 1, seed=5)
        mean_vis = select_channels(epoch, "visual").data.mean(axis=0)
        freqs = np.fft.rfftfreq(epoch.n_samples, 1 / FS)
        spec = np.abs(np.fft.rfft(mean_vis))
        band = (freqs > 3.0) & (freqs < 40.0)
        peak = freqs[band][np.argmax(spec[band])]
        assert abs(peak - 7.5) <= freqs[1]  # within one bin

    def test_target_bin_beats_other_stimulus_bins(self):
        # spec invariant, Monte-Carlo n=200 at snr >= 0
        stim = SsvepStimulus(snr_db=0.0)
        wins = 0
        for seed in range(200):
            target = seed % 4
            epoch = gen_ssvep(stim, target, seed=seed)
            vis = select_channels(epoch, "visual").data.mean(axis=0)
            freqs = np.fft.rfftfreq(epoch.n_samples, 1 / FS)
            spec = np.abs(np.fft.rfft(vis))
            energy = [
                spec[np.argmin(np.abs(freqs - f))] for f in stim.frequencies
            ]
            wins += np.argmax(energy) == target
        assert wins >= 0.95 * 200

    def test_snr_definition(self):
        # at snr_db = 0, energy in the target + harmonic FFT bins matches
        # the energy everywhere else (sinusoids live in exactly two bins
        # at the 6 Hz target over a 10 s window)
        stim = SsvepStimulus(snr_db=0.0)
        ratios = []
        for seed in range(20):
            epoch = gen_ssvep(stim, 0, seed=seed)
            vis = select_channels(epoch, "visual").data
            freqs = np.fft.rfftfreq(epoch.n_samples, 1 / FS)
            sig_bins = [np.argmin(np.abs(freqs - f)) for f in (6.0, 12.0)]
            for row in vis:
                spec = np.abs(np.fft.rfft(row)) ** 2
                sig = spec[sig_bins].sum()
                noise = spec.sum() - sig
                ratios.append(sig / noise)
        assert 10 * np.log10(np.mean(ratios)) == pytest.approx(0.0, abs=1.5)


class TestGenMi:
    def test_shape_and_determinism(self):
        profile = MiProfile()
        e = gen_mi(profile, 0, seed=3)
        assert e.n_samples == 1250  # 5 s at 250 Hz
        assert e.label == "LeftHand"
        assert np.array_equal(e.data, gen_mi(profile, 0, seed=3).data)

    def test_contralateral_group_boosted(self):
        # LeftHand boosts the right-motor group in >= 95% of 200 epochs
        profile = MiProfile(modulation_db=6.0)
        wins = 0
        for seed in range(200):
            e = gen_mi(profile, 0, seed=seed)
            right = select_channels(e, "motor_right").data.var(axis=1).mean()
            left = select_channels(e, "motor_left").data.var(axis=1).mean()
            mid = select_channels(e, "motor_mid").data.var(axis=1).mean()
            wins += right > max(left, mid)
        assert wins >= 190

    def test_rest_applies_no_boost(self):
        assert MI_CLASS_GROUPS["Rest"] is None
        profile = MiProfile(modulation_db=20.0)
        e = gen_mi(profile, 3, seed=1)
        variances = [
            select_channels(e, g).data.var(axis=1).mean()
            for g in ("motor_left", "motor_right", "motor_mid")
        ]
        assert max(variances) < 3 * min(variances)

    def test_rebandpass_changes_variance_under_5pct(self):
        # spec invariant: the generator output is already band-limited
        band = FilterSpec(kind="band-pass", band=(8.0, 30.0), order=4)
        profile = MiProfile()
        for seed in range(10):
            e = select_channels(gen_mi(profile, seed % 4, seed=seed), "motor")
            filtered = apply_filter(e, band)
            v0 = e.data.var(axis=1)
            v1 = filtered.data.var(axis=1)
            assert np.all(np.abs(v1 - v0) / v0 < 0.05)

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            gen_mi(MiProfile(), 4, seed=0)


class TestCalibrationSession:
    def test_four_classes_gives_80_epochs(self):
        epochs = gen_calibration_session(MiProfile(), seed=0)
        assert len(epochs) == 80
        counts = collections.Counter(e.label for e in epochs)
        assert all(v == 20 for v in counts.values()) and len(counts) == 4

    def test_two_classes_gives_40(self):
        profile = MiProfile(classes=("LeftHand", "RightHand"))
        assert len(gen_calibration_session(profile, seed=0)) == 40

    def test_block_structure(self):
        epochs = gen_calibration_session(MiProfile(), seed=5)
        block = len(MiProfile().classes) * 5
        for b in range(4):
            labels = [e.label for e in epochs[b * block : (b + 1) * block]]
            counts = collections.Counter(labels)
            assert all(v == 5 for v in counts.values())

    def test_blocks_are_shuffled(self):
        epochs = gen_calibration_session(MiProfile(), seed=1)
        labels = [e.label for e in epochs[:20]]
        assert labels != sorted(labels)  # vanishing chance if shuffled

    def test_determinism(self):
        a = gen_calibration_session(MiProfile(), seed=9)
        b = gen_calibration_session(MiProfile(), seed=9)
        assert all(np.array_equal(x.data, y.data) for x, y in zip(a, b))


class TestGenClench:
    def test_window_length(self):
        e = gen_clench_window(ClenchProfile(), False, seed=0)
        assert e.n_samples == 125

    def test_variance_concentration(self):
        profile = ClenchProfile(rest_var=1.0, clench_var=100.0)
        for seed in range(200):
            e = gen_clench_window(profile, True, seed=seed)
            v = e.data.var(axis=1, ddof=1)
            assert np.all((v > 50.0) & (v < 200.0))

    def test_determinism(self):
        a = gen_clench_window(ClenchProfile(), True, seed=4)
        b = gen_clench_window(ClenchProfile(), True, seed=4)
        assert np.array_equal(a.data, b.data)
