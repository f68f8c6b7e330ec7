import numpy as np
import pytest

from ssvep_lst.core import build_stimulus_table, validate_dataset
from ssvep_lst.errors import InvalidArgumentError
from ssvep_lst.preprocess import FilterBankSpec
from ssvep_lst.synth import (
    SynthConfig,
    generate_latent_ssvep,
    generate_subject_dataset,
)
from ssvep_lst.trca import classify, fit_model


def spectrum_peak_hz(signal, rate):
    mags = np.abs(np.fft.rfft(signal))
    freqs = np.fft.rfftfreq(signal.size, 1.0 / rate)
    return freqs[np.argmax(mags)]


class TestLatentSource:
    def test_single_harmonic_pure_sine(self):
        cfg = SynthConfig(n_harmonics=1)
        table = build_stimulus_table()
        s = generate_latent_ssvep(table[0], cfg)  # 8 Hz, phase 0
        assert spectrum_peak_hz(s, 256.0) == pytest.approx(8.0, abs=0.2)
        t = np.arange(s.size) / 256.0
        expected = np.sin(2 * np.pi * 8.0 * t)
        expected /= np.sqrt(np.mean(expected**2))
        np.testing.assert_allclose(s, expected, atol=1e-9)

    def test_second_harmonic_half_amplitude(self):
        cfg = SynthConfig(n_harmonics=2, harmonic_decay=1.0)
        table = build_stimulus_table()
        s = generate_latent_ssvep(table[10], cfg)  # 10 Hz
        n_fft = 8 * s.size
        mags = np.abs(np.fft.rfft(s, n=n_fft))
        freqs = np.fft.rfftfreq(n_fft, 1.0 / 256.0)
        fundamental = mags[np.argmin(np.abs(freqs - 10.0))]
        second = mags[np.argmin(np.abs(freqs - 20.0))]
        assert second / fundamental == pytest.approx(0.5, abs=0.02)

    def test_unit_rms(self):
        cfg = SynthConfig()
        for spec in cfg.stimulus_specs():
            s = generate_latent_ssvep(spec, cfg)
            assert np.sqrt(np.mean(s**2)) == pytest.approx(1.0, rel=1e-9)

    def test_12hz_peak(self):
        cfg = SynthConfig(n_harmonics=1)
        table = build_stimulus_table()
        s = generate_latent_ssvep(table[20], cfg)  # index 21 = 12 Hz
        assert spectrum_peak_hz(s, 256.0) == pytest.approx(12.0, abs=0.2)


class TestSubjectDataset:
    def test_determinism(self):
        cfg = SynthConfig(rng_seed=42)
        a = generate_subject_dataset(1, 0, cfg)
        b = generate_subject_dataset(1, 0, cfg)
        for stim in a.stimulus_indices:
            np.testing.assert_array_equal(a.stack(stim), b.stack(stim))

    def test_different_seeds_differ(self):
        a = generate_subject_dataset(0, 0, SynthConfig(rng_seed=1))
        b = generate_subject_dataset(0, 0, SynthConfig(rng_seed=2))
        assert not np.array_equal(a.stack(1), b.stack(1))

    def test_validates_clean(self):
        ds = generate_subject_dataset(0, 1, SynthConfig())
        assert validate_dataset(ds) == []
        assert ds.montage.n_channels == 6

    def test_high_snr_decodable(self):
        cfg = SynthConfig(snr_db=40.0, n_trials_per_stimulus=8, n_subjects=1)
        ds = generate_subject_dataset(0, 0, cfg)
        train = {s: ds.stack(s)[:5] for s in ds.stimulus_indices}
        from ssvep_lst.core import Dataset
        train_ds = Dataset.from_arrays(ds.domain, ds.montage, train)
        model = fit_model(train_ds, FilterBankSpec())
        correct = total = 0
        for stim in ds.stimulus_indices:
            for trial in ds.stack(stim)[5:]:
                correct += classify(trial, model).decision == stim
                total += 1
        assert correct / total >= 0.99

    def test_zero_signal_chance_accuracy(self):
        # gain ~ 0: decisions should be at chance over many trials
        cfg = SynthConfig(
            snr_db=-200.0, n_trials_per_stimulus=5, n_subjects=1,
            stimulus_indices=(1, 6, 11, 16),
        )
        train_ds = generate_subject_dataset(0, 0, cfg)
        model = fit_model(train_ds, FilterBankSpec(band_edges=((8.0, 88.0),)))
        test_cfg = SynthConfig(
            snr_db=-200.0, n_trials_per_stimulus=250, n_subjects=1,
            stimulus_indices=(1, 6, 11, 16), rng_seed=99,
        )
        test_ds = generate_subject_dataset(0, 0, test_cfg)
        correct = total = 0
        for stim in test_ds.stimulus_indices:
            for trial in test_ds.stack(stim):
                correct += classify(trial, model).decision == stim
                total += 1
        assert total == 1000
        assert abs(correct / total - 0.25) <= 0.05

    def test_out_of_range_indices(self):
        cfg = SynthConfig()
        with pytest.raises(InvalidArgumentError):
            generate_subject_dataset(cfg.n_subjects, 0, cfg)
        with pytest.raises(InvalidArgumentError):
            generate_subject_dataset(0, 5, cfg)

    def test_harmonics_above_nyquist_rejected(self):
        with pytest.raises(InvalidArgumentError):
            SynthConfig(n_harmonics=20)

    def test_noiseless_limit_transfer_residual(self):
        # shared latent + rank-1 mixing: LST recovery is exact as SNR -> inf
        from ssvep_lst.lst import build_targets, transfer_dataset

        cfg = SynthConfig(snr_db=120.0, n_subjects=2, n_trials_per_stimulus=2)
        target_ds = generate_subject_dataset(0, 0, cfg)
        source_ds = generate_subject_dataset(1, 0, cfg)
        _, maps = transfer_dataset(source_ds, build_targets(target_ds), target_ds.montage)
        template_norm = np.linalg.norm(target_ds.epochs[1][0].data)
        assert max(m.residual_frobenius for m in maps) <= 1e-3 * template_norm
