"""Synthetic SSVEP data with ground-truth labels.

Each stimulus drives a harmonic series s(t) = sum_h h**(-decay) *
sin(2*pi*h*f*t + h*phi), normalized to unit RMS; phase is defined at
stimulus onset and generated epochs start at onset.  A trial is that latent
source mixed into a per-(subject, device) random channel column plus
1/f-shaped Gaussian noise scaled to the configured SNR.  Everything is
deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import core
from .core import Dataset, DomainId, Montage, StimulusSpec
from .errors import InvalidArgumentError

ACTIVE_TWO_LABELS = ("POz", "PO3", "PO4", "PO7", "PO8", "Oz", "O1", "O2")
QUICK30_LABELS = ("PO3", "PO4", "PO7", "PO8", "O1", "O2")


def default_montages() -> tuple[Montage, Montage]:
    """An 8-channel lab montage and a 6-channel mobile montage at 256 Hz."""
    return (
        Montage("synth8", ACTIVE_TWO_LABELS, 256.0, 0.0),
        Montage("synth6", QUICK30_LABELS, 256.0, 0.0),
    )


def default_stimulus_indices(n_targets: int = 8) -> tuple[int, ...]:
    """Desk-scale subset of the 40-target grid: indices 1, 6, 11, ..."""
    return tuple(1 + 5 * i for i in range(n_targets))


@dataclass(frozen=True)
class SynthConfig:
    """Generator parameters; a fixed seed makes output byte-identical."""

    n_subjects: int = 5
    n_trials_per_stimulus: int = 6
    stimulus_indices: tuple[int, ...] = field(default_factory=default_stimulus_indices)
    sample_rate_hz: float = 256.0
    duration_seconds: float = 1.5
    n_harmonics: int = 3
    harmonic_decay: float = 1.0
    snr_db: float = -18.0
    device_montages: tuple[Montage, ...] = field(default_factory=default_montages)
    rng_seed: int = 0
    per_harmonic_mixing: bool = False  # richer (rank > 1) mixing when True

    def __post_init__(self):
        object.__setattr__(self, "stimulus_indices", tuple(self.stimulus_indices))
        object.__setattr__(self, "device_montages", tuple(self.device_montages))
        table = core.build_stimulus_table()
        max_freq = max(table[i - 1].frequency for i in self.stimulus_indices)
        if self.n_harmonics * max_freq >= self.sample_rate_hz / 2:
            raise InvalidArgumentError(
                f"{self.n_harmonics} harmonics of {max_freq} Hz exceed Nyquist "
                f"{self.sample_rate_hz / 2} Hz"
            )
        if not np.isfinite(self.snr_db):
            raise InvalidArgumentError("snr_db must be finite")

    @property
    def n_samples(self) -> int:
        return round(self.duration_seconds * self.sample_rate_hz)

    def stimulus_specs(self) -> list[StimulusSpec]:
        table = core.build_stimulus_table()
        return [table[i - 1] for i in self.stimulus_indices]


def generate_latent_ssvep(spec: StimulusSpec, cfg: SynthConfig) -> np.ndarray:
    """Unit-RMS harmonic series for one stimulus, sampled over the epoch."""
    t = np.arange(cfg.n_samples) / cfg.sample_rate_hz
    s = np.zeros_like(t)
    for h in range(1, cfg.n_harmonics + 1):
        s += h ** (-cfg.harmonic_decay) * np.sin(
            2 * np.pi * h * spec.frequency * t + h * spec.phase
        )
    rms = np.sqrt(np.mean(s**2))
    return s / rms if rms > 0 else s


def _one_over_f_noise(rng: np.random.Generator, shape: tuple[int, int], n_samples: int,
                      rate_hz: float) -> np.ndarray:
    """Unit-RMS Gaussian noise with power ~ 1/f plus a -20 dB white floor."""
    white = rng.standard_normal((shape[0], n_samples))
    spectrum = np.fft.rfft(white, axis=-1)
    freqs = np.fft.rfftfreq(n_samples, d=1.0 / rate_hz)
    power = 1.0 / np.maximum(freqs, 1.0) + 0.01
    spectrum *= np.sqrt(power)
    shaped = np.fft.irfft(spectrum, n=n_samples, axis=-1)
    rms = np.sqrt(np.mean(shaped**2))
    return shaped / rms


def _derived_seed(base: int, subject_idx: int, device_idx: int) -> int:
    return (base ^ subject_idx ^ (device_idx << 32)) & 0xFFFFFFFFFFFFFFFF


def generate_subject_dataset(
    subject_idx: int, device_idx: int, cfg: SynthConfig
) -> Dataset:
    """Generate all trials of one subject on one device.

    All subjects share the latent sources; the mixing column (or per-harmonic
    mixing matrix) is redrawn per (subject, device) from the derived seed, so
    cross-subject structure matches the linear channel-map transfer model.
    """
    if not 0 <= subject_idx < cfg.n_subjects:
        raise InvalidArgumentError(f"subject_idx {subject_idx} out of range")
    if not 0 <= device_idx < len(cfg.device_montages):
        raise InvalidArgumentError(f"device_idx {device_idx} out of range")

    montage = cfg.device_montages[device_idx]
    n_channels = montage.n_channels
    rng = np.random.default_rng(_derived_seed(cfg.rng_seed, subject_idx, device_idx))

    n_mix_cols = cfg.n_harmonics if cfg.per_harmonic_mixing else 1
    mixing = rng.standard_normal((n_channels, n_mix_cols))

    signal_gain = 10.0 ** (cfg.snr_db / 20.0)
    trials: dict[int, np.ndarray] = {}
    for spec in cfg.stimulus_specs():
        if cfg.per_harmonic_mixing:
            t = np.arange(cfg.n_samples) / cfg.sample_rate_hz
            harmonics = np.stack(
                [
                    h ** (-cfg.harmonic_decay)
                    * np.sin(2 * np.pi * h * spec.frequency * t + h * spec.phase)
                    for h in range(1, cfg.n_harmonics + 1)
                ]
            )
            latent = mixing @ harmonics
        else:
            latent = mixing @ generate_latent_ssvep(spec, cfg)[np.newaxis, :]
        latent_rms = np.sqrt(np.mean(latent**2))
        signal = latent / latent_rms if latent_rms > 0 else latent

        block = np.empty((cfg.n_trials_per_stimulus, n_channels, cfg.n_samples))
        for i in range(cfg.n_trials_per_stimulus):
            noise = _one_over_f_noise(
                rng, (n_channels, cfg.n_samples), cfg.n_samples, cfg.sample_rate_hz
            )
            block[i] = signal_gain * signal + noise
        trials[spec.index] = block

    domain = DomainId(
        subject=f"S{subject_idx:02d}", session="synth", device=montage.device_name
    )
    return Dataset.from_arrays(domain, montage, trials)


def generate_all_subjects(cfg: SynthConfig, device_idx: int = 0) -> list[Dataset]:
    """One dataset per subject on the given device."""
    return [generate_subject_dataset(s, device_idx, cfg) for s in range(cfg.n_subjects)]
