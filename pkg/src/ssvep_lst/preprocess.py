"""Signal conditioning: resampling, re-referencing, epoching, notch, filter bank.

The standard chain is ``resample -> rereference -> extract_epoch ->
notch_filter -> filter_bank``, producing 1.5 s epochs of 384 samples at
256 Hz.  All filters are applied forward-backward (zero phase) with 0.25 s
of reflection padding so that short epochs do not suffer edge transients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import signal

from .errors import (
    ChannelNotFoundError,
    InsufficientDataError,
    InvalidArgumentError,
    InvalidBandError,
    UnsupportedRatioError,
)

MAX_RESAMPLE_TERM = 4096
EDGE_PAD_SECONDS = 0.25
NOTCH_PAD_SECONDS = 0.75


@dataclass(frozen=True)
class PreprocessConfig:
    """Parameters of the conditioning chain."""

    target_rate_hz: float = 256.0
    reference_channel: str = "Fz"
    epoch_start_seconds: float = 0.15  # latency L
    epoch_duration_seconds: float = 1.5
    notch_frequency_hz: float = 60.0
    notch_quality_factor: float = 35.0

    def __post_init__(self):
        if self.epoch_duration_seconds <= 0:
            raise InvalidArgumentError("epoch duration must be positive")
        if self.target_rate_hz <= 2 * self.notch_frequency_hz:
            raise InvalidArgumentError(
                f"target rate {self.target_rate_hz} Hz must exceed twice the "
                f"notch frequency {self.notch_frequency_hz} Hz"
            )

    @property
    def epoch_samples(self) -> int:
        return round_half_away(self.epoch_duration_seconds * self.target_rate_hz)


def default_band_edges(n_bands: int = 5, step_hz: float = 8.0, high_hz: float = 88.0):
    """Sub-band edges following the harmonic-stacking convention:
    band k spans [step*k, high] Hz."""
    return tuple((step_hz * (k + 1), high_hz) for k in range(n_bands))


@dataclass(frozen=True)
class FilterBankSpec:
    """Band edges of the sub-band decomposition used by the decoder."""

    band_edges: tuple[tuple[float, float], ...] = field(
        default_factory=default_band_edges
    )
    sample_rate_hz: float = 256.0
    order: int = 4

    def __post_init__(self):
        edges = tuple((float(lo), float(hi)) for lo, hi in self.band_edges)
        object.__setattr__(self, "band_edges", edges)
        nyquist = self.sample_rate_hz / 2.0
        lows = [lo for lo, _ in edges]
        for lo, hi in edges:
            if not (0 < lo < hi < nyquist):
                raise InvalidBandError(
                    f"band ({lo}, {hi}) Hz must satisfy 0 < low < high < "
                    f"Nyquist {nyquist} Hz"
                )
        if any(b <= a for a, b in zip(lows, lows[1:])):
            raise InvalidBandError(f"low edges must be strictly increasing: {lows}")

    @property
    def n_bands(self) -> int:
        return len(self.band_edges)


def round_half_away(x: float) -> int:
    """Round to nearest integer, halves away from zero (platform independent)."""
    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


def resample(data: np.ndarray, from_rate_hz: float, to_rate_hz: float) -> np.ndarray:
    """Rational-ratio sample rate conversion (upsample, anti-alias, downsample).

    The ratio to/from must reduce to p/q with p, q <= 4096.  Output length is
    ceil(n_samples * p / q).  A same-rate call returns the input unchanged.
    """
    if from_rate_hz <= 0 or to_rate_hz <= 0:
        raise InvalidArgumentError("sample rates must be positive")
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if from_rate_hz == to_rate_hz:
        return data.copy()
    try:
        ratio = Fraction(to_rate_hz / from_rate_hz).limit_denominator(
            MAX_RESAMPLE_TERM
        )
    except (OverflowError, ValueError) as exc:
        raise UnsupportedRatioError(str(exc)) from exc
    p, q = ratio.numerator, ratio.denominator
    if p > MAX_RESAMPLE_TERM or q > MAX_RESAMPLE_TERM or p == 0:
        raise UnsupportedRatioError(
            f"ratio {to_rate_hz}/{from_rate_hz} needs {p}/{q}, terms must be "
            f"<= {MAX_RESAMPLE_TERM}"
        )
    if not math.isclose(p / q, to_rate_hz / from_rate_hz, rel_tol=1e-12):
        raise UnsupportedRatioError(
            f"ratio {to_rate_hz}/{from_rate_hz} is not rational within bounds"
        )
    return signal.resample_poly(data, p, q, axis=-1)


def resample_ratio(from_rate_hz: float, to_rate_hz: float) -> tuple[int, int]:
    """Reduced (p, q) used by :func:`resample`; e.g. 500 -> 256 gives (64, 125)."""
    ratio = Fraction(to_rate_hz / from_rate_hz).limit_denominator(MAX_RESAMPLE_TERM)
    return ratio.numerator, ratio.denominator


def rereference(
    data: np.ndarray, channel_labels: list[str], reference_label: str
) -> tuple[np.ndarray, list[str]]:
    """Subtract the reference channel from every other channel and drop it.

    Returns (referenced data, retained labels).
    """
    labels = list(channel_labels)
    if reference_label not in labels:
        raise ChannelNotFoundError(
            f"reference channel {reference_label!r} not in {labels}"
        )
    data = np.asarray(data, dtype=np.float64)
    ref_idx = labels.index(reference_label)
    keep = [i for i in range(len(labels)) if i != ref_idx]
    out = data[keep] - data[ref_idx][np.newaxis, :]
    return out, [labels[i] for i in keep]


def extract_epoch(
    continuous: np.ndarray, onset_seconds: float, cfg: PreprocessConfig
) -> np.ndarray:
    """Cut the [onset+L, onset+L+duration) window out of a continuous recording.

    Start index = round((onset+L) * rate) with halves rounded away from zero;
    length = round(duration * rate) samples (384 for the standard 1.5 s @ 256 Hz).
    """
    continuous = np.atleast_2d(np.asarray(continuous, dtype=np.float64))
    rate = cfg.target_rate_hz
    start = round_half_away((onset_seconds + cfg.epoch_start_seconds) * rate)
    length = cfg.epoch_samples
    if start < 0 or start + length > continuous.shape[-1]:
        raise InsufficientDataError(
            f"window [{start}, {start + length}) outside recording of "
            f"{continuous.shape[-1]} samples"
        )
    return continuous[:, start : start + length].copy()


def _filtfilt_padded(
    sos: np.ndarray,
    data: np.ndarray,
    rate_hz: float,
    pad_seconds: float = EDGE_PAD_SECONDS,
    mode: str = "reflect",
) -> np.ndarray:
    """Zero-phase filtering with explicit edge padding, then trim.

    "reflect" padding suits broadband band-pass stages; "wrap" (circular)
    padding is used for the notch, where the line-noise component is
    periodic within the epoch and so continues exactly across the seam.
    """
    pad = round_half_away(pad_seconds * rate_hz)
    n = data.shape[-1]
    pad = min(pad, n - 1 if mode == "reflect" else n)
    if pad > 0:
        padded = np.pad(data, [(0, 0)] * (data.ndim - 1) + [(pad, pad)], mode=mode)
    else:
        padded = data
    out = signal.sosfiltfilt(sos, padded, axis=-1, padtype=None)
    if pad > 0:
        out = out[..., pad:-pad]
    return np.ascontiguousarray(out)


def notch_filter(data: np.ndarray, cfg: PreprocessConfig) -> np.ndarray:
    """Suppress line noise with a zero-phase IIR notch at cfg.notch_frequency_hz."""
    nyquist = cfg.target_rate_hz / 2.0
    if cfg.notch_frequency_hz >= nyquist:
        raise InvalidArgumentError(
            f"notch frequency {cfg.notch_frequency_hz} Hz >= Nyquist {nyquist} Hz"
        )
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    b, a = signal.iirnotch(
        cfg.notch_frequency_hz, cfg.notch_quality_factor, fs=cfg.target_rate_hz
    )
    sos = signal.tf2sos(b, a)
    return _filtfilt_padded(
        sos, data, cfg.target_rate_hz, pad_seconds=NOTCH_PAD_SECONDS, mode="wrap"
    )


def filter_bank(data: np.ndarray, spec: FilterBankSpec) -> list[np.ndarray]:
    """Decompose a signal into the spec's sub-bands (zero-phase band-pass).

    Returns one matrix per band, each with the input's dimensions.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    return [apply_band(data, spec, k) for k in range(spec.n_bands)]


def apply_band(data: np.ndarray, spec: FilterBankSpec, band: int) -> np.ndarray:
    """Band-pass the signal to sub-band ``band`` (0-based) of the spec."""
    lo, hi = spec.band_edges[band]
    sos = signal.butter(
        spec.order, [lo, hi], btype="bandpass", fs=spec.sample_rate_hz, output="sos"
    )
    return _filtfilt_padded(sos, np.asarray(data, dtype=np.float64), spec.sample_rate_hz)
