"""Domain types shared by every stage of the pipeline.

The central objects are :class:`Epoch` (one trial, channels x samples) and
:class:`Dataset` (all trials of one subject/session/device domain, grouped
by stimulus index).  The stimulus table maps each target index to its
flicker frequency and initial phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import InvalidArgumentError

TWO_PI = 2.0 * math.pi

# Default 40-target grid: 8.0 to 15.8 Hz in 0.2 Hz steps, phases advancing
# by 0.35*pi rad per target starting from 0.
DEFAULT_N_TARGETS = 40
DEFAULT_F0_HZ = 8.0
DEFAULT_DF_HZ = 0.2
DEFAULT_PHI0_RAD = 0.0
DEFAULT_DPHI_RAD = 0.35 * math.pi


@dataclass(frozen=True)
class StimulusSpec:
    """One flicker target: 1-based index, frequency in Hz, phase in rad.

    Phases are stored reduced to [0, 2*pi).
    """

    index: int
    frequency: float
    phase: float


def build_stimulus_table(
    n_targets: int = DEFAULT_N_TARGETS,
    f0: float = DEFAULT_F0_HZ,
    df: float = DEFAULT_DF_HZ,
    phi0: float = DEFAULT_PHI0_RAD,
    dphi: float = DEFAULT_DPHI_RAD,
) -> list[StimulusSpec]:
    """Build the joint frequency-phase stimulus grid.

    Entry n (1-based) has frequency ``f0 + df*(n-1)`` and phase
    ``(phi0 + dphi*(n-1)) mod 2*pi``.
    """
    if n_targets < 1:
        raise InvalidArgumentError(f"n_targets must be >= 1, got {n_targets}")
    if df <= 0:
        raise InvalidArgumentError(f"df must be positive, got {df}")
    table = []
    for n in range(1, n_targets + 1):
        phase = math.fmod(phi0 + dphi * (n - 1), TWO_PI)
        if phase < 0:
            phase += TWO_PI
        table.append(StimulusSpec(index=n, frequency=f0 + df * (n - 1), phase=phase))
    return table


@dataclass(frozen=True)
class Montage:
    """A recording device's channel space plus timing metadata.

    ``latency_seconds`` is the visual-system delay L applied before epoch
    extraction; it must stay below 1 s (the realistic range is ~0.15 s).
    """

    device_name: str
    channel_labels: tuple[str, ...]
    sample_rate_hz: float
    latency_seconds: float = 0.0

    def __post_init__(self):
        labels = tuple(self.channel_labels)
        object.__setattr__(self, "channel_labels", labels)
        if len(labels) < 1:
            raise InvalidArgumentError("montage needs at least one channel")
        if len(set(labels)) != len(labels):
            raise InvalidArgumentError(f"duplicate channel labels: {labels}")
        if self.sample_rate_hz <= 0:
            raise InvalidArgumentError(
                f"sample rate must be positive, got {self.sample_rate_hz}"
            )
        if not 0.0 <= self.latency_seconds < 1.0:
            raise InvalidArgumentError(
                f"latency must be in [0, 1) s, got {self.latency_seconds}"
            )

    @property
    def n_channels(self) -> int:
        return len(self.channel_labels)


class DomainId(NamedTuple):
    """Identifies one data domain: a (subject, session, device) triple."""

    subject: str
    session: str
    device: str


@dataclass(frozen=True)
class Epoch:
    """One trial: an n_channels x n_samples matrix in microvolts."""

    data: np.ndarray
    montage: Montage
    stimulus_index: int
    trial_index: int

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise InvalidArgumentError(
                f"epoch data must be 2-D (channels x samples), got shape {arr.shape}"
            )
        if arr.shape[0] != self.montage.n_channels:
            raise InvalidArgumentError(
                f"epoch has {arr.shape[0]} rows but montage lists "
                f"{self.montage.n_channels} channels"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Dataset:
    """All trials of one domain, grouped by stimulus index."""

    domain: DomainId
    montage: Montage
    epochs: dict[int, tuple[Epoch, ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self,
            "epochs",
            {int(k): tuple(v) for k, v in sorted(self.epochs.items())},
        )

    @classmethod
    def from_arrays(
        cls,
        domain: DomainId,
        montage: Montage,
        trials: dict[int, np.ndarray],
    ) -> "Dataset":
        """Build a Dataset from per-stimulus (n_trials, n_channels, n_samples) arrays."""
        epochs = {}
        for stim, block in trials.items():
            block = np.asarray(block, dtype=np.float64)
            epochs[stim] = tuple(
                Epoch(data=block[i], montage=montage, stimulus_index=stim, trial_index=i)
                for i in range(block.shape[0])
            )
        return cls(domain=domain, montage=montage, epochs=epochs)

    @property
    def stimulus_indices(self) -> list[int]:
        return sorted(self.epochs)

    @property
    def n_trials_per_stimulus(self) -> int:
        counts = {len(v) for v in self.epochs.values()}
        if len(counts) != 1:
            raise InvalidArgumentError(f"unbalanced trial counts: {sorted(counts)}")
        return counts.pop()

    @property
    def n_samples(self) -> int:
        for group in self.epochs.values():
            for ep in group:
                return ep.n_samples
        raise InvalidArgumentError("empty dataset has no sample count")

    def stack(self, stimulus_index: int) -> np.ndarray:
        """Return the trials of one stimulus as (n_trials, n_channels, n_samples)."""
        return np.stack([ep.data for ep in self.epochs[stimulus_index]])


def validate_dataset(ds: Dataset) -> list[str]:
    """Check Dataset invariants; return a list of human-readable violations.

    An empty list means the dataset is well formed.  Checks: balanced trial
    counts, a single shared montage and sample count, and finite samples.
    """
    violations = []
    if not ds.epochs:
        violations.append("dataset has no epochs")
        return violations

    counts = {stim: len(group) for stim, group in ds.epochs.items()}
    if len(set(counts.values())) > 1:
        majority = max(set(counts.values()), key=list(counts.values()).count)
        for stim, cnt in counts.items():
            if cnt != majority:
                violations.append(
                    f"unbalanced trial count: stimulus {stim} has {cnt} trials, "
                    f"others have {majority}"
                )

    n_samples = None
    for stim, group in ds.epochs.items():
        for ep in group:
            if ep.montage != ds.montage:
                violations.append(
                    f"montage mismatch: stimulus {stim} trial {ep.trial_index}"
                )
            if n_samples is None:
                n_samples = ep.n_samples
            elif ep.n_samples != n_samples:
                violations.append(
                    f"sample count mismatch: stimulus {stim} trial {ep.trial_index} "
                    f"has {ep.n_samples} samples, expected {n_samples}"
                )
            if not np.isfinite(ep.data).all():
                violations.append(
                    f"non-finite sample in stimulus {stim} trial {ep.trial_index}"
                )
            if ep.stimulus_index != stim:
                violations.append(
                    f"stimulus index mismatch: trial {ep.trial_index} labeled "
                    f"{ep.stimulus_index} stored under {stim}"
                )
    return violations
