"""Least-squares transformation across domains and training-pool assembly.

A source trial x' (n_src_channels x n_samples) is mapped into the target
channel space by the matrix P minimizing ||xbar - P x'||_F, where xbar is
the trial-averaged calibration signal of the same stimulus in the target
domain (the transformation target).  Closed form: P = x x'^T (x' x'^T)^-1,
with a minimum-norm pseudo-inverse fallback when x' x'^T is rank deficient.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import Dataset, DomainId, Epoch, Montage
from .errors import (
    IncompatibleDomainError,
    IncompleteCalibrationError,
    InvalidArgumentError,
    MontageMismatchError,
)

_RANK_RCOND = 1e-10


class Scheme(enum.Enum):
    """Training-pool composition strategies."""

    BASELINE = "baseline"  # target-domain calibration trials only
    NAIVE = "naive"  # calibration + raw source trials (same montage only)
    LST = "lst"  # calibration + transformed source trials


@dataclass(frozen=True)
class TransformationTarget:
    """Per-stimulus average of the new domain's calibration trials."""

    stimulus_index: int
    matrix: np.ndarray  # n_channels x n_samples
    n_trials_averaged: int


@dataclass(frozen=True)
class TransferMap:
    """A fitted channel-space map P with its fit residual."""

    p_matrix: np.ndarray  # n_target_channels x n_source_channels
    source_domain: DomainId | None
    stimulus_index: int | None
    source_trial_index: int | None
    residual_frobenius: float
    rank_deficient: bool = False


def build_targets(calibration: Dataset) -> list[TransformationTarget]:
    """Average the calibration trials of each stimulus into one target matrix."""
    targets = []
    for stim in calibration.stimulus_indices:
        group = calibration.epochs[stim]
        if not group:
            raise IncompleteCalibrationError(f"stimulus {stim} has no trials")
        block = calibration.stack(stim)
        targets.append(
            TransformationTarget(
                stimulus_index=stim,
                matrix=block.mean(axis=0),
                n_trials_averaged=block.shape[0],
            )
        )
    return targets


def fit_transform(
    target: np.ndarray,
    source: np.ndarray,
    *,
    source_domain: DomainId | None = None,
    stimulus_index: int | None = None,
    source_trial_index: int | None = None,
) -> TransferMap:
    """Solve min_P ||target - P @ source||_F.

    Uses the normal-equation closed form when source @ source.T is well
    conditioned, else the minimum-Frobenius-norm least-squares solution
    (singular values below 1e-10 * sigma_max dropped, rank-deficiency flagged).
    """
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    source = np.atleast_2d(np.asarray(source, dtype=np.float64))
    if target.shape[1] != source.shape[1]:
        raise InvalidArgumentError(
            f"sample counts differ: target {target.shape[1]}, source {source.shape[1]}"
        )

    gram = source @ source.T
    singular = np.linalg.svd(gram, compute_uv=False)
    rank_deficient = bool(
        singular[0] == 0 or singular[-1] <= _RANK_RCOND * singular[0]
    )
    if not rank_deficient:
        p = np.linalg.solve(gram, source @ target.T).T
    else:
        # lstsq on source.T @ P.T ~= target.T gives the minimum-norm solution
        p = np.linalg.lstsq(source.T, target.T, rcond=_RANK_RCOND)[0].T

    residual = float(np.linalg.norm(target - p @ source, "fro"))
    return TransferMap(
        p_matrix=p,
        source_domain=source_domain,
        stimulus_index=stimulus_index,
        source_trial_index=source_trial_index,
        residual_frobenius=residual,
        rank_deficient=rank_deficient,
    )


def transfer_dataset(
    source: Dataset,
    targets: list[TransformationTarget],
    target_montage: Montage,
    scope: str = "per-trial",
) -> tuple[Dataset, list[TransferMap]]:
    """Map every source trial into the target channel space.

    With scope "per-trial" (default) one P is fitted per (stimulus, source
    trial) against that stimulus's transformation target; with "per-domain"
    a single P is fitted on all trials of the domain at once (targets tiled
    to match).  Returns the transformed dataset (carrying the target montage
    and a provenance-tagged domain id) plus all fitted maps.
    """
    if scope not in ("per-trial", "per-domain"):
        raise InvalidArgumentError(f"unknown scope {scope!r}")
    target_by_stim = {t.stimulus_index: t for t in targets}
    if set(source.stimulus_indices) != set(target_by_stim):
        raise IncompatibleDomainError(
            f"stimulus sets differ: source {source.stimulus_indices}, "
            f"targets {sorted(target_by_stim)}"
        )

    maps = []
    epochs: dict[int, tuple[Epoch, ...]] = {}
    domain_map = None
    if scope == "per-domain":
        target_cols = []
        source_cols = []
        for stim in source.stimulus_indices:
            for ep in source.epochs[stim]:
                target_cols.append(target_by_stim[stim].matrix)
                source_cols.append(ep.data)
        domain_map = fit_transform(
            np.hstack(target_cols),
            np.hstack(source_cols),
            source_domain=source.domain,
        )
        maps.append(domain_map)

    for stim in source.stimulus_indices:
        target = target_by_stim[stim]
        transformed = []
        for ep in source.epochs[stim]:
            if scope == "per-trial":
                tm = fit_transform(
                    target.matrix,
                    ep.data,
                    source_domain=source.domain,
                    stimulus_index=stim,
                    source_trial_index=ep.trial_index,
                )
                maps.append(tm)
            else:
                tm = domain_map
            transformed.append(
                Epoch(
                    data=tm.p_matrix @ ep.data,
                    montage=target_montage,
                    stimulus_index=stim,
                    trial_index=ep.trial_index,
                )
            )
        epochs[stim] = tuple(transformed)

    domain = DomainId(
        subject=f"lst({source.domain.subject})",
        session=source.domain.session,
        device=target_montage.device_name,
    )
    return Dataset(domain=domain, montage=target_montage, epochs=epochs), maps


def assemble_pool(
    new_calib: Dataset,
    sources: list[Dataset],
    scheme: Scheme,
) -> Dataset:
    """Build the training pool for one scheme.

    BASELINE ignores sources; NAIVE pools raw source trials (identical
    montage channel sets required); LST pools already-transformed trials.
    Pooled trials are re-indexed so trial indices stay unique per stimulus.
    """
    if scheme is Scheme.BASELINE or not sources:
        return new_calib

    if scheme is Scheme.NAIVE:
        for src in sources:
            if src.montage.channel_labels != new_calib.montage.channel_labels:
                raise MontageMismatchError(
                    f"naive pooling needs identical montages; target has "
                    f"{new_calib.montage.n_channels} channels, source "
                    f"{src.domain} has {src.montage.n_channels}"
                )
    else:
        for src in sources:
            if src.montage.n_channels != new_calib.montage.n_channels:
                raise MontageMismatchError(
                    f"transformed source {src.domain} has "
                    f"{src.montage.n_channels} channels, target montage has "
                    f"{new_calib.montage.n_channels}"
                )

    stim_set = set(new_calib.stimulus_indices)
    for src in sources:
        if set(src.stimulus_indices) != stim_set:
            raise IncompatibleDomainError(
                f"source {src.domain} stimulus set differs from calibration"
            )

    epochs: dict[int, tuple[Epoch, ...]] = {}
    for stim in sorted(stim_set):
        pooled = list(new_calib.epochs[stim])
        for src in sources:
            for ep in src.epochs[stim]:
                pooled.append(
                    Epoch(
                        data=ep.data,
                        montage=new_calib.montage,
                        stimulus_index=stim,
                        trial_index=len(pooled),
                    )
                )
        epochs[stim] = tuple(
            Epoch(
                data=ep.data,
                montage=new_calib.montage,
                stimulus_index=stim,
                trial_index=i,
            )
            for i, ep in enumerate(pooled)
        )

    domain = DomainId(
        subject=f"pool({new_calib.domain.subject})",
        session=new_calib.domain.session,
        device=new_calib.domain.device,
    )
    return Dataset(domain=domain, montage=new_calib.montage, epochs=epochs)
