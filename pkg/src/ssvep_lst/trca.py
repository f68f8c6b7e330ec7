"""Ensemble task-related component analysis: training and template matching.

Training finds, per stimulus and sub-band, the channel weights w maximizing
the ratio of summed inter-trial cross-covariance (S) to summed within-trial
covariance (Q), i.e. the leading generalized eigenvector of (S, Q).  The
per-stimulus weights are concatenated into one ensemble projection per
sub-band; classification correlates the projected test trial against the
projected trial-averaged templates and fuses sub-bands with weights
alpha(k) = k**(-1.25) + 0.25.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .core import Dataset, Epoch
from .errors import InvalidArgumentError
from .preprocess import FilterBankSpec, apply_band

DEFAULT_ALPHA_EXPONENT = -1.25
DEFAULT_ALPHA_OFFSET = 0.25
_RIDGE_SCALE = 1e-9
_SINGULAR_RCOND = 1e-10


def sub_band_weights(
    n_bands: int,
    exponent: float = DEFAULT_ALPHA_EXPONENT,
    offset: float = DEFAULT_ALPHA_OFFSET,
) -> np.ndarray:
    """Fusion weights alpha(k) = k**exponent + offset for k = 1..n_bands."""
    k = np.arange(1, n_bands + 1, dtype=np.float64)
    return k**exponent + offset


@dataclass(frozen=True)
class TrcaDecomposition:
    """Result of one (stimulus, sub-band) spatial-filter fit.

    ``s_matrix`` sums cross-covariances over ordered trial pairs i != j;
    ``q_matrix`` sums within-trial covariances.  ``leading_vector`` is the
    unit-norm generalized eigenvector with the largest eigenvalue, sign fixed
    so its first nonzero entry is positive.
    """

    s_matrix: np.ndarray
    q_matrix: np.ndarray
    eigenvalues: np.ndarray  # descending
    leading_vector: np.ndarray
    regularized: bool = False


def _trial_covariance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Unbiased sample cross-covariance of two channel x sample matrices."""
    n_samples = a.shape[1]
    a = a - a.mean(axis=1, keepdims=True)
    b = b - b.mean(axis=1, keepdims=True)
    return (a @ b.T) / (n_samples - 1)


def fit_trca_filter(trials: list[np.ndarray]) -> TrcaDecomposition:
    """Fit the spatial filter for one stimulus in one sub-band.

    Needs at least two trials of identical shape.  A rank-deficient Q is
    ridge-regularized (Q + eps*I with eps = 1e-9 * trace(Q)/n_channels) and
    flagged via ``regularized``.
    """
    if len(trials) < 2:
        raise InvalidArgumentError(f"need >= 2 trials, got {len(trials)}")
    trials = [np.asarray(t, dtype=np.float64) for t in trials]
    shape = trials[0].shape
    if any(t.shape != shape for t in trials):
        raise InvalidArgumentError("trials must share dimensions")
    if shape[1] < 2:
        raise InvalidArgumentError("trials need >= 2 samples")

    n_channels = shape[0]
    centered = [t - t.mean(axis=1, keepdims=True) for t in trials]

    q = np.zeros((n_channels, n_channels))
    for t in centered:
        q += (t @ t.T) / (shape[1] - 1)

    # S over ordered pairs i != j; each unordered pair contributes C + C.T,
    # so S is symmetric by construction.
    s = np.zeros((n_channels, n_channels))
    for i in range(len(centered)):
        for j in range(i + 1, len(centered)):
            c = (centered[i] @ centered[j].T) / (shape[1] - 1)
            s += c + c.T
    s = 0.5 * (s + s.T)

    q_eigs = np.linalg.eigvalsh(q)
    regularized = bool(q_eigs[0] <= _SINGULAR_RCOND * max(q_eigs[-1], 0.0))
    q_solve = q
    if regularized:
        eps = _RIDGE_SCALE * np.trace(q) / n_channels
        if eps <= 0:
            eps = _RIDGE_SCALE
        q_solve = q + eps * np.eye(n_channels)

    eigvals, eigvecs = linalg.eigh(s, q_solve)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]

    w = eigvecs[:, 0]
    w = w / np.linalg.norm(w)
    nonzero = np.nonzero(np.abs(w) > 1e-12)[0]
    if nonzero.size and w[nonzero[0]] < 0:
        w = -w

    return TrcaDecomposition(
        s_matrix=s,
        q_matrix=q,
        eigenvalues=eigvals,
        leading_vector=w,
        regularized=regularized,
    )


@dataclass(frozen=True)
class TrcaModel:
    """Fitted ensemble decoder.

    filters[k] is n_channels x n_stimuli (column n = stimulus n's weights in
    sub-band k); templates[k][n] is the trial-averaged n_channels x n_samples
    template of stimulus n in sub-band k.  ``broadband_templates`` keeps the
    unfiltered trial means for time-domain diagnostics.
    """

    stimulus_indices: tuple[int, ...]
    filters: tuple[np.ndarray, ...]
    templates: tuple[tuple[np.ndarray, ...], ...]
    broadband_templates: tuple[np.ndarray, ...]
    bank_spec: FilterBankSpec
    alpha_exponent: float = DEFAULT_ALPHA_EXPONENT
    alpha_offset: float = DEFAULT_ALPHA_OFFSET

    @property
    def n_channels(self) -> int:
        return self.filters[0].shape[0]

    @property
    def n_stimuli(self) -> int:
        return len(self.stimulus_indices)

    @property
    def alpha(self) -> np.ndarray:
        return sub_band_weights(
            self.bank_spec.n_bands, self.alpha_exponent, self.alpha_offset
        )


def fit_model(training_set: Dataset, bank_spec: FilterBankSpec) -> TrcaModel:
    """Fit the ensemble model on a balanced training dataset (>= 2 trials/stimulus)."""
    stim_indices = training_set.stimulus_indices
    if not stim_indices:
        raise InvalidArgumentError("training set is empty")
    n_trials = training_set.n_trials_per_stimulus
    if n_trials < 2:
        raise InvalidArgumentError(f"need >= 2 trials per stimulus, got {n_trials}")

    raw = {n: training_set.stack(n) for n in stim_indices}
    broadband = tuple(raw[n].mean(axis=0) for n in stim_indices)

    filters = []
    templates = []
    for k in range(bank_spec.n_bands):
        banded = {n: apply_band(raw[n], bank_spec, k) for n in stim_indices}
        cols = []
        band_templates = []
        for n in stim_indices:
            trials = list(banded[n])
            try:
                decomp = fit_trca_filter(trials)
            except InvalidArgumentError as exc:
                raise InvalidArgumentError(
                    f"sub-band {k}, stimulus {n}: {exc}"
                ) from exc
            cols.append(decomp.leading_vector)
            band_templates.append(banded[n].mean(axis=0))
        filters.append(np.column_stack(cols))
        templates.append(tuple(band_templates))

    return TrcaModel(
        stimulus_indices=tuple(stim_indices),
        filters=tuple(filters),
        templates=tuple(templates),
        broadband_templates=broadband,
        bank_spec=bank_spec,
    )


@dataclass(frozen=True)
class ScoreVector:
    """Per-stimulus fused correlation features and the argmax decision."""

    stimulus_indices: tuple[int, ...]
    rho: np.ndarray  # fused, length n_stimuli
    per_band: np.ndarray  # n_bands x n_stimuli
    decision: int  # stimulus index with maximal rho (lowest index on ties)
    zero_variance_flags: tuple[tuple[int, int], ...] = field(default_factory=tuple)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a.ravel()
    b = b.ravel()
    a = a - a.mean()
    b = b - b.mean()
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0:
        return np.nan
    return float(np.clip((a @ b) / denom, -1.0, 1.0))


def classify(test_epoch: Epoch | np.ndarray, model: TrcaModel) -> ScoreVector:
    """Score one preprocessed broadband epoch against every stimulus template.

    The epoch is decomposed with the model's filter bank; in each sub-band the
    ensemble projection (w^k)^T x is correlated (flattened, all stimuli's
    projections jointly) with the projected template of each stimulus.
    Zero-variance projections score 0 and are flagged.
    """
    data = test_epoch.data if isinstance(test_epoch, Epoch) else np.asarray(test_epoch)
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.shape[0] != model.n_channels:
        raise InvalidArgumentError(
            f"epoch has {data.shape[0]} channels, model expects {model.n_channels}"
        )

    alpha = model.alpha
    n_bands = model.bank_spec.n_bands
    per_band = np.zeros((n_bands, model.n_stimuli))
    flags = []
    for k in range(n_bands):
        w = model.filters[k]
        banded = apply_band(data, model.bank_spec, k)
        projected_test = w.T @ banded
        for idx, n in enumerate(model.stimulus_indices):
            projected_template = w.T @ model.templates[k][idx]
            r = _pearson(projected_test, projected_template)
            if np.isnan(r):
                r = 0.0
                flags.append((k, n))
            per_band[k, idx] = r

    rho = alpha @ per_band
    decision = model.stimulus_indices[int(np.argmax(rho))]
    return ScoreVector(
        stimulus_indices=model.stimulus_indices,
        rho=rho,
        per_band=per_band,
        decision=decision,
        zero_variance_flags=tuple(flags),
    )
