"""Benchmark protocol: leave-one-subject-out comparison of training schemes.

For every target subject, repeat, and calibration-trial count the harness
splits the target's trials into calibration and test sets, builds the
BASELINE / NAIVE / LST training pools, fits the ensemble decoder, and
records accuracy plus diagnostics (template-test correlation, silhouette
of channel-averaged trials before vs after transformation, fit residuals).
Scheme pairs are compared with exact Wilcoxon signed-rank tests.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from . import lst as lst_mod
from .core import Dataset, DomainId, Epoch
from .errors import (
    DegenerateTestError,
    InvalidArgumentError,
    UndefinedNormalizationError,
)
from .lst import Scheme
from .preprocess import FilterBankSpec
from .trca import TrcaModel, classify, fit_model

CSV_COLUMNS = (
    "target_subject",
    "scheme",
    "calib_count",
    "repeat_idx",
    "n_supplementary",
    "accuracy",
    "log_error_rate",
    "mean_template_test_correlation",
    "silhouette_before",
    "silhouette_after",
    "residual_mean",
    "residual_max",
)


# ---------------------------------------------------------------------------
# statistics


def wilcoxon_signed_rank(paired_a, paired_b) -> tuple[float, float]:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped.  Returns (W, p) where W is the smaller of
    the positive/negative rank sums.  The p-value comes from the exact
    sign-flip distribution for n <= 25 and from the normal approximation
    with tie correction above that.
    """
    a = np.asarray(paired_a, dtype=np.float64)
    b = np.asarray(paired_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidArgumentError("paired samples must be equal-length vectors")
    if a.size < 5:
        raise InvalidArgumentError(f"need >= 5 pairs, got {a.size}")
    diffs = a - b
    diffs = diffs[diffs != 0]
    n = diffs.size
    if n == 0:
        raise DegenerateTestError("all paired differences are zero")

    ranks = rankdata(np.abs(diffs))
    w_plus = float(ranks[diffs > 0].sum())
    w_minus = float(ranks[diffs < 0].sum())
    w = min(w_plus, w_minus)

    if n <= 25:
        # Exact null distribution over all 2^n sign assignments, via a
        # subset-sum count on doubled ranks (midranks are multiples of 1/2).
        doubled = [int(round(2 * r)) for r in ranks]
        total = sum(doubled)
        counts = [0] * (total + 1)
        counts[0] = 1
        for r in doubled:
            for s in range(total - r, -1, -1):
                if counts[s]:
                    counts[s + r] += counts[s]
        threshold = int(round(2 * w))
        cdf = sum(counts[: threshold + 1]) / (2**n)
        p = min(1.0, 2.0 * cdf)
    else:
        _, tie_counts = np.unique(ranks, return_counts=True)
        mean = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float(
            ((tie_counts**3 - tie_counts) / 48.0).sum()
        )
        z = (w - mean) / math.sqrt(var)
        p = min(1.0, math.erfc(-z / math.sqrt(2.0)))
    return w, p


def silhouette_score(points, labels) -> float:
    """Mean silhouette of a labeled point set under Euclidean distance.

    Singleton clusters contribute a score of 0 for their point.
    """
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    if points.ndim != 2 or points.shape[0] != labels.shape[0]:
        raise InvalidArgumentError("points must be (n, d) with one label per row")
    unique = np.unique(labels)
    if unique.size < 2:
        raise InvalidArgumentError(f"need >= 2 clusters, got {unique.size}")

    dists = np.sqrt(
        np.maximum(
            (points**2).sum(1)[:, None]
            + (points**2).sum(1)[None, :]
            - 2 * points @ points.T,
            0.0,
        )
    )
    masks = {c: labels == c for c in unique}
    scores = np.zeros(points.shape[0])
    for i in range(points.shape[0]):
        own = masks[labels[i]]
        n_own = own.sum()
        if n_own < 2:
            scores[i] = 0.0
            continue
        a = dists[i, own].sum() / (n_own - 1)
        b = min(
            dists[i, masks[c]].mean() for c in unique if c != labels[i]
        )
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(scores.mean())


def normalized_spectrum(
    signal_1d, sample_rate_hz: float = 256.0, pad_factor: int = 4
) -> tuple[np.ndarray, np.ndarray]:
    """Unit-peak magnitude spectrum of a zero-padded signal.

    Padding to pad_factor times the length gives bin resolution
    rate / (pad_factor * n) (<= 0.17 Hz for 384 samples at 256 Hz).
    """
    sig = np.asarray(signal_1d, dtype=np.float64).ravel()
    if sig.size < 2:
        raise InvalidArgumentError(f"need >= 2 samples, got {sig.size}")
    n_fft = pad_factor * sig.size
    mags = np.abs(np.fft.rfft(sig, n=n_fft))
    peak = mags.max()
    if peak == 0:
        raise UndefinedNormalizationError("all-zero signal has no peak to normalize")
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate_hz)
    return freqs, mags / peak


def template_test_correlation(model: TrcaModel, test_set: Dataset) -> float:
    """Mean channel-averaged time-domain correlation of test trials with
    their stimulus's broadband template."""
    template_by_stim = dict(zip(model.stimulus_indices, model.broadband_templates))
    rs = []
    for stim in test_set.stimulus_indices:
        template_avg = template_by_stim[stim].mean(axis=0)
        for ep in test_set.epochs[stim]:
            trial_avg = ep.data.mean(axis=0)
            a = trial_avg - trial_avg.mean()
            b = template_avg - template_avg.mean()
            denom = np.linalg.norm(a) * np.linalg.norm(b)
            rs.append(0.0 if denom == 0 else float(a @ b) / denom)
    return float(np.mean(rs))


def _channel_averaged_points(datasets: list[Dataset]) -> tuple[np.ndarray, np.ndarray]:
    points, labels = [], []
    for ds in datasets:
        for stim in ds.stimulus_indices:
            for ep in ds.epochs[stim]:
                points.append(ep.data.mean(axis=0))
                labels.append(stim)
    return np.asarray(points), np.asarray(labels)


# ---------------------------------------------------------------------------
# plan / report


@dataclass(frozen=True)
class EvalPlan:
    """Protocol parameters for one benchmark run."""

    schemes: tuple[Scheme, ...] = (Scheme.BASELINE, Scheme.NAIVE, Scheme.LST)
    calib_trial_counts: tuple[int, ...] = (2, 3, 4, 5)
    n_repeats: int = 10
    test_trials_per_stimulus: int = 3
    supplementary_subject_counts: tuple[int, ...] | None = None
    sweep_calib_trials: int = 5
    rng_seed: int = 0
    bank_spec: FilterBankSpec = field(default_factory=FilterBankSpec)
    lst_scope: str = "per-trial"

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(self.schemes))
        object.__setattr__(self, "calib_trial_counts", tuple(self.calib_trial_counts))
        if self.supplementary_subject_counts is not None:
            object.__setattr__(
                self,
                "supplementary_subject_counts",
                tuple(self.supplementary_subject_counts),
            )
        if self.n_repeats < 1:
            raise InvalidArgumentError("n_repeats must be >= 1")


@dataclass(frozen=True)
class EvalRow:
    """One (target subject, scheme, calibration size, repeat) result."""

    target_subject: str
    scheme: Scheme
    calib_count: int
    repeat_idx: int
    accuracy: float
    log_error_rate: float
    mean_template_test_correlation: float
    n_supplementary: int | None = None
    silhouette_before: float | None = None
    silhouette_after: float | None = None
    residual_mean: float | None = None
    residual_max: float | None = None


@dataclass(frozen=True)
class PairwiseTest:
    scheme_a: Scheme
    scheme_b: Scheme
    calib_count: int
    wilcoxon_w: float | None
    p_value: float | None


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[EvalRow, ...]
    pairwise_tests: tuple[PairwiseTest, ...]
    plan: EvalPlan

    def accuracies(
        self, scheme: Scheme, calib_count: int, n_supplementary: int | None = None
    ) -> np.ndarray:
        return np.array(
            [
                r.accuracy
                for r in self.rows
                if r.scheme is scheme
                and r.calib_count == calib_count
                and (n_supplementary is None or r.n_supplementary == n_supplementary)
            ]
        )

    def mean_accuracy(
        self, scheme: Scheme, calib_count: int, n_supplementary: int | None = None
    ) -> float:
        return float(self.accuracies(scheme, calib_count, n_supplementary).mean())

    def to_csv(self) -> str:
        """Fixed-header CSV, one row per evaluation cell, deterministic bytes."""
        buf = _io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)

        def fmt(x):
            if x is None:
                return ""
            if isinstance(x, float):
                return format(x, ".12g")
            return str(x)

        for r in self.rows:
            writer.writerow(
                [
                    r.target_subject,
                    r.scheme.value,
                    r.calib_count,
                    r.repeat_idx,
                    fmt(r.n_supplementary),
                    fmt(r.accuracy),
                    fmt(r.log_error_rate),
                    fmt(r.mean_template_test_correlation),
                    fmt(r.silhouette_before),
                    fmt(r.silhouette_after),
                    fmt(r.residual_mean),
                    fmt(r.residual_max),
                ]
            )
        return buf.getvalue()

    def to_json_summary(self) -> str:
        """Per-(scheme, calib count) accuracy mean with SD and SEM, plus tests."""
        summary = []
        for scheme in self.plan.schemes:
            for count in sorted({r.calib_count for r in self.rows}):
                accs = self.accuracies(scheme, count)
                if accs.size == 0:
                    continue
                summary.append(
                    {
                        "scheme": scheme.value,
                        "calib_count": count,
                        "n_cells": int(accs.size),
                        "mean_accuracy": float(accs.mean()),
                        "sd": float(accs.std(ddof=1)) if accs.size > 1 else 0.0,
                        "sem": float(accs.std(ddof=1) / math.sqrt(accs.size))
                        if accs.size > 1
                        else 0.0,
                    }
                )
        tests = [
            {
                "scheme_a": t.scheme_a.value,
                "scheme_b": t.scheme_b.value,
                "calib_count": t.calib_count,
                "wilcoxon_w": t.wilcoxon_w,
                "p_value": t.p_value,
            }
            for t in self.pairwise_tests
        ]
        return json.dumps(
            {"accuracy": summary, "pairwise_tests": tests}, indent=2, sort_keys=True
        )


def log_error_rate(accuracy: float, n_test_trials: int) -> float:
    """log10 error rate, floored at half a miss so perfect runs stay finite."""
    return math.log10(max(1.0 - accuracy, 1.0 / (2.0 * n_test_trials)))


# ---------------------------------------------------------------------------
# protocol


def _subset_dataset(ds: Dataset, trial_positions: list[int]) -> Dataset:
    epochs = {}
    for stim in ds.stimulus_indices:
        group = ds.epochs[stim]
        epochs[stim] = tuple(
            Epoch(
                data=group[pos].data,
                montage=ds.montage,
                stimulus_index=stim,
                trial_index=i,
            )
            for i, pos in enumerate(trial_positions)
        )
    return Dataset(domain=ds.domain, montage=ds.montage, epochs=epochs)


def _cell_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def _evaluate_cell(
    calib: Dataset,
    test: Dataset,
    sources: list[Dataset],
    scheme: Scheme,
    plan: EvalPlan,
) -> tuple[float, dict]:
    """Fit one scheme's pool, classify the test set, gather diagnostics."""
    diagnostics: dict = {}
    if scheme is Scheme.LST and sources:
        targets = lst_mod.build_targets(calib)
        transformed = []
        residuals = []
        for src in sources:
            t_ds, maps = lst_mod.transfer_dataset(
                src, targets, calib.montage, scope=plan.lst_scope
            )
            transformed.append(t_ds)
            residuals.extend(m.residual_frobenius for m in maps)
        pool = lst_mod.assemble_pool(calib, transformed, Scheme.LST)
        diagnostics["residual_mean"] = float(np.mean(residuals))
        diagnostics["residual_max"] = float(np.max(residuals))
        before_pts, before_lbls = _channel_averaged_points([calib, *sources])
        after_pts, after_lbls = _channel_averaged_points([calib, *transformed])
        diagnostics["silhouette_before"] = silhouette_score(before_pts, before_lbls)
        diagnostics["silhouette_after"] = silhouette_score(after_pts, after_lbls)
    else:
        pool = lst_mod.assemble_pool(calib, sources, scheme)

    model = fit_model(pool, plan.bank_spec)
    n_correct = 0
    n_total = 0
    for stim in test.stimulus_indices:
        for ep in test.epochs[stim]:
            if classify(ep, model).decision == stim:
                n_correct += 1
            n_total += 1
    diagnostics["template_test_correlation"] = template_test_correlation(model, test)
    return n_correct / n_total, diagnostics


def run_leave_one_subject_out(
    datasets: list[Dataset],
    plan: EvalPlan,
    source_datasets: list[Dataset] | None = None,
    n_jobs: int = 1,
) -> EvalReport:
    """Run the full protocol and assemble a deterministic report.

    ``datasets`` holds one dataset per subject in the target device's channel
    space.  If ``source_datasets`` is given (cross-device mode), supplementary
    data for subject i comes from source_datasets[j != i]; NAIVE pooling is
    then skipped for montages with different channel sets.  When
    ``plan.supplementary_subject_counts`` is set, the calibration size is
    pinned to ``plan.sweep_calib_trials`` with a fixed first/last split and
    the number of randomly drawn supplementary subjects is swept instead.
    """
    if len(datasets) < 2:
        raise InvalidArgumentError("need >= 2 subjects for leave-one-subject-out")
    if source_datasets is not None and len(source_datasets) != len(datasets):
        raise InvalidArgumentError(
            "source_datasets must list one dataset per subject"
        )

    jobs = [
        (target_idx, repeat)
        for target_idx in range(len(datasets))
        for repeat in range(plan.n_repeats)
    ]

    if n_jobs == 1:
        results = [_run_job(datasets, source_datasets, plan, t, r) for t, r in jobs]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(
            delayed(_run_job)(datasets, source_datasets, plan, t, r) for t, r in jobs
        )

    rows = [row for chunk in results for row in chunk]
    rows.sort(
        key=lambda r: (
            r.target_subject,
            r.scheme.value,
            r.n_supplementary if r.n_supplementary is not None else -1,
            r.calib_count,
            r.repeat_idx,
        )
    )

    tests = _pairwise_tests(rows, plan)
    return EvalReport(rows=tuple(rows), pairwise_tests=tuple(tests), plan=plan)


def _run_job(
    datasets: list[Dataset],
    source_datasets: list[Dataset] | None,
    plan: EvalPlan,
    target_idx: int,
    repeat: int,
) -> list[EvalRow]:
    target = datasets[target_idx]
    pool_of_sources = [
        ds
        for i, ds in enumerate(source_datasets if source_datasets else datasets)
        if i != target_idx
    ]
    n_trials = target.n_trials_per_stimulus
    n_test = plan.test_trials_per_stimulus
    n_test_total = n_test * len(target.stimulus_indices)

    rows = []
    if plan.supplementary_subject_counts is None:
        rng = _cell_rng(plan.rng_seed, target_idx, repeat)
        perm = list(rng.permutation(n_trials))
        test_positions = perm[:n_test]
        calib_pool = perm[n_test:]
        test_ds = _subset_dataset(target, test_positions)

        for calib_count in plan.calib_trial_counts:
            if calib_count > len(calib_pool):
                raise InvalidArgumentError(
                    f"calib_count {calib_count} exceeds the {len(calib_pool)} "
                    f"trials left after the test split"
                )
            calib_ds = _subset_dataset(target, calib_pool[:calib_count])
            for scheme in plan.schemes:
                if scheme is Scheme.NAIVE and any(
                    s.montage.channel_labels != target.montage.channel_labels
                    for s in pool_of_sources
                ):
                    continue  # naive pooling impossible across montages
                acc, diag = _evaluate_cell(
                    calib_ds, test_ds, pool_of_sources, scheme, plan
                )
                rows.append(
                    _make_row(
                        target, scheme, calib_count, repeat, acc, diag, n_test_total
                    )
                )
    else:
        # Supplementary-subject sweep: fixed chronological split, fixed
        # calibration size, random source-subject selection per repeat.
        calib_count = plan.sweep_calib_trials
        calib_ds = _subset_dataset(target, list(range(calib_count)))
        test_ds = _subset_dataset(target, list(range(n_trials - n_test, n_trials)))
        for n_supp in plan.supplementary_subject_counts:
            if n_supp > len(pool_of_sources):
                raise InvalidArgumentError(
                    f"{n_supp} supplementary subjects requested, only "
                    f"{len(pool_of_sources)} available"
                )
            rng = _cell_rng(plan.rng_seed, target_idx, repeat, n_supp)
            chosen = sorted(rng.permutation(len(pool_of_sources))[:n_supp])
            sources = [pool_of_sources[i] for i in chosen]
            for scheme in plan.schemes:
                if scheme is Scheme.NAIVE and any(
                    s.montage.channel_labels != target.montage.channel_labels
                    for s in sources
                ):
                    continue
                acc, diag = _evaluate_cell(calib_ds, test_ds, sources, scheme, plan)
                rows.append(
                    _make_row(
                        target,
                        scheme,
                        calib_count,
                        repeat,
                        acc,
                        diag,
                        n_test_total,
                        n_supplementary=n_supp,
                    )
                )
    return rows


def _make_row(
    target: Dataset,
    scheme: Scheme,
    calib_count: int,
    repeat: int,
    accuracy: float,
    diag: dict,
    n_test_total: int,
    n_supplementary: int | None = None,
) -> EvalRow:
    return EvalRow(
        target_subject=target.domain.subject,
        scheme=scheme,
        calib_count=calib_count,
        repeat_idx=repeat,
        accuracy=accuracy,
        log_error_rate=log_error_rate(accuracy, n_test_total),
        mean_template_test_correlation=diag["template_test_correlation"],
        n_supplementary=n_supplementary,
        silhouette_before=diag.get("silhouette_before"),
        silhouette_after=diag.get("silhouette_after"),
        residual_mean=diag.get("residual_mean"),
        residual_max=diag.get("residual_max"),
    )


def _pairwise_tests(rows: list[EvalRow], plan: EvalPlan) -> list[PairwiseTest]:
    tests = []
    calib_counts = sorted({r.calib_count for r in rows})
    schemes = [s for s in plan.schemes]
    for count in calib_counts:
        for i in range(len(schemes)):
            for j in range(i + 1, len(schemes)):
                a = [
                    r.accuracy
                    for r in rows
                    if r.scheme is schemes[i] and r.calib_count == count
                ]
                b = [
                    r.accuracy
                    for r in rows
                    if r.scheme is schemes[j] and r.calib_count == count
                ]
                if len(a) != len(b) or len(a) < 5:
                    continue
                try:
                    w, p = wilcoxon_signed_rank(a, b)
                except DegenerateTestError:
                    w, p = None, None
                tests.append(
                    PairwiseTest(
                        scheme_a=schemes[i],
                        scheme_b=schemes[j],
                        calib_count=count,
                        wilcoxon_w=w,
                        p_value=p,
                    )
                )
    return tests
