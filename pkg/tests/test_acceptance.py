"""End-to-end acceptance suite.

Each test checks one headline guarantee of the package and prints a single
PASS/FAIL line (visible with ``pytest -s`` or in captured output).  The
benchmark-level checks run the full synthetic protocol over fixed seeds, so
their numbers are exactly reproducible.
"""

import itertools
import json
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.optimize import minimize

from ssvep_lst.evaluate import (
    EvalPlan,
    run_leave_one_subject_out,
    wilcoxon_signed_rank,
)
from ssvep_lst.lst import Scheme, fit_transform
from ssvep_lst.preprocess import (
    PreprocessConfig,
    extract_epoch,
    notch_filter,
    resample,
)
from ssvep_lst.synth import SynthConfig, generate_subject_dataset
from ssvep_lst.trca import fit_trca_filter, sub_band_weights

BENCHMARK_SEEDS = tuple(range(10))


def report(name, ok, detail=""):
    tag = "PASS" if ok else "FAIL"
    print(f"[{tag}] {name}: {detail}", flush=True)
    assert ok, f"{name}: {detail}"


def rayleigh(w, s, q):
    return (w @ s @ w) / (w @ q @ w)


@pytest.fixture(scope="module")
def benchmark_reports():
    """Default synthetic benchmark (5 subjects, 8 targets, 6 trials) over the
    fixed seed set, all three schemes at 2 and 3 calibration trials."""
    reports = {}
    for seed in BENCHMARK_SEEDS:
        cfg = SynthConfig(rng_seed=seed)
        datasets = [
            generate_subject_dataset(i, 0, cfg) for i in range(cfg.n_subjects)
        ]
        plan = EvalPlan(calib_trial_counts=(2, 3), n_repeats=1, rng_seed=seed)
        reports[seed] = run_leave_one_subject_out(datasets, plan)
    return reports


class TestAcceptance:
    def test_trca_eigen_oracle(self):
        rng = np.random.default_rng(2024)
        start = time.time()
        worst = 0.0
        combos = itertools.cycle(
            [(nc, nt) for nc in (2, 3, 4) for nt in (2, 3, 5)]
        )
        for _ in range(200):
            n_c, n_t = next(combos)
            trials = [rng.standard_normal((n_c, 64)) for _ in range(n_t)]
            d = fit_trca_filter(trials)
            fitted = rayleigh(d.leading_vector, d.s_matrix, d.q_matrix)
            if n_c == 2:
                thetas = np.arange(0.0, np.pi, 1e-3)
                dirs = np.stack([np.cos(thetas), np.sin(thetas)], axis=1)
            else:
                dirs = rng.standard_normal((5000, n_c))
                dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            quotients = [rayleigh(u, d.s_matrix, d.q_matrix) for u in dirs]
            best = dirs[int(np.argmax(quotients))]
            # polish the best swept direction by direct maximization of the
            # quotient (independent of the eigensolver under test); without
            # this the sweep's quantization error dominates whenever the
            # leading eigenvalue is close to zero
            res = minimize(
                lambda w: -rayleigh(w, d.s_matrix, d.q_matrix),
                best,
                method="BFGS",
                options={"gtol": 1e-12},
            )
            sweep = -res.fun
            worst = max(worst, abs(fitted - sweep) / abs(sweep))
        elapsed = time.time() - start
        report(
            "trca-eigen-oracle",
            worst <= 1e-6 and elapsed < 30.0,
            f"max relative deviation {worst:.2e} over 200 instances, "
            f"{elapsed:.1f}s",
        )

    def test_lst_recovery(self):
        rng = np.random.default_rng(2025)
        start = time.time()
        worst_clean = 0.0
        worst_noisy = 0.0
        for _ in range(100):
            n_out = int(rng.integers(2, 9))
            n_in = int(rng.integers(2, 9))
            n = int(rng.integers(200, 600))
            a = rng.standard_normal((n_out, n_in))
            src = rng.standard_normal((n_in, n))
            clean = a @ src
            p = fit_transform(clean, src).p_matrix
            worst_clean = max(
                worst_clean, np.linalg.norm(p - a) / np.linalg.norm(a)
            )
            sigma = 0.01 * np.sqrt(np.mean(clean**2))
            noisy = clean + sigma * rng.standard_normal(clean.shape)
            p_n = fit_transform(noisy, src).p_matrix
            worst_noisy = max(
                worst_noisy, np.linalg.norm(p_n - a) / np.linalg.norm(a)
            )
        elapsed = time.time() - start
        report(
            "lst-recovery",
            worst_clean <= 1e-6 and worst_noisy <= 0.05 and elapsed < 10.0,
            f"clean {worst_clean:.2e}, noisy {worst_noisy:.3f}, {elapsed:.1f}s",
        )

    def test_alpha_weights(self):
        computed = sub_band_weights(5)
        table = np.array([1.25, 0.6705, 0.5034, 0.4268, 0.3837])
        exact = np.array([k**-1.25 + 0.25 for k in range(1, 6)])
        dev_formula = np.max(np.abs(computed - exact))
        dev_table = np.max(np.abs(computed - table))
        # the published 4 d.p. table misrounds entries 2 and 3 by about one
        # unit in the last digit relative to the formula, so agreement is
        # checked to within that transcription slack
        report(
            "alpha-weights",
            dev_formula <= 1e-12 and dev_table <= 1.5e-4,
            f"vs formula {dev_formula:.1e}, vs 4 d.p. table {dev_table:.1e}",
        )

    def test_scheme_ordering(self, benchmark_reports):
        start = time.time()
        means = {
            (s, c): float(
                np.mean(
                    [r.mean_accuracy(s, c) for r in benchmark_reports.values()]
                )
            )
            for s in (Scheme.BASELINE, Scheme.NAIVE, Scheme.LST)
            for c in (2, 3)
        }
        lst_a = [r.mean_accuracy(Scheme.LST, 2) for r in benchmark_reports.values()]
        base_b = [
            r.mean_accuracy(Scheme.BASELINE, 2) for r in benchmark_reports.values()
        ]
        _, p = wilcoxon_signed_rank(lst_a, base_b)
        baseline2 = means[(Scheme.BASELINE, 2)]
        margin = means[(Scheme.LST, 2)] - baseline2
        lst_ge_naive = all(
            means[(Scheme.LST, c)] >= means[(Scheme.NAIVE, c)] for c in (2, 3)
        )
        ok = (
            0.60 <= baseline2 <= 0.90
            and margin >= 0.03
            and lst_ge_naive
            and p < 0.05
        )
        report(
            "scheme-ordering",
            ok,
            f"baseline@2 {baseline2:.3f}, lst margin {margin:.3f}, "
            f"lst>=naive {lst_ge_naive}, p {p:.4g} "
            f"(fixture reuse keeps total under budget, {time.time() - start:.1f}s)",
        )

    def test_cross_device_feasibility(self):
        diffs = {2: [], 3: []}
        for seed in (0, 1, 2):
            cfg = SynthConfig(rng_seed=seed)
            targets = [
                generate_subject_dataset(i, 1, cfg) for i in range(cfg.n_subjects)
            ]  # 6-channel montage
            sources = [
                generate_subject_dataset(i, 0, cfg) for i in range(cfg.n_subjects)
            ]  # 8-channel montage
            plan = EvalPlan(
                schemes=(Scheme.BASELINE, Scheme.LST),
                calib_trial_counts=(2, 3),
                n_repeats=1,
                rng_seed=seed,
            )
            rep = run_leave_one_subject_out(targets, plan, source_datasets=sources)
            for c in (2, 3):
                diffs[c].append(
                    rep.mean_accuracy(Scheme.LST, c)
                    - rep.mean_accuracy(Scheme.BASELINE, c)
                )
        worst = min(float(np.mean(diffs[c])) for c in (2, 3))
        report(
            "cross-device-feasibility",
            worst >= -0.01,
            f"min mean (lst - baseline) across calib counts {worst:+.3f}",
        )

    def test_silhouette_improvement(self, benchmark_reports):
        improvements = []
        for rep in benchmark_reports.values():
            rows = [
                r
                for r in rep.rows
                if r.scheme is Scheme.LST and r.calib_count == 2
            ]
            improvements.append(
                float(
                    np.mean([r.silhouette_after - r.silhouette_before for r in rows])
                )
            )
        mean_improvement = float(np.mean(improvements))
        report(
            "silhouette-improvement",
            mean_improvement > 0.0,
            f"mean improvement {mean_improvement:+.4f} over "
            f"{len(improvements)} seeds",
        )

    def test_supplementary_subject_sweep(self):
        counts = (1, 3, 5)
        acc = {s: {n: [] for n in counts} for s in (Scheme.NAIVE, Scheme.LST)}
        for seed in (0, 1):
            cfg = SynthConfig(rng_seed=seed, n_subjects=6, n_trials_per_stimulus=8)
            datasets = [generate_subject_dataset(i, 0, cfg) for i in range(6)]
            plan = EvalPlan(
                schemes=(Scheme.NAIVE, Scheme.LST),
                supplementary_subject_counts=counts,
                sweep_calib_trials=5,
                n_repeats=2,
                rng_seed=seed,
            )
            rep = run_leave_one_subject_out(datasets, plan)
            for s in acc:
                for n in counts:
                    acc[s][n].append(rep.mean_accuracy(s, 5, n_supplementary=n))
        lst = [float(np.mean(acc[Scheme.LST][n])) for n in counts]
        naive = [float(np.mean(acc[Scheme.NAIVE][n])) for n in counts]
        lst_monotone = all(b >= a - 0.01 for a, b in zip(lst, lst[1:]))
        lst_gain = lst[-1] - lst[0]
        naive_gain = naive[-1] - naive[0]
        report(
            "supplementary-subject-sweep",
            lst_monotone and naive_gain <= 0.01 and naive_gain < lst_gain,
            f"lst {[round(v, 3) for v in lst]}, "
            f"naive {[round(v, 3) for v in naive]}",
        )

    def test_dsp_suite(self):
        cfg = PreprocessConfig()
        t = np.arange(round(1.5 * 256)) / 256.0

        line = np.sin(2 * np.pi * 60.0 * t)
        notched = notch_filter(line, cfg)[0]
        atten_db = 20 * np.log10(
            np.sqrt(np.mean(line**2)) / np.sqrt(np.mean(notched**2))
        )

        tone = np.sin(2 * np.pi * 12.0 * t)
        kept = notch_filter(tone, cfg)[0]
        edge = round(0.1 * 256)
        rms_change = abs(
            np.sqrt(np.mean(kept[edge:-edge] ** 2))
            / np.sqrt(np.mean(tone[edge:-edge] ** 2))
            - 1.0
        )

        long_t = np.arange(512) / 256.0
        sig = np.sin(2 * np.pi * 12.0 * long_t)
        back = resample(resample(sig, 256.0, 500.0), 500.0, 256.0)[0][: sig.size]
        trim = round(0.05 * 256)
        rt_err = np.sqrt(
            np.mean((back[trim:-trim] - sig[trim:-trim]) ** 2)
        ) / np.sqrt(np.mean(sig[trim:-trim] ** 2))

        epoch_ok = True
        for orig_rate in (256.0, 500.0, 2048.0):
            for latency in (0.15, 0.17):
                continuous = np.zeros((2, round(3.0 * orig_rate)))
                at_256 = resample(continuous, orig_rate, 256.0)
                ep = extract_epoch(
                    at_256, 0.0, PreprocessConfig(epoch_start_seconds=latency)
                )
                epoch_ok &= ep.shape == (2, 384)

        report(
            "dsp-suite",
            atten_db >= 20.0 and rms_change <= 0.02 and rt_err <= 0.02 and epoch_ok,
            f"notch {atten_db:.1f} dB, 12 Hz change {rms_change * 100:.2f}%, "
            f"round trip {rt_err * 100:.2f}%, epochs 384 samples: {epoch_ok}",
        )

    def test_wilcoxon_exactness(self):
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(40):
            n = int(rng.integers(5, 11))
            if rng.random() < 0.5:
                a = rng.standard_normal(n)
                b = rng.standard_normal(n)
            else:  # quantized values force tied |differences|
                a = rng.integers(0, 4, size=n).astype(float)
                b = rng.integers(0, 4, size=n).astype(float)
            diffs = a - b
            diffs = diffs[diffs != 0]
            if diffs.size < 5:
                continue
            _, p = wilcoxon_signed_rank(a, b)

            mags = np.abs(diffs)
            order = np.argsort(mags, kind="stable")
            ranks = np.empty(mags.size)
            i = 0
            while i < mags.size:
                j = i
                while j + 1 < mags.size and mags[order[j + 1]] == mags[order[i]]:
                    j += 1
                ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
                i = j + 1
            w = min(ranks[diffs > 0].sum(), ranks[diffs < 0].sum())
            count = sum(
                1
                for signs in itertools.product((0, 1), repeat=diffs.size)
                if sum(r for r, s in zip(ranks, signs) if s) <= w + 1e-12
            )
            p_ref = min(1.0, 2.0 * count / 2**diffs.size)
            worst = max(worst, abs(p - p_ref))
        report(
            "wilcoxon-exactness",
            worst <= 1e-12,
            f"max |p - enumeration| = {worst:.2e}",
        )

    def test_reproducibility(self, tmp_path):
        config = {
            "seed": 12,
            "synth": {"nSubjects": 3, "nTargets": 4,
                      "devices": [{"name": "synth8", "channels":
                                   ["PO3", "PO4", "POz", "O1", "O2", "Oz", "PO7", "PO8"]}]},
            "filterbank": {"bandEdges": [[8.0, 88.0]]},
            "eval": {"calibTrialCounts": [2], "nRepeats": 1},
        }
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(config))

        def run(*args):
            proc = subprocess.run(
                [sys.executable, "-m", "ssvep_lst.cli", *args],
                capture_output=True,
                text=True,
            )
            assert proc.returncode == 0, proc.stderr
            return proc

        data = tmp_path / "data"
        run("synth", "--config", str(cfg_path), "--out", str(data))
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        run("evaluate", "--data-dir", str(data), "--config", str(cfg_path),
            "--out", str(out1))
        run("evaluate", "--data-dir", str(data), "--config", str(cfg_path),
            "--out", str(out2))
        identical = (out1 / "report.csv").read_bytes() == (
            out2 / "report.csv"
        ).read_bytes()

        # container round trip is lossless at stored precision
        from ssvep_lst.containers import read_dataset, write_dataset

        ds = read_dataset(sorted(data.glob("*.ds"))[0])
        copy_path = tmp_path / "copy.ds"
        write_dataset(ds, copy_path)
        back = read_dataset(copy_path)
        lossless = all(
            np.array_equal(ds.stack(s), back.stack(s))
            for s in ds.stimulus_indices
        )
        report(
            "reproducibility",
            identical and lossless,
            f"byte-identical reports: {identical}, lossless io: {lossless}",
        )
