"""Command-line driver: generate, train, transfer, evaluate, classify.

All randomness derives from the single ``seed`` key in the JSON run config;
every command writes the fully resolved config (defaults expanded) beside
its outputs so runs are reproducible from the output directory alone.
Progress goes to stderr, data to files only.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
from pathlib import Path

from . import containers, evaluate, lst, synth
from .core import Montage
from .errors import ConfigError, SsvepError
from .lst import Scheme
from .preprocess import FilterBankSpec
from .synth import ACTIVE_TWO_LABELS, QUICK30_LABELS, SynthConfig
from .trca import classify, fit_model

DEFAULT_CONFIG = {
    "seed": 0,
    "synth": {
        "nSubjects": 5,
        "nTrialsPerStimulus": 6,
        "nTargets": 8,
        "sampleRateHz": 256.0,
        "durationSeconds": 1.5,
        "nHarmonics": 3,
        "harmonicDecay": 1.0,
        "snrDb": -18.0,
        "perHarmonicMixing": False,
        "devices": [
            {"name": "synth8", "channels": list(ACTIVE_TWO_LABELS)},
            {"name": "synth6", "channels": list(QUICK30_LABELS)},
        ],
    },
    "preprocess": {
        "targetRateHz": 256.0,
        "referenceChannel": "Fz",
        "epochStartSeconds": 0.15,
        "epochDurationSeconds": 1.5,
        "notchFrequencyHz": 60.0,
        "notchQualityFactor": 35.0,
    },
    "filterbank": {
        "bandEdges": [[8.0, 88.0], [16.0, 88.0], [24.0, 88.0], [32.0, 88.0], [40.0, 88.0]],
        "order": 4,
    },
    "lst": {"scope": "per-trial"},
    "eval": {
        "schemes": ["baseline", "naive", "lst"],
        "calibTrialCounts": [2, 3],
        "nRepeats": 2,
        "testTrialsPerStimulus": 3,
        "supplementarySubjectCounts": None,
        "sweepCalibTrials": 5,
        "crossDevicePair": None,
        "jobs": 1,
    },
    "io": {},
}


def _collect_unknown_keys(user, default, prefix, problems):
    if not isinstance(user, dict):
        problems.append(f"{prefix or 'config'}: expected an object")
        return
    for key, value in user.items():
        if key not in default:
            problems.append(f"unknown key: {prefix}{key}")
            continue
        if isinstance(default[key], dict):
            _collect_unknown_keys(value, default[key], f"{prefix}{key}.", problems)


def load_config(path=None) -> dict:
    """Merge a user config file over the defaults, rejecting unknown keys.

    All offending keys are reported at once.
    """
    resolved = copy.deepcopy(DEFAULT_CONFIG)
    if path is None:
        return resolved
    try:
        user = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    problems: list[str] = []
    _collect_unknown_keys(user, DEFAULT_CONFIG, "", problems)
    if problems:
        raise ConfigError("; ".join(problems))

    def merge(dst, src):
        for key, value in src.items():
            if isinstance(dst.get(key), dict) and isinstance(value, dict):
                merge(dst[key], value)
            else:
                dst[key] = value

    merge(resolved, user)
    return resolved


def _write_resolved_config(cfg: dict, out_path: Path) -> None:
    if out_path.suffix:
        target = out_path.with_name(out_path.stem + ".resolved_config.json")
    else:
        out_path.mkdir(parents=True, exist_ok=True)
        target = out_path / "resolved_config.json"
    target.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def _synth_config(cfg: dict) -> SynthConfig:
    s = cfg["synth"]
    montages = tuple(
        Montage(d["name"], tuple(d["channels"]), s["sampleRateHz"], 0.0)
        for d in s["devices"]
    )
    return SynthConfig(
        n_subjects=s["nSubjects"],
        n_trials_per_stimulus=s["nTrialsPerStimulus"],
        stimulus_indices=synth.default_stimulus_indices(s["nTargets"]),
        sample_rate_hz=s["sampleRateHz"],
        duration_seconds=s["durationSeconds"],
        n_harmonics=s["nHarmonics"],
        harmonic_decay=s["harmonicDecay"],
        snr_db=s["snrDb"],
        device_montages=montages,
        rng_seed=cfg["seed"],
        per_harmonic_mixing=s["perHarmonicMixing"],
    )


def _bank_spec(cfg: dict) -> FilterBankSpec:
    fb = cfg["filterbank"]
    return FilterBankSpec(
        band_edges=tuple(tuple(e) for e in fb["bandEdges"]),
        sample_rate_hz=cfg["preprocess"]["targetRateHz"],
        order=fb["order"],
    )


def _eval_plan(cfg: dict) -> evaluate.EvalPlan:
    ev = cfg["eval"]
    schemes = tuple(Scheme(s) for s in ev["schemes"])
    supp = ev["supplementarySubjectCounts"]
    return evaluate.EvalPlan(
        schemes=schemes,
        calib_trial_counts=tuple(ev["calibTrialCounts"]),
        n_repeats=ev["nRepeats"],
        test_trials_per_stimulus=ev["testTrialsPerStimulus"],
        supplementary_subject_counts=tuple(supp) if supp else None,
        sweep_calib_trials=ev["sweepCalibTrials"],
        rng_seed=cfg["seed"],
        bank_spec=_bank_spec(cfg),
        lst_scope=cfg["lst"]["scope"],
    )


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scfg = _synth_config(cfg)
    for device_idx, montage in enumerate(scfg.device_montages):
        for subject_idx in range(scfg.n_subjects):
            ds = synth.generate_subject_dataset(subject_idx, device_idx, scfg)
            path = out / f"S{subject_idx:02d}_{montage.device_name}.ds"
            containers.write_dataset(ds, path)
            _log(f"wrote {path}")
    _write_resolved_config(cfg, out)
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    ds = containers.read_dataset(args.data)
    model = fit_model(ds, _bank_spec(cfg))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    containers.write_model(model, out)
    _write_resolved_config(cfg, out)
    _log(f"wrote {out}")
    return 0


def cmd_transfer(args) -> int:
    cfg = load_config(args.config)
    calib = containers.read_dataset(args.target_calib)
    targets = lst.build_targets(calib)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    residual_rows = []
    for src_path in args.source:
        src = containers.read_dataset(src_path)
        transformed, maps = lst.transfer_dataset(
            src, targets, calib.montage, scope=cfg["lst"]["scope"]
        )
        path = out / (Path(src_path).stem + ".lst.ds")
        containers.write_dataset(transformed, path)
        _log(f"wrote {path}")
        for m in maps:
            residual_rows.append(
                [
                    src.domain.subject,
                    m.stimulus_index if m.stimulus_index is not None else "",
                    m.source_trial_index if m.source_trial_index is not None else "",
                    format(m.residual_frobenius, ".12g"),
                ]
            )

    with open(out / "residuals.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["source_subject", "stimulus_index", "trial_index", "residual"])
        writer.writerows(residual_rows)
    _write_resolved_config(cfg, out)
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    plan = _eval_plan(cfg)
    data_dir = Path(args.data_dir)
    paths = sorted(data_dir.glob("*.ds"))
    if not paths:
        raise ConfigError(f"no .ds files in {data_dir}")
    datasets = [containers.read_dataset(p) for p in paths]

    by_device: dict[str, list] = {}
    for ds in datasets:
        by_device.setdefault(ds.montage.device_name, []).append(ds)
    for group in by_device.values():
        group.sort(key=lambda d: d.domain.subject)

    pair = cfg["eval"]["crossDevicePair"]
    if pair:
        target_dev, source_dev = pair
        if target_dev not in by_device or source_dev not in by_device:
            raise ConfigError(
                f"crossDevicePair {pair} not found among devices "
                f"{sorted(by_device)}"
            )
        target_sets = by_device[target_dev]
        source_sets = by_device[source_dev]
        if [d.domain.subject for d in target_sets] != [
            d.domain.subject for d in source_sets
        ]:
            raise ConfigError("cross-device subjects do not pair up")
    else:
        if len(by_device) != 1:
            raise ConfigError(
                f"multiple devices {sorted(by_device)} in {data_dir}; set "
                f"eval.crossDevicePair or keep one device per directory"
            )
        (target_sets,) = by_device.values()
        source_sets = None

    jobs = args.jobs if args.jobs is not None else cfg["eval"]["jobs"]
    _log(
        f"evaluating {len(target_sets)} subjects, schemes "
        f"{[s.value for s in plan.schemes]}, jobs={jobs}"
    )
    report = evaluate.run_leave_one_subject_out(
        target_sets, plan, source_datasets=source_sets, n_jobs=jobs
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.to_csv())
    (out / "summary.json").write_text(report.to_json_summary() + "\n")
    _write_resolved_config(cfg, out)
    _log(f"wrote {out / 'report.csv'} and {out / 'summary.json'}")
    return 0


def cmd_classify(args) -> int:
    model = containers.read_model(args.model)
    ds = containers.read_dataset(args.data)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["stimulus_index", "trial_index", "decision"]
            + [f"rho_{n}" for n in model.stimulus_indices]
        )
        for stim in ds.stimulus_indices:
            for ep in ds.epochs[stim]:
                score = classify(ep, model)
                writer.writerow(
                    [stim, ep.trial_index, score.decision]
                    + [format(v, ".12g") for v in score.rho]
                )
    _log(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssvep-lst",
        description=(
            "Template-based SSVEP decoding with least-squares cross-domain "
            "transfer: synthetic data generation, model training, transfer, "
            "and benchmark evaluation. Config keys and defaults: "
            + json.dumps(DEFAULT_CONFIG, sort_keys=True)
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic datasets")
    p.add_argument("--config", help="JSON run config (defaults used if omitted)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit an ensemble decoder on a dataset")
    p.add_argument("--data", required=True, help="training dataset (.ds)")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="output model file (.tm)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("transfer", help="transform source datasets via LST")
    p.add_argument("--target-calib", required=True, help="calibration dataset (.ds)")
    p.add_argument("--source", required=True, action="append", help="source dataset(s)")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("evaluate", help="run the leave-one-subject-out benchmark")
    p.add_argument("--data-dir", required=True, help="directory of .ds files")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, help="concurrent CV cells (default from config)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("classify", help="score a dataset with a fitted model")
    p.add_argument("--model", required=True, help="model file (.tm)")
    p.add_argument("--data", required=True, help="dataset to classify (.ds)")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_classify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SsvepError, OSError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
