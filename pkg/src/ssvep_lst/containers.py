"""Single-file containers for datasets and fitted models.

Layout: an 8-byte little-endian unsigned length prefix, a UTF-8 JSON header
of exactly that length, then the raw payload.  Epoch payloads are
little-endian float32 (channel-major, trials in (stimulus, trial) order);
model payloads are float64.  Headers are written with sorted keys so
identical inputs produce identical bytes.

A CSV import path is also provided for external data: one file per trial
with a header row of channel labels, one column per channel.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .core import Dataset, DomainId, Epoch, Montage
from .errors import (
    FormatError,
    InvalidModelError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from .preprocess import FilterBankSpec
from .trca import TrcaModel

FORMAT_VERSION = 1
_LEN_PREFIX = struct.Struct("<Q")


def _montage_to_json(m: Montage) -> dict:
    return {
        "deviceName": m.device_name,
        "channelLabels": list(m.channel_labels),
        "sampleRateHz": m.sample_rate_hz,
        "latencySeconds": m.latency_seconds,
    }


def _montage_from_json(d: dict) -> Montage:
    return Montage(
        device_name=d["deviceName"],
        channel_labels=tuple(d["channelLabels"]),
        sample_rate_hz=d["sampleRateHz"],
        latency_seconds=d["latencySeconds"],
    )


def _write_container(path, header: dict, payload: bytes) -> None:
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(_LEN_PREFIX.pack(len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)


def _read_container(path, expected_kind: str) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < _LEN_PREFIX.size:
        raise TruncatedPayloadError(
            f"file is {len(raw)} bytes, need {_LEN_PREFIX.size} for length prefix"
        )
    (header_len,) = _LEN_PREFIX.unpack(raw[: _LEN_PREFIX.size])
    header_end = _LEN_PREFIX.size + header_len
    if len(raw) < header_end:
        raise TruncatedPayloadError(
            f"header declared {header_len} bytes but file ends at byte {len(raw)}"
        )
    try:
        header = json.loads(raw[_LEN_PREFIX.size : header_end])
    except json.JSONDecodeError as exc:
        raise FormatError(f"header is not valid JSON: {exc}") from exc
    if header.get("formatVersion") != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"format version {header.get('formatVersion')!r} not supported "
            f"(expected {FORMAT_VERSION})"
        )
    if header.get("kind") != expected_kind:
        raise FormatError(
            f"container kind {header.get('kind')!r}, expected {expected_kind!r}"
        )
    return header, raw[header_end:]


# ---------------------------------------------------------------------------
# datasets


def write_dataset(ds: Dataset, path) -> None:
    """Serialize a dataset; samples are quantized to float32."""
    stim_indices = ds.stimulus_indices
    trial_counts = {str(s): len(ds.epochs[s]) for s in stim_indices}
    blocks = []
    for stim in stim_indices:
        for ep in ds.epochs[stim]:
            blocks.append(np.ascontiguousarray(ep.data, dtype="<f4"))
    n_samples = ds.n_samples
    header = {
        "formatVersion": FORMAT_VERSION,
        "kind": "dataset",
        "domainId": {
            "subject": ds.domain.subject,
            "session": ds.domain.session,
            "device": ds.domain.device,
        },
        "montage": _montage_to_json(ds.montage),
        "stimulusIndices": stim_indices,
        "trialCounts": trial_counts,
        "shape": [len(blocks), ds.montage.n_channels, n_samples],
        "dtype": "<f4",
    }
    payload = b"".join(b.tobytes() for b in blocks)
    _write_container(path, header, payload)


def read_dataset(path) -> Dataset:
    """Load a dataset container; raises structured format errors."""
    header, payload = _read_container(path, "dataset")
    n_trials, n_channels, n_samples = header["shape"]
    expected = 4 * n_trials * n_channels * n_samples
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"payload is {len(payload)} bytes, header shape {header['shape']} "
            f"requires {expected}"
        )
    if len(payload) != expected:
        raise FormatError(
            f"payload is {len(payload)} bytes, header shape requires {expected}"
        )
    montage = _montage_from_json(header["montage"])
    if montage.n_channels != n_channels:
        raise FormatError(
            f"montage lists {montage.n_channels} channels, shape says {n_channels}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(n_trials, n_channels, n_samples)
    domain = DomainId(**header["domainId"])

    epochs: dict[int, tuple[Epoch, ...]] = {}
    cursor = 0
    for stim in header["stimulusIndices"]:
        count = header["trialCounts"][str(stim)]
        epochs[stim] = tuple(
            Epoch(
                data=data[cursor + i].astype(np.float64),
                montage=montage,
                stimulus_index=stim,
                trial_index=i,
            )
            for i in range(count)
        )
        cursor += count
    if cursor != n_trials:
        raise FormatError(
            f"trial counts sum to {cursor}, header shape says {n_trials}"
        )
    return Dataset(domain=domain, montage=montage, epochs=epochs)


# ---------------------------------------------------------------------------
# models


def write_model(model: TrcaModel, path) -> None:
    """Serialize a fitted model; matrices stored as float64."""
    if not model.templates or not model.templates[0]:
        raise InvalidModelError("model has no templates")
    n_bands = model.bank_spec.n_bands
    n_channels = model.n_channels
    n_stimuli = model.n_stimuli
    n_samples = model.templates[0][0].shape[1]

    parts = []
    for k in range(n_bands):
        parts.append(np.ascontiguousarray(model.filters[k], dtype="<f8"))
    for k in range(n_bands):
        for tpl in model.templates[k]:
            parts.append(np.ascontiguousarray(tpl, dtype="<f8"))
    for tpl in model.broadband_templates:
        parts.append(np.ascontiguousarray(tpl, dtype="<f8"))

    header = {
        "formatVersion": FORMAT_VERSION,
        "kind": "model",
        "stimulusIndices": list(model.stimulus_indices),
        "bankSpec": {
            "bandEdges": [list(e) for e in model.bank_spec.band_edges],
            "sampleRateHz": model.bank_spec.sample_rate_hz,
            "order": model.bank_spec.order,
        },
        "alphaExponent": model.alpha_exponent,
        "alphaOffset": model.alpha_offset,
        "shape": {
            "nBands": n_bands,
            "nChannels": n_channels,
            "nStimuli": n_stimuli,
            "nSamples": n_samples,
        },
        "dtype": "<f8",
    }
    _write_container(path, header, b"".join(p.tobytes() for p in parts))


def read_model(path) -> TrcaModel:
    header, payload = _read_container(path, "model")
    shape = header["shape"]
    n_bands = shape["nBands"]
    n_channels = shape["nChannels"]
    n_stimuli = shape["nStimuli"]
    n_samples = shape["nSamples"]

    filters_len = n_bands * n_channels * n_stimuli
    templates_len = n_bands * n_stimuli * n_channels * n_samples
    broadband_len = n_stimuli * n_channels * n_samples
    expected = 8 * (filters_len + templates_len + broadband_len)
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"payload is {len(payload)} bytes, header requires {expected}"
        )
    if len(payload) != expected:
        raise FormatError(
            f"payload is {len(payload)} bytes, header requires {expected}"
        )

    flat = np.frombuffer(payload, dtype="<f8")
    filters_block = flat[:filters_len].reshape(n_bands, n_channels, n_stimuli)
    templates_block = flat[
        filters_len : filters_len + templates_len
    ].reshape(n_bands, n_stimuli, n_channels, n_samples)
    broadband_block = flat[filters_len + templates_len :].reshape(
        n_stimuli, n_channels, n_samples
    )

    bank = header["bankSpec"]
    spec = FilterBankSpec(
        band_edges=tuple(tuple(e) for e in bank["bandEdges"]),
        sample_rate_hz=bank["sampleRateHz"],
        order=bank["order"],
    )
    return TrcaModel(
        stimulus_indices=tuple(header["stimulusIndices"]),
        filters=tuple(filters_block[k].copy() for k in range(n_bands)),
        templates=tuple(
            tuple(templates_block[k, n].copy() for n in range(n_stimuli))
            for k in range(n_bands)
        ),
        broadband_templates=tuple(
            broadband_block[n].copy() for n in range(n_stimuli)
        ),
        bank_spec=spec,
        alpha_exponent=header["alphaExponent"],
        alpha_offset=header["alphaOffset"],
    )


# ---------------------------------------------------------------------------
# CSV import


def read_trial_csv(path) -> tuple[list[str], np.ndarray]:
    """Read one trial CSV (header row of channel labels, one column each).

    Returns (labels, data) with data shaped channels x samples.
    """
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        labels = [c.strip() for c in first.split(",")]
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != len(labels):
        raise FormatError(
            f"{path}: header lists {len(labels)} channels, rows have "
            f"{data.shape[1]} columns"
        )
    return labels, data.T


def import_csv_dataset(
    trial_paths: dict[int, list], montage: Montage, domain: DomainId
) -> Dataset:
    """Build a dataset from CSV trial files grouped by stimulus index.

    Every file must carry exactly the montage's channel labels (in order).
    """
    epochs: dict[int, tuple[Epoch, ...]] = {}
    for stim, paths in sorted(trial_paths.items()):
        group = []
        for i, path in enumerate(paths):
            labels, data = read_trial_csv(path)
            if tuple(labels) != montage.channel_labels:
                raise FormatError(
                    f"{path}: channel labels {labels} do not match montage "
                    f"{list(montage.channel_labels)}"
                )
            group.append(
                Epoch(data=data, montage=montage, stimulus_index=stim, trial_index=i)
            )
        epochs[stim] = tuple(group)
    return Dataset(domain=domain, montage=montage, epochs=epochs)
