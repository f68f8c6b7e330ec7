"""Template-based SSVEP decoding with least-squares cross-domain transfer."""

from .core import (
    Dataset,
    DomainId,
    Epoch,
    Montage,
    StimulusSpec,
    build_stimulus_table,
    validate_dataset,
)
from .lst import Scheme, TransferMap, assemble_pool, build_targets, fit_transform, transfer_dataset
from .preprocess import FilterBankSpec, PreprocessConfig
from .synth import SynthConfig, generate_subject_dataset
from .trca import ScoreVector, TrcaModel, classify, fit_model, fit_trca_filter

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DomainId",
    "Epoch",
    "FilterBankSpec",
    "Montage",
    "PreprocessConfig",
    "Scheme",
    "ScoreVector",
    "StimulusSpec",
    "SynthConfig",
    "TransferMap",
    "TrcaModel",
    "assemble_pool",
    "build_stimulus_table",
    "build_targets",
    "classify",
    "fit_model",
    "fit_transform",
    "fit_trca_filter",
    "generate_subject_dataset",
    "transfer_dataset",
    "validate_dataset",
]
