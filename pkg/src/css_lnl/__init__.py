"""Collaborative sample selection for learning with noisy labels (desk-scale, NumPy)."""

from .auxmodel import AuxModel, annotated_prob, aux_predict, build_aux, prompt_grad_step
from .config import RunConfig, parse_config
from .data import Dataset, NoiseSpec, generate_dataset, generate_splits, inject_noise, strong_augment, weak_augment
from .errors import (ConfigError, CoverageError, CSSError, DegenerateFitError, DegenerateInputError,
                     DivergenceError, InsufficientDataError, ParameterError, ShapeError, UndefinedAUCError)
from .metrics import RocCurve, count_noisy_in_clean, emit, roc_auc
from .mixture import GmmParams, fit_gmm1, fit_gmm2, normalize_losses, posterior_clean, weighted_1d_clean_prob
from .net import ClassifierParams, backward_and_step, forward, init_classifier
from .selection import Partition, compute_scores, select
from .training import EpochReport, ExperimentResult, run_epoch, run_experiment

__version__ = "0.1.0"

__all__ = [
    "AuxModel", "annotated_prob", "aux_predict", "build_aux", "prompt_grad_step",
    "RunConfig", "parse_config",
    "Dataset", "NoiseSpec", "generate_dataset", "generate_splits", "inject_noise", "strong_augment", "weak_augment",
    "ConfigError", "CoverageError", "CSSError", "DegenerateFitError", "DegenerateInputError", "DivergenceError",
    "InsufficientDataError", "ParameterError", "ShapeError", "UndefinedAUCError",
    "RocCurve", "count_noisy_in_clean", "emit", "roc_auc",
    "GmmParams", "fit_gmm1", "fit_gmm2", "normalize_losses", "posterior_clean", "weighted_1d_clean_prob",
    "ClassifierParams", "backward_and_step", "forward", "init_classifier",
    "Partition", "compute_scores", "select",
    "EpochReport", "ExperimentResult", "run_epoch", "run_experiment",
]
