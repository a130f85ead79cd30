"""Per-sample scoring and clean/noisy partitioning."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .auxmodel import AuxModel, annotated_prob
from .data import Dataset
from .errors import InsufficientDataError, ParameterError
from .mixture import (GmmParams, fit_gmm1, fit_gmm2, normalize_losses, posterior_clean,
                      weighted_1d_clean_prob)
from .net import LOG_FLOOR, ClassifierParams, forward_batch

log = logging.getLogger(__name__)

SCHEMES = ("gmm2d", "gmm1d_loss_only", "weighted_1d")
SCHEME_ALIASES = {"gmm2d": "gmm2d", "gmm1d": "gmm1d_loss_only", "gmm1d_loss_only": "gmm1d_loss_only",
                  "weighted1d": "weighted_1d", "weighted_1d": "weighted_1d"}


def canonical_scheme(name: str) -> str:
    try:
        return SCHEME_ALIASES[name]
    except KeyError:
        raise ParameterError(f"unknown selection scheme {name!r}; choose from {sorted(SCHEME_ALIASES)}") from None


@dataclass(frozen=True)
class Partition:
    clean_indices: np.ndarray
    noisy_indices: np.ndarray
    clean_posteriors: np.ndarray
    epsilon: float
    scheme: str
    empty_clean: bool = False
    fits: tuple = ()
    scores: np.ndarray | None = None

    @property
    def n_clean(self) -> int:
        return len(self.clean_indices)

    @property
    def n_noisy(self) -> int:
        return len(self.noisy_indices)


def compute_scores(dataset: Dataset, classifier: ClassifierParams, aux: AuxModel | None) -> np.ndarray:
    """(N, 2) array of [normalized CE loss, auxiliary prob of the observed label].

    Without an auxiliary model the second column is NaN.
    """
    y = dataset.observed_labels
    probs = forward_batch(classifier, dataset.features).probs
    losses = -np.log(np.maximum(probs[np.arange(len(y)), y], LOG_FLOOR))
    omega = np.empty((len(y), 2))
    omega[:, 0] = normalize_losses(losses)
    omega[:, 1] = np.nan if aux is None else annotated_prob(aux, dataset.features, y)
    return omega


def clean_posteriors(scores, scheme: str = "gmm2d", seed: int = 0, beta: float = 0.2,
                     max_iters: int = 200, tol: float = 1e-8, shared_covariance: bool = False):
    scheme = canonical_scheme(scheme)
    scores = np.asarray(scores, dtype=np.float64)
    if len(scores) < 10:
        raise InsufficientDataError(f"selection needs at least 10 scores, got {len(scores)}")
    if scheme == "gmm2d":
        fit = fit_gmm2(scores, max_iters, tol, seed, shared_covariance)
        return posterior_clean(fit, scores), (fit,)
    if scheme == "gmm1d_loss_only":
        fit = fit_gmm1(scores[:, 0], max_iters, tol, seed)
        return posterior_clean(fit, scores[:, 0]), (fit,)
    fit_loss = fit_gmm1(scores[:, 0], max_iters, tol, seed)
    fit_aux = fit_gmm1(scores[:, 1], max_iters, tol, seed, clean="high")
    post = weighted_1d_clean_prob(posterior_clean(fit_loss, scores[:, 0]),
                                  posterior_clean(fit_aux, scores[:, 1]), beta)
    return post, (fit_loss, fit_aux)


def partition_from_posteriors(post, epsilon: float = 0.5, scheme: str = "gmm2d", fits: tuple = (),
                              scores=None) -> Partition:
    post = np.asarray(post, dtype=np.float64)
    clean = np.flatnonzero(post >= epsilon)
    noisy = np.flatnonzero(post < epsilon)
    if clean.size == 0:
        log.warning("selection produced an empty clean set (epsilon=%s); training continues on pseudo-labels",
                    epsilon)
    return Partition(clean, noisy, post, epsilon, scheme, clean.size == 0, fits, scores)


def select(scores, scheme: str = "gmm2d", epsilon: float = 0.5, seed: int = 0, beta: float = 0.2,
           max_iters: int = 200, tol: float = 1e-8, shared_covariance: bool = False) -> Partition:
    scheme = canonical_scheme(scheme)
    post, fits = clean_posteriors(scores, scheme, seed, beta, max_iters, tol, shared_covariance)
    return partition_from_posteriors(post, epsilon, scheme, fits, np.asarray(scores, dtype=np.float64))


def write_partition_csv(partition: Partition, scores, dataset: Dataset, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    clean_set = np.zeros(len(scores), dtype=bool)
    clean_set[partition.clean_indices] = True
    truly = dataset.is_clean
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "omega_1", "omega_2", "posterior", "assigned_set", "is_truly_clean"])
        for i, (o, p) in enumerate(zip(scores, partition.clean_posteriors)):
            w.writerow([i, f"{o[0]:.6g}", f"{o[1]:.6g}", f"{p:.6g}", "X" if clean_set[i] else "U", int(truly[i])])
    return path


def fits_to_dict(fits: tuple[GmmParams, ...]) -> list:
    return [f.to_dict() for f in fits]
