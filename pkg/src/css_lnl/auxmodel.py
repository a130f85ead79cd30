"""Auxiliary scorer standing in for a pretrained vision-language model.

A frozen random projection embeds inputs, frozen per-class prototypes play the
encoded class names, and M learnable context vectors shift every prototype by
their mean. Class probabilities are a softmax over cosine similarities / tau.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset
from .errors import CoverageError, DegenerateInputError, DivergenceError, ParameterError, ShapeError
from .net import softmax


@dataclass(frozen=True)
class AuxModel:
    embedder: np.ndarray
    prototypes: np.ndarray
    context: np.ndarray
    tau: float = 0.07
    frozen: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ParameterError("tau must be positive")
        self.embedder.flags.writeable = False
        self.prototypes.flags.writeable = False

    @property
    def context_count(self) -> int:
        return self.context.shape[0]

    @property
    def class_count(self) -> int:
        return self.prototypes.shape[0]

    def effective_prototypes(self) -> np.ndarray:
        return self.prototypes + self.context.mean(axis=0)

    def frozen_checksum(self) -> str:
        h = hashlib.sha256()
        h.update(self.embedder.tobytes())
        h.update(self.prototypes.tobytes())
        return h.hexdigest()


@dataclass
class AuxCache:
    zn: np.ndarray
    tn: np.ndarray
    tnorm: np.ndarray
    probs: np.ndarray


def build_aux(pretrain_data: Dataset, embed_dim: int = 32, tau: float = 0.07, M: int = 16,
              aux_quality: float = 0.8, seed: int = 0) -> AuxModel:
    """Embed the pretraining split and derive class prototypes of tunable quality.

    Each prototype blends the normalized embedded class mean (weight ``aux_quality``)
    with a random Gaussian direction (weight ``1 - aux_quality``), both at the
    mean embedded class-mean norm. At quality 0 the prototypes carry no class
    information at all.
    """
    if not 0.0 <= aux_quality <= 1.0:
        raise ParameterError("aux_quality must lie in [0, 1]")
    if M < 1 or embed_dim < 1:
        raise ParameterError("M and embed_dim must be >= 1")
    c = pretrain_data.class_count
    present = set(np.unique(pretrain_data.true_labels).tolist())
    missing = sorted(set(range(c)) - present)
    if missing:
        raise CoverageError(f"pretraining data has no samples of classes {missing}")
    rng = np.random.default_rng([seed, 0xA0C5])
    d = pretrain_data.dim
    embedder = rng.normal(size=(d, embed_dim)) / np.sqrt(d)
    z = pretrain_data.features @ embedder
    means = np.stack([z[pretrain_data.true_labels == k].mean(axis=0) for k in range(c)])
    scale = np.linalg.norm(means, axis=1).mean()
    direction = means / np.linalg.norm(means, axis=1, keepdims=True)
    noise = rng.normal(size=(c, embed_dim)) / np.sqrt(embed_dim)
    protos = scale * (aux_quality * direction + (1.0 - aux_quality) * noise)
    return AuxModel(embedder, protos, np.zeros((M, embed_dim)), tau)


def aux_forward_batch(model: AuxModel, x) -> AuxCache:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.embedder.shape[0]:
        raise ShapeError(f"input has dimension {x.shape[1]}, embedder expects {model.embedder.shape[0]}")
    z = x @ model.embedder
    zn_norm = np.linalg.norm(z, axis=1, keepdims=True)
    if np.any(zn_norm == 0):
        raise DegenerateInputError("embedded input has zero norm; cosine similarity undefined")
    t = model.effective_prototypes()
    tnorm = np.linalg.norm(t, axis=1, keepdims=True)
    if np.any(tnorm == 0) or not np.all(np.isfinite(tnorm)):
        raise DegenerateInputError("an effective prototype has zero or non-finite norm")
    zn = z / zn_norm
    tn = t / tnorm
    probs = softmax((zn @ tn.T) / model.tau)
    return AuxCache(zn, tn, tnorm, probs)


def aux_predict(model: AuxModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    p = aux_forward_batch(model, x).probs
    return p[0] if x.ndim == 1 else p


def annotated_prob(model: AuxModel, x, y):
    """Auxiliary probability of the observed label ``y`` (scalar or per-row array)."""
    p = aux_predict(model, x)
    if p.ndim == 1:
        return float(p[int(y)])
    y = np.asarray(y, dtype=np.int64)
    return p[np.arange(len(p)), y]


def aux_context_grad(model: AuxModel, cache: AuxCache, dscores: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the context vectors given dL/d(logits) where logits = cos / tau."""
    dcos = dscores / model.tau
    dtn = dcos.T @ cache.zn
    dt = (dtn - cache.tn * np.sum(cache.tn * dtn, axis=1, keepdims=True)) / cache.tnorm
    dshift = dt.sum(axis=0)
    return np.repeat(dshift[None, :] / model.context_count, model.context_count, axis=0)


def prompt_grad_step(model: AuxModel, grad: np.ndarray, lr: float) -> AuxModel:
    if model.frozen:
        raise ParameterError("auxiliary model is frozen; prompt updates are disabled")
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != model.context.shape:
        raise ShapeError(f"context gradient shape {grad.shape} != {model.context.shape}")
    if not np.all(np.isfinite(grad)):
        raise DivergenceError("non-finite gradient for context vectors")
    if lr == 0:
        return model
    return replace(model, context=model.context - lr * grad)


def save_aux(model: AuxModel, path) -> None:
    with open(path, "wb") as fh:
        np.savez(fh, embedder=model.embedder, prototypes=model.prototypes, context=model.context,
                 tau=np.array(model.tau), M=np.array(model.context_count), frozen=np.array(model.frozen))


def load_aux(path) -> AuxModel:
    with np.load(path) as z:
        ctx = z["context"]
        if int(z["M"]) != ctx.shape[0]:
            raise ShapeError("checkpoint context count does not match stored M")
        return AuxModel(z["embedder"].copy(), z["prototypes"].copy(), ctx.copy(),
                        float(z["tau"]), bool(z["frozen"]))
