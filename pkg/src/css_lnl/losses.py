"""Training objectives for the classifier and the auxiliary prompt, with analytic gradients.

Every ``*_head`` function works on model outputs (probabilities or features) and
returns the loss together with its gradient w.r.t. the logits or features, so a
training step can stack all views into one forward/backward pass. The
``loss_*`` functions are the standalone versions: forward, loss and parameter
gradients for one batch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .auxmodel import AuxModel, aux_context_grad, aux_forward_batch
from .data import strong_augment, weak_augment
from .errors import InsufficientDataError, ParameterError
from .net import LOG_FLOOR, ClassifierParams, backward, forward_batch


@dataclass(frozen=True)
class SslConfig:
    lambda_u: float = 0.5
    lambda_c: float = 0.025
    lambda_r: float = 1.0
    delta: float = 0.95
    tau_con: float = 0.5
    sigma_w: float = 0.1
    sigma_s: float = 0.6
    drop_prob: float = 0.2
    soft_pseudo: bool = False

    def __post_init__(self):
        if min(self.lambda_u, self.lambda_c, self.lambda_r) < 0:
            raise ParameterError("loss weights must be non-negative")
        if not 0.0 < self.delta <= 1.0:
            raise ParameterError("delta must lie in (0, 1]")
        if not self.tau_con > 0:
            raise ParameterError("tau_con must be positive")
        if not 0 <= self.sigma_w < self.sigma_s:
            raise ParameterError("augmentation strengths need 0 <= sigma_w < sigma_s")
        if not 0.0 <= self.drop_prob < 1.0:
            raise ParameterError("drop_prob must lie in [0, 1)")


def uniform_prior(class_count: int) -> np.ndarray:
    return np.full(class_count, 1.0 / class_count)


# -- heads -----------------------------------------------------------------

def ce_head(probs, targets, weights=None, denom=None):
    """Mean cross-entropy with hard (int) or soft (row-stochastic) targets.

    Returns ``(loss, dlogits)``. ``weights`` multiplies each row (the confidence
    mask); ``denom`` defaults to the number of rows.
    """
    probs = np.asarray(probs, dtype=np.float64)
    n = len(probs)
    if n == 0:
        return 0.0, np.zeros_like(probs)
    denom = n if denom is None else denom
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    targets = np.asarray(targets)
    if targets.ndim == 1:
        onehot = np.zeros_like(probs)
        onehot[np.arange(n), targets.astype(np.int64)] = 1.0
    else:
        onehot = targets.astype(np.float64)
    logp = np.log(np.maximum(probs, LOG_FLOOR))
    row_loss = -np.sum(onehot * logp, axis=1)
    loss = float(np.sum(w * row_loss) / denom)
    dlogits = (w / denom)[:, None] * (probs * onehot.sum(axis=1, keepdims=True) - onehot)
    return loss, dlogits


def pseudo_labels_from_probs(probs, delta: float):
    """Hard argmax labels (lowest index wins ties) and the ``max prob > delta`` mask."""
    probs = np.atleast_2d(probs)
    return np.argmax(probs, axis=1), probs.max(axis=1) > delta


def ntxent_head(h1, h2, tau: float):
    """NT-Xent over 2N cosine-normalized views; mean over all 2N anchors.

    Returns ``(loss, dh1, dh2)``.
    """
    h1 = np.asarray(h1, dtype=np.float64)
    h2 = np.asarray(h2, dtype=np.float64)
    n = len(h1)
    if n < 2:
        raise InsufficientDataError("contrastive loss needs at least 2 samples")
    z = np.concatenate([h1, h2])
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    zn = z / norms
    sim = zn @ zn.T / tau
    m = 2 * n
    np.fill_diagonal(sim, -np.inf)
    pos = np.r_[np.arange(n, m), np.arange(n)]
    mx = sim.max(axis=1, keepdims=True)
    e = np.exp(sim - mx)
    lse = mx[:, 0] + np.log(e.sum(axis=1))
    loss = float(np.mean(lse - sim[np.arange(m), pos]))
    ds = e / e.sum(axis=1, keepdims=True)
    ds[np.arange(m), pos] -= 1.0
    ds /= m
    dzn = (ds + ds.T) @ zn / tau
    dz = (dzn - zn * np.sum(zn * dzn, axis=1, keepdims=True)) / norms
    return loss, dz[:n], dz[n:]


def reg_head(probs, prior=None):
    """sum_c pi_c log(pi_c / mean_c) with mean_c the batch-average probability."""
    probs = np.asarray(probs, dtype=np.float64)
    b, c = probs.shape
    prior = uniform_prior(c) if prior is None else np.asarray(prior, dtype=np.float64)
    mean = probs.mean(axis=0)
    safe = np.maximum(mean, LOG_FLOOR)
    loss = float(np.sum(prior * np.log(prior / safe)))
    g = np.where(mean > LOG_FLOOR, -prior / safe, 0.0) / b
    dlogits = probs * (g[None, :] - (probs @ g)[:, None])
    return loss, dlogits


# -- standalone losses -----------------------------------------------------

def _zero_grads(params: ClassifierParams) -> dict:
    return {k: np.zeros_like(v) for k, v in params.weights.items()}


def _index(x, indices):
    return np.arange(len(x)) if indices is None else np.asarray(indices)


def loss_labeled_dnn(params: ClassifierParams, x, y, config: SslConfig, seed: int = 0, indices=None):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if len(y) == 0:
        return 0.0, _zero_grads(params)
    xw = weak_augment(x, config.sigma_w, seed, _index(x, indices))
    cache = forward_batch(params, xw)
    loss, dlog = ce_head(cache.probs, np.asarray(y))
    return loss, backward(params, cache, dlogits=dlog)


def loss_labeled_prompt(aux: AuxModel, x, y, config: SslConfig | None = None):
    """Supervised prompt loss on unaugmented inputs; gradient w.r.t. the context only."""
    if len(y) == 0:
        return 0.0, np.zeros_like(aux.context)
    cache = aux_forward_batch(aux, x)
    loss, dscores = ce_head(cache.probs, np.asarray(y))
    return loss, aux_context_grad(aux, cache, dscores)


def pseudo_labels(u, model, config: SslConfig, seed: int = 0, indices=None):
    """Predict on weak views of ``u`` with a classifier or auxiliary model.

    Returns ``(labels, mask, probs)``.
    """
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    uw = weak_augment(u, config.sigma_w, seed, _index(u, indices))
    if isinstance(model, AuxModel):
        probs = aux_forward_batch(model, uw).probs
    else:
        probs = forward_batch(model, uw).probs
    labels, mask = pseudo_labels_from_probs(probs, config.delta)
    return labels, mask, probs


def _pseudo_targets(labels, probs, config):
    return probs if config.soft_pseudo else labels


def loss_unlabeled_dnn(params: ClassifierParams, u, config: SslConfig, seed: int = 0, indices=None,
                       denom=None):
    """Confidence-masked consistency loss: weak-view pseudo-labels vs. strong-view predictions."""
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    if len(u) == 0:
        return 0.0, _zero_grads(params)
    idx = _index(u, indices)
    labels, mask, probs_w = pseudo_labels(u, params, config, seed, idx)
    if not mask.any():
        return 0.0, _zero_grads(params)
    us = strong_augment(u, config.sigma_s, config.drop_prob, seed + 1, idx)
    cache = forward_batch(params, us)
    loss, dlog = ce_head(cache.probs, _pseudo_targets(labels, probs_w, config), mask.astype(float),
                         denom if denom is not None else len(u))
    return loss, backward(params, cache, dlogits=dlog)


def loss_unlabeled_prompt(aux: AuxModel, u, config: SslConfig, seed: int = 0, indices=None):
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    if len(u) == 0:
        return 0.0, np.zeros_like(aux.context)
    idx = _index(u, indices)
    labels, mask, probs_w = pseudo_labels(u, aux, config, seed, idx)
    if not mask.any():
        return 0.0, np.zeros_like(aux.context)
    us = strong_augment(u, config.sigma_s, config.drop_prob, seed + 1, idx)
    # a fully dropped view has no direction; it is excluded like a low-confidence one
    dead = ~np.any(us @ aux.embedder, axis=1)
    if dead.any():
        mask = mask & ~dead
        us[dead] = u[dead]
        if not mask.any():
            return 0.0, np.zeros_like(aux.context)
    cache = aux_forward_batch(aux, us)
    loss, dscores = ce_head(cache.probs, _pseudo_targets(labels, probs_w, config), mask.astype(float), len(u))
    return loss, aux_context_grad(aux, cache, dscores)


def contrastive_loss(params: ClassifierParams, x, config: SslConfig, seed: int = 0, indices=None):
    """NT-Xent between two independent weak views of each sample, embedded by the feature extractor."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if len(x) < 2:
        raise InsufficientDataError("contrastive loss needs at least 2 samples")
    idx = _index(x, indices)
    v1 = weak_augment(x, config.sigma_w, seed, idx)
    v2 = weak_augment(x, config.sigma_w, seed + 7919, idx)
    cache = forward_batch(params, np.concatenate([v1, v2]))
    n = len(x)
    loss, d1, d2 = ntxent_head(cache.features[:n], cache.features[n:], config.tau_con)
    return loss, backward(params, cache, dfeatures=np.concatenate([d1, d2]))


def reg_loss(params: ClassifierParams, x, config: SslConfig | None = None, prior=None):
    """Uniform-prior regularizer on the classifier's batch-average prediction for inputs ``x``."""
    cache = forward_batch(params, x)
    loss, dlog = reg_head(cache.probs, prior)
    return loss, backward(params, cache, dlogits=dlog)


def total_dnn_loss(parts, config: SslConfig) -> float:
    if isinstance(parts, dict):
        parts = (parts["loss_x"], parts["loss_u"], parts["loss_con"], parts["loss_reg"])
    lx, lu, lcon, lreg = parts
    return lx + config.lambda_u * lu + config.lambda_c * lcon + config.lambda_r * lreg


def total_prompt_loss(parts, config: SslConfig) -> float:
    if isinstance(parts, dict):
        parts = (parts["loss_px"], parts["loss_pu"])
    lx, lu = parts
    return lx + config.lambda_u * lu


# -- combined training objectives -----------------------------------------

def dnn_objective(params: ClassifierParams, xl, yl, il, xu, iu, config: SslConfig, seed: int,
                  use_contrastive: bool = True):
    """Total classifier objective for one step, evaluated in a single stacked pass.

    Labeled rows use one weak view, unlabeled rows a strong view against
    pseudo-labels from a separate weak view, and the contrastive and
    regularization terms use two weak views of the combined batch.
    Returns ``(parts, grads)``.
    """
    xl = np.asarray(xl, dtype=np.float64).reshape(-1, params.input_dim)
    xu = np.asarray(xu, dtype=np.float64).reshape(-1, params.input_dim)
    nl, nu = len(xl), len(xu)
    views = []
    if nl:
        views.append(weak_augment(xl, config.sigma_w, seed, il))
    mask = np.zeros(nu, dtype=bool)
    if nu:
        labels, mask, probs_w = pseudo_labels(xu, params, config, seed + 101, iu)
        views.append(strong_augment(xu, config.sigma_s, config.drop_prob, seed + 102, iu))
    xa = np.concatenate([xl, xu])
    ia = np.concatenate([np.asarray(il, dtype=np.int64).reshape(-1), np.asarray(iu, dtype=np.int64).reshape(-1)])
    na = len(xa)
    views.append(weak_augment(xa, config.sigma_w, seed + 201, ia))
    views.append(weak_augment(xa, config.sigma_w, seed + 202, ia))
    cache = forward_batch(params, np.concatenate(views))

    dlogits = np.zeros_like(cache.logits)
    dfeat = np.zeros_like(cache.features)
    parts = {"loss_x": 0.0, "loss_u": 0.0, "loss_con": 0.0, "loss_reg": 0.0}
    off = 0
    if nl:
        parts["loss_x"], dlogits[:nl] = ce_head(cache.probs[:nl], yl)
        off = nl
    if nu:
        if mask.any():
            lu, dlu = ce_head(cache.probs[off:off + nu], _pseudo_targets(labels, probs_w, config),
                              mask.astype(float), nu)
            parts["loss_u"] = lu
            dlogits[off:off + nu] = config.lambda_u * dlu
        off += nu
    a1 = slice(off, off + na)
    a2 = slice(off + na, off + 2 * na)
    if use_contrastive and na >= 2:
        lcon, d1, d2 = ntxent_head(cache.features[a1], cache.features[a2], config.tau_con)
        parts["loss_con"] = lcon
        dfeat[a1] = config.lambda_c * d1
        dfeat[a2] = config.lambda_c * d2
    lreg, dreg = reg_head(cache.probs[a1])
    parts["loss_reg"] = lreg
    dlogits[a1] += config.lambda_r * dreg
    parts["total"] = total_dnn_loss(parts, config)
    parts["mask_rate"] = float(mask.mean()) if nu else 0.0
    return parts, backward(params, cache, dlogits=dlogits, dfeatures=dfeat)


def prompt_objective(aux: AuxModel, xl, yl, xu, iu, config: SslConfig, seed: int):
    """Total prompt objective (labeled + lambda_u * masked unlabeled). Returns ``(parts, grad)``."""
    lx, gx = loss_labeled_prompt(aux, xl, yl) if len(yl) else (0.0, np.zeros_like(aux.context))
    lu, gu = loss_unlabeled_prompt(aux, xu, config, seed, iu) if len(xu) else (0.0, np.zeros_like(aux.context))
    parts = {"loss_px": lx, "loss_pu": lu}
    parts["loss_p"] = total_prompt_loss(parts, config)
    return parts, gx + config.lambda_u * gu


__all__ = [
    "SslConfig", "ce_head", "pseudo_labels_from_probs", "ntxent_head", "reg_head", "loss_labeled_dnn",
    "loss_labeled_prompt", "pseudo_labels", "loss_unlabeled_dnn", "loss_unlabeled_prompt",
    "contrastive_loss", "reg_loss", "total_dnn_loss", "total_prompt_loss", "dnn_objective",
    "prompt_objective",
]
