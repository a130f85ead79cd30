"""Two-hidden-layer tanh classifier with hand-written backprop and SGD with momentum.

Parameter names: ``f.W1, f.b1, f.W2, f.b2`` form the feature extractor, ``h.W`` (C x H)
and ``h.b`` the linear head.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergenceError, ShapeError

FEATURE_KEYS = ("f.W1", "f.b1", "f.W2", "f.b2")
HEAD_KEYS = ("h.W", "h.b")
PARAM_KEYS = FEATURE_KEYS + HEAD_KEYS
LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class ClassifierParams:
    weights: dict
    buffers: dict
    lr: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 5e-4

    @property
    def input_dim(self) -> int:
        return self.weights["f.W1"].shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights["f.W2"].shape[1]

    @property
    def class_count(self) -> int:
        return self.weights["h.W"].shape[0]

    def with_lr(self, lr: float) -> "ClassifierParams":
        return replace(self, lr=lr)

    def copy(self) -> "ClassifierParams":
        return replace(self, weights={k: v.copy() for k, v in self.weights.items()},
                       buffers={k: v.copy() for k, v in self.buffers.items()})


@dataclass
class Prediction:
    logits: np.ndarray
    probs: np.ndarray
    features: np.ndarray


@dataclass
class ForwardCache:
    x: np.ndarray
    a1: np.ndarray
    features: np.ndarray
    logits: np.ndarray = field(repr=False)
    probs: np.ndarray = field(repr=False)


def init_classifier(dim: int, class_count: int, hidden: int = 64, seed: int = 0,
                    lr: float = 0.02, momentum: float = 0.9, weight_decay: float = 5e-4) -> ClassifierParams:
    rng = np.random.default_rng([seed, 0x0C1A])

    def layer(fan_in, shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    w = {
        "f.W1": layer(dim, (dim, hidden)),
        "f.b1": layer(dim, (hidden,)),
        "f.W2": layer(hidden, (hidden, hidden)),
        "f.b2": layer(hidden, (hidden,)),
        "h.W": layer(hidden, (class_count, hidden)),
        "h.b": layer(hidden, (class_count,)),
    }
    return ClassifierParams(w, {k: np.zeros_like(v) for k, v in w.items()}, lr, momentum, weight_decay)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward_batch(params: ClassifierParams, x: np.ndarray) -> ForwardCache:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != params.input_dim:
        raise ShapeError(f"input has dimension {x.shape[1]}, classifier expects {params.input_dim}")
    w = params.weights
    a1 = np.tanh(x @ w["f.W1"] + w["f.b1"])
    feats = np.tanh(a1 @ w["f.W2"] + w["f.b2"])
    logits = feats @ w["h.W"].T + w["h.b"]
    return ForwardCache(x, a1, feats, logits, softmax(logits))


def forward(params: ClassifierParams, x) -> Prediction:
    x = np.asarray(x, dtype=np.float64)
    c = forward_batch(params, x)
    if x.ndim == 1:
        return Prediction(c.logits[0], c.probs[0], c.features[0])
    return Prediction(c.logits, c.probs, c.features)


def backward(params: ClassifierParams, cache: ForwardCache, dlogits=None, dfeatures=None) -> dict:
    """Gradients of a scalar loss given its partials w.r.t. logits and/or features."""
    w = params.weights
    grads = {}
    dfeat = np.zeros_like(cache.features) if dfeatures is None else np.array(dfeatures, copy=True)
    if dlogits is not None:
        grads["h.W"] = dlogits.T @ cache.features
        grads["h.b"] = dlogits.sum(axis=0)
        dfeat += dlogits @ w["h.W"]
    else:
        grads["h.W"] = np.zeros_like(w["h.W"])
        grads["h.b"] = np.zeros_like(w["h.b"])
    dz2 = dfeat * (1.0 - cache.features ** 2)
    grads["f.W2"] = cache.a1.T @ dz2
    grads["f.b2"] = dz2.sum(axis=0)
    dz1 = (dz2 @ w["f.W2"].T) * (1.0 - cache.a1 ** 2)
    grads["f.W1"] = cache.x.T @ dz1
    grads["f.b1"] = dz1.sum(axis=0)
    return grads


def add_grads(*parts: dict) -> dict:
    """Sum gradient dicts in the given order (fixed reduction order)."""
    out = {k: np.zeros_like(v) for k, v in parts[0].items()}
    for g in parts:
        for k, v in g.items():
            out[k] += v
    return out


def ce_loss(y, probs) -> float:
    """Cross-entropy -sum_c y_c log p_c for a class index or a soft target vector."""
    probs = np.asarray(probs, dtype=np.float64)
    logp = np.log(np.maximum(probs, LOG_FLOOR))
    if np.ndim(y) == 0:
        return float(-logp[int(y)])
    return float(-np.dot(np.asarray(y, dtype=np.float64), logp))


def backward_and_step(params: ClassifierParams, grads: dict) -> ClassifierParams:
    """v <- m v + g + wd theta; theta <- theta - lr v. Returns new params."""
    for k in PARAM_KEYS:
        g = grads.get(k)
        if g is None:
            raise ShapeError(f"missing gradient for parameter block {k}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient in parameter block {k}")
    new_w, new_b = {}, {}
    for k in PARAM_KEYS:
        theta = params.weights[k]
        v = params.momentum * params.buffers[k] + grads[k] + params.weight_decay * theta
        new_b[k] = v
        new_w[k] = theta - params.lr * v
        if not np.all(np.isfinite(new_w[k])):
            raise DivergenceError(f"parameter block {k} became non-finite after the update")
    return replace(params, weights=new_w, buffers=new_b)


def gradient_check(params, loss_fn, epsilon: float = 1e-5, n_probe: int = 40, seed: int = 0,
                   keys=None) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``loss_fn(weights) -> (loss, grads)`` where ``weights`` is a dict of arrays.
    Entries are sampled uniformly per parameter block; relative error uses
    ``|a - n| / max(|a| + |n|, 1e-6)``.
    """
    weights = params.weights if hasattr(params, "weights") else params
    rng = np.random.default_rng(seed)
    _, grads = loss_fn(weights)
    worst = 0.0
    for k in keys or list(grads):
        flat = weights[k].reshape(-1)
        picks = rng.choice(flat.size, size=min(n_probe, flat.size), replace=False)
        for j in picks:
            orig = flat[j]
            flat[j] = orig + epsilon
            lp, _ = loss_fn(weights)
            flat[j] = orig - epsilon
            lm, _ = loss_fn(weights)
            flat[j] = orig
            num = (lp - lm) / (2 * epsilon)
            ana = grads[k].reshape(-1)[j]
            worst = max(worst, abs(ana - num) / max(abs(ana) + abs(num), 1e-6))
    return worst


def save_checkpoint(params: ClassifierParams, path) -> None:
    arrays = {f"w/{k}": v for k, v in params.weights.items()}
    arrays.update({f"v/{k}": v for k, v in params.buffers.items()})
    arrays["hyper"] = np.array([params.lr, params.momentum, params.weight_decay])
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> ClassifierParams:
    with np.load(path) as z:
        w = {k[2:]: z[k] for k in z.files if k.startswith("w/")}
        b = {k[2:]: z[k] for k in z.files if k.startswith("v/")}
        lr, m, wd = (float(v) for v in z["hyper"])
    return ClassifierParams(w, b, lr, m, wd)
