"""Fast invariant checks shared by the ``selfcheck`` command and the test suite."""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, replace

import numpy as np

from .auxmodel import build_aux
from .data import NoiseSpec, generate_dataset, inject_noise
from .losses import (SslConfig, contrastive_loss, dnn_objective, loss_labeled_dnn, loss_labeled_prompt,
                     loss_unlabeled_dnn, loss_unlabeled_prompt, reg_loss)
from .metrics import roc_auc
from .mixture import fit_gmm2
from .net import gradient_check, init_classifier


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


# -- EM ---------------------------------------------------------------------

def sample_mixture(n: int, weights, means, covs, seed: int):
    """Draw ``n`` points from a 2-component mixture; returns (x, component labels)."""
    rng = np.random.default_rng(seed)
    z = (rng.uniform(size=n) >= weights[0]).astype(int)
    x = np.empty((n, len(means[0])))
    for k in range(2):
        idx = np.flatnonzero(z == k)
        x[idx] = rng.multivariate_normal(means[k], covs[k], size=len(idx))
    return x, z


TRUE_WEIGHTS = np.array([0.3, 0.7])
TRUE_MEANS = np.array([[0.2, 0.7], [0.7, 0.2]])
TRUE_COVS = np.array([[[0.010, 0.002], [0.002, 0.015]], [[0.020, -0.004], [-0.004, 0.010]]])


def em_recovery(seed: int, n: int = 5000, shared: bool = False):
    """Fit a known mixture. Returns (mean error, weight error, worst LL decrease, seconds)."""
    x, _ = sample_mixture(n, TRUE_WEIGHTS, TRUE_MEANS, TRUE_COVS, seed)
    t0 = time.perf_counter()
    fit = fit_gmm2(x, max_iters=500, tol=1e-10, seed=seed, shared_covariance=shared)
    secs = time.perf_counter() - t0
    order = np.argsort(fit.means[:, 0])
    mean_err = float(np.abs(fit.means[order] - TRUE_MEANS).max())
    weight_err = float(np.abs(fit.weights[order] - TRUE_WEIGHTS).max())
    ll = np.asarray(fit.log_likelihood)
    worst_drop = float(max(0.0, -(np.diff(ll).min()))) if len(ll) > 1 else 0.0
    return mean_err, weight_err, worst_drop, secs


def check_em(seeds=range(5)) -> CheckResult:
    t0 = time.perf_counter()
    rows = [em_recovery(s) for s in seeds]
    ok = all(m <= 0.05 and w <= 0.05 and d <= 1e-9 and t < 2.0 for m, w, d, t in rows)
    worst = np.max(np.array(rows), axis=0)
    detail = (f"max mean err {worst[0]:.4f}, max weight err {worst[1]:.4f}, "
              f"max LL drop {worst[2]:.2e}, slowest fit {worst[3]:.2f}s over {len(rows)} seeds")
    return CheckResult("em_monotonicity", ok, detail, time.perf_counter() - t0)


# -- gradients ----------------------------------------------------------------

def _gradient_fixture(seed: int, n: int = 12, dim: int = 6, classes: int = 4, hidden: int = 10):
    data = generate_dataset(classes, dim, 8, 2.0, seed)
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(data), size=n, replace=False)
    x, y = data.features[idx], data.observed_labels[idx]
    params = init_classifier(dim, classes, hidden, seed)
    # larger weights make confident predictions so the masked losses are active
    params = replace(params, weights={k: v * 3.0 for k, v in params.weights.items()})
    aux = build_aux(data, embed_dim=12, tau=0.2, M=3, aux_quality=0.9, seed=seed)
    aux = replace(aux, context=rng.normal(scale=0.1, size=aux.context.shape))
    return params, aux, x, y, idx


def _classifier_fn(params, fn):
    def loss_fn(weights):
        return fn(replace(params, weights=weights))
    return loss_fn


def _context_check(aux, fn, epsilon=1e-6, seed=0):
    def loss_fn(weights):
        loss, grad = fn(replace(aux, context=weights["V"]))
        return loss, {"V": grad}
    return gradient_check({"V": aux.context.copy()}, loss_fn, epsilon=epsilon, seed=seed)


def gradient_errors(seed: int) -> dict:
    """Worst relative error per loss term at one random initialization."""
    params, aux, x, y, idx = _gradient_fixture(seed)
    cfg = SslConfig(delta=0.3)
    half = len(x) // 2
    errs = {
        "labeled_dnn": gradient_check(params, _classifier_fn(params, lambda p: loss_labeled_dnn(p, x, y, cfg, seed, idx)),
                                      seed=seed),
        "labeled_prompt": _context_check(aux, lambda a: loss_labeled_prompt(a, x, y), seed=seed),
        "unlabeled_dnn": gradient_check(params, _classifier_fn(params, lambda p: loss_unlabeled_dnn(p, x, cfg, seed, idx)),
                                        seed=seed),
        "unlabeled_prompt": _context_check(aux, lambda a: loss_unlabeled_prompt(a, x, replace(cfg, delta=0.1), seed, idx),
                                           seed=seed),
        "contrastive": gradient_check(params, _classifier_fn(params, lambda p: contrastive_loss(p, x, cfg, seed, idx)),
                                      seed=seed),
        "regularizer": gradient_check(params, _classifier_fn(params, lambda p: reg_loss(p, x, cfg)), seed=seed),
        "total_dnn": gradient_check(params, _classifier_fn(
            params, lambda p: _total(dnn_objective(p, x[:half], y[:half], idx[:half], x[half:], idx[half:], cfg, seed))),
            seed=seed),
    }
    return errs


def _total(out):
    parts, grads = out
    return parts["total"], grads


def check_gradients(seeds=(0, 1, 2), tol: float = 1e-4) -> CheckResult:
    t0 = time.perf_counter()
    worst = {}
    for s in seeds:
        for k, v in gradient_errors(s).items():
            worst[k] = max(worst.get(k, 0.0), v)
    top = max(worst, key=worst.get)
    ok = worst[top] < tol
    detail = f"max relative error {worst[top]:.2e} ({top}) over {len(worst)} losses x {len(seeds)} inits"
    return CheckResult("gradient_fidelity", ok, detail, time.perf_counter() - t0)


# -- AUC -----------------------------------------------------------------------

def brute_force_auc(scores, truth) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    pos, neg = scores[truth], scores[~truth]
    total = 0.0
    for p, q in itertools.product(pos, neg):
        total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def random_auc_instance(seed: int):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 201))
    truth = rng.uniform(size=n) < rng.uniform(0.1, 0.9)
    truth[0], truth[-1] = True, False
    # coarse rounding on some instances forces ties
    scores = rng.uniform(size=n) + 0.5 * truth
    if seed % 2:
        scores = np.round(scores, 1)
    return scores, truth


def check_auc(instances: int = 50) -> CheckResult:
    t0 = time.perf_counter()
    mismatches = 0
    for s in range(instances):
        scores, truth = random_auc_instance(s)
        if roc_auc(scores, truth).auc != brute_force_auc(scores, truth):
            mismatches += 1
    return CheckResult("auc_oracle", mismatches == 0, f"{mismatches} mismatches in {instances} instances",
                       time.perf_counter() - t0)


# -- noise injection ------------------------------------------------------------

def noise_fraction(rate: float, classes: int, seed: int, per_class: int = 500) -> float:
    data = generate_dataset(classes, 4, per_class, 2.0, seed)
    noisy = inject_noise(data, NoiseSpec("symmetric", rate), seed + 1000)
    return float(np.mean(noisy.observed_labels != noisy.true_labels))


def check_noise(rate: float = 0.6, classes: int = 10, seeds=range(10), per_class: int = 500) -> CheckResult:
    t0 = time.perf_counter()
    n = classes * per_class
    expected = rate * (classes - 1) / classes
    sigma = np.sqrt(expected * (1 - expected) / n)
    fracs = [noise_fraction(rate, classes, s, per_class) for s in seeds]
    sym_ok = all(abs(f - expected) <= 3 * sigma for f in fracs)
    flip = {c: (c + 1) % classes for c in range(classes) if c % 2 == 0}
    asym_ok = True
    for s in seeds:
        data = generate_dataset(classes, 4, 50, 2.0, s)
        noisy = inject_noise(data, NoiseSpec("asymmetric", 0.5, flip), s + 2000)
        bad = noisy.observed_labels != noisy.true_labels
        allowed = np.array([flip.get(int(t), -1) for t in noisy.true_labels[bad]])
        asym_ok &= bool(np.all(noisy.observed_labels[bad] == allowed))
    worst = max(abs(f - expected) for f in fracs) / sigma
    detail = f"symmetric worst deviation {worst:.2f} sigma; asymmetric flips {'on' if asym_ok else 'OFF'} flip_map"
    return CheckResult("noise_statistics", sym_ok and asym_ok, detail, time.perf_counter() - t0)


CHECKS = {"em": check_em, "gradients": check_gradients, "auc": check_auc, "noise": check_noise}


def run_all(names=None) -> list[CheckResult]:
    return [CHECKS[n]() for n in (names or CHECKS)]
