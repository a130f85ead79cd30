"""Contrastive pretraining, warm-up and the alternating selection / co-training loop."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .auxmodel import AuxModel, build_aux, prompt_grad_step
from .config import RunConfig
from .data import Dataset, generate_splits, inject_noise, weak_augment
from .errors import DivergenceError, UndefinedAUCError
from .losses import ce_head, dnn_objective, ntxent_head, prompt_objective
from .metrics import EPOCH_COLUMNS, RocCurve, count_noisy_in_clean, final_accuracy, roc_auc, test_accuracy
from .net import FEATURE_KEYS, ClassifierParams, backward, backward_and_step, forward_batch, init_classifier
from .selection import Partition, compute_scores, select

log = logging.getLogger(__name__)

PRETRAIN, WARMUP, MAIN = 1, 2, 3


@dataclass
class EpochReport:
    epoch: int
    N1: int
    N2: int
    auc: float
    n_err_in_C: int
    loss_x: float
    loss_u: float
    loss_con: float
    loss_reg: float
    loss_p: float
    test_acc: float
    seconds: float
    loss_px: float = 0.0
    loss_pu: float = 0.0
    mask_rate: float = 0.0
    lr: float = 0.0

    @property
    def test_error(self) -> float:
        return 1.0 - self.test_acc

    def row(self) -> list:
        return [getattr(self, c) for c in EPOCH_COLUMNS]


@dataclass
class TrainState:
    train: Dataset
    test: Dataset
    classifier: ClassifierParams
    aux: AuxModel | None


@dataclass
class ExperimentResult:
    config: RunConfig
    reports: list
    summary: dict
    roc_curves: dict = field(default_factory=dict)
    state: TrainState | None = None
    partitions: dict = field(default_factory=dict)


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts]).generate_state(1)[0])


def _check_finite(value: float, stage: str, epoch: int, step: int) -> None:
    if not math.isfinite(value):
        raise DivergenceError(f"non-finite loss during {stage} (epoch {epoch}, batch {step})")


def _step_features_only(params: ClassifierParams, grads: dict) -> ClassifierParams:
    """SGD-momentum update of the feature extractor; head weights and buffers stay untouched."""
    w, b = dict(params.weights), dict(params.buffers)
    for k in FEATURE_KEYS:
        if not np.all(np.isfinite(grads[k])):
            raise DivergenceError(f"non-finite gradient in parameter block {k}")
        b[k] = params.momentum * params.buffers[k] + grads[k] + params.weight_decay * params.weights[k]
        w[k] = params.weights[k] - params.lr * b[k]
    return replace(params, weights=w, buffers=b)


def pretrain_contrastive(dataset: Dataset, classifier: ClassifierParams, config: RunConfig):
    """Update the feature extractor with the contrastive loss alone. Returns (params, per-epoch losses)."""
    trace = []
    n = len(dataset)
    bs = config.batch_size
    for epoch in range(config.epochs_pretrain):
        rng = np.random.default_rng([config.seed, PRETRAIN, epoch])
        order = rng.permutation(n)
        total, count = 0.0, 0
        for step, start in enumerate(range(0, n, bs)):
            idx = order[start:start + bs]
            if len(idx) < 2:
                continue
            x = dataset.features[idx]
            s = derive_seed(config.seed, PRETRAIN, epoch, step)
            v1 = weak_augment(x, config.sigma_w, s, idx)
            v2 = weak_augment(x, config.sigma_w, s + 1, idx)
            cache = forward_batch(classifier, np.concatenate([v1, v2]))
            m = len(idx)
            loss, d1, d2 = ntxent_head(cache.features[:m], cache.features[m:], config.tau_con)
            _check_finite(loss, "contrastive pretraining", epoch, step)
            grads = backward(classifier, cache, dfeatures=np.concatenate([d1, d2]))
            classifier = _step_features_only(classifier, grads)
            total += loss
            count += 1
        trace.append(total / max(count, 1))
    return classifier, trace


def warm_up(dataset: Dataset, classifier: ClassifierParams, config: RunConfig):
    """Plain cross-entropy on the observed (noisy) labels. Returns (params, per-epoch losses)."""
    trace = []
    n = len(dataset)
    bs = config.batch_size
    y = dataset.observed_labels
    for epoch in range(config.epochs_warmup):
        rng = np.random.default_rng([config.seed, WARMUP, epoch])
        order = rng.permutation(n)
        total, count = 0.0, 0
        for step, start in enumerate(range(0, n, bs)):
            idx = order[start:start + bs]
            s = derive_seed(config.seed, WARMUP, epoch, step)
            cache = forward_batch(classifier, weak_augment(dataset.features[idx], config.sigma_w, s, idx))
            loss, dlog = ce_head(cache.probs, y[idx])
            _check_finite(loss, "warm-up", epoch, step)
            classifier = backward_and_step(classifier, backward(classifier, cache, dlogits=dlog))
            total += loss
            count += 1
        trace.append(total / max(count, 1))
    return classifier, trace


def lr_at(config: RunConfig, epoch: int) -> float:
    """Learning rate for 1-based main epoch ``epoch``: divided once the decay epoch is passed."""
    if config.lr_decay_epoch and epoch > config.lr_decay_epoch:
        return config.lr / config.lr_decay_factor
    return config.lr


def _cycle(indices: np.ndarray, rng, count: int) -> np.ndarray:
    """``count`` indices drawn by cycling through fresh permutations of ``indices``."""
    if len(indices) == 0:
        return np.empty(0, dtype=np.int64)
    reps = -(-count // len(indices))
    return np.concatenate([rng.permutation(indices) for _ in range(reps)])[:count]


def selection_auc(partition: Partition, dataset: Dataset) -> tuple[float, RocCurve | None]:
    try:
        curve = roc_auc(partition.clean_posteriors, dataset.is_clean)
    except UndefinedAUCError:
        return float("nan"), None
    return curve.auc, curve


def run_epoch(state: TrainState, config: RunConfig, epoch: int):
    """One round of selection followed by a pass of co-training. ``epoch`` is 1-based.

    Returns ``(state, report, partition, roc_curve)``. Hidden true labels are only
    read after training for the report.
    """
    t0 = time.perf_counter()
    ssl = config.ssl
    train = state.train
    classifier = state.classifier.with_lr(lr_at(config, epoch))
    aux = state.aux

    scores = compute_scores(train, classifier, aux if config.uses_aux else None)
    partition = select(scores, config.scheme, config.epsilon, derive_seed(config.seed, MAIN, epoch, 0),
                       config.beta, config.gmm_max_iters, config.gmm_tol, config.shared_covariance)

    rng = np.random.default_rng([config.seed, MAIN, epoch])
    bs = config.batch_size
    n = len(train)
    steps = max(1, -(-n // (2 * bs)))
    lab = _cycle(partition.clean_indices, rng, steps * bs)
    unl = _cycle(partition.noisy_indices, rng, steps * bs)
    x, y = train.features, train.observed_labels
    sums = dict.fromkeys(("loss_x", "loss_u", "loss_con", "loss_reg", "loss_px", "loss_pu", "loss_p",
                          "mask_rate"), 0.0)
    tune_prompt = config.uses_aux and config.prompt_tuning and aux is not None and not aux.frozen
    for step in range(steps):
        il = lab[step * bs:(step + 1) * bs]
        iu = unl[step * bs:(step + 1) * bs]
        s = derive_seed(config.seed, MAIN, epoch, step + 1)
        parts, grads = dnn_objective(classifier, x[il], y[il], il, x[iu], iu, ssl, s, config.use_contrastive)
        _check_finite(parts["total"], "co-training", epoch, step)
        classifier = backward_and_step(classifier, grads)
        if tune_prompt:
            pparts, pgrad = prompt_objective(aux, x[il], y[il], x[iu], iu, ssl, s + 303)
            _check_finite(pparts["loss_p"], "prompt tuning", epoch, step)
            aux = prompt_grad_step(aux, pgrad, config.prompt_lr)
            parts.update(pparts)
        for k in sums:
            sums[k] += parts.get(k, 0.0)

    new_state = replace(state, classifier=classifier, aux=aux)
    # diagnostics: the only place true labels are read
    auc, curve = selection_auc(partition, train)
    report = EpochReport(
        epoch=epoch, N1=partition.n_clean, N2=partition.n_noisy, auc=auc,
        n_err_in_C=count_noisy_in_clean(partition, train),
        test_acc=test_accuracy(classifier, state.test),
        seconds=time.perf_counter() - t0 if config.record_seconds else 0.0, lr=classifier.lr,
        **{k: v / steps for k, v in sums.items()},
    )
    return new_state, report, partition, curve


def prepare(config: RunConfig):
    """Generate the splits, corrupt the training labels and build both models."""
    pre_per_class = max(1, int(round(config.per_class * config.pretrain_fraction)))
    splits = generate_splits(config.class_count, config.dim, config.per_class, config.separation, config.seed,
                             config.test_per_class, pre_per_class)
    train = inject_noise(splits["train"], config.noise, derive_seed(config.seed, 0xBAD))
    aux = None
    if config.uses_aux:
        aux = build_aux(splits["aux_pretrain"], config.embed_dim, config.tau, config.context_count,
                        config.aux_quality, config.seed)
        if not config.prompt_tuning:
            aux = replace(aux, frozen=True)
    classifier = init_classifier(config.dim, config.class_count, config.hidden, config.seed,
                                 config.lr, config.momentum, config.weight_decay)
    return TrainState(train, splits["test"], classifier, aux)


def train_loop(state: TrainState, config: RunConfig, on_epoch=None) -> ExperimentResult:
    """Pretrain, warm up and run the main loop from a prepared state."""
    t0 = time.perf_counter()
    classifier, pre_trace = pretrain_contrastive(state.train, state.classifier, config)
    classifier, warm_trace = warm_up(state.train, classifier, config)
    state = replace(state, classifier=classifier)
    reports, curves, partitions = [], {}, {}
    for epoch in range(1, config.epochs_main + 1):
        state, report, partition, curve = run_epoch(state, config, epoch)
        reports.append(report)
        if epoch in config.roc_epochs and curve is not None:
            curves[epoch] = curve
        if config.dump_partitions:
            partitions[epoch] = partition
        log.info("epoch %d: N1=%d N_err_in_C=%d auc=%.4f test_acc=%.4f", epoch, report.N1, report.n_err_in_C,
                 report.auc, report.test_acc)
        if on_epoch is not None:
            on_epoch(report)
    summary = summarize(config, reports, pre_trace, warm_trace, time.perf_counter() - t0)
    return ExperimentResult(config, reports, summary, curves, state, partitions)


def summarize(config: RunConfig, reports, pretrain_trace, warmup_trace, seconds) -> dict:
    last = reports[-1] if reports else None
    return {
        "config": config.to_dict(),
        "seed": config.seed,
        "scheme": config.scheme,
        "epochs_main": config.epochs_main,
        "final_test_acc": final_accuracy(reports, config.final_window) if reports else None,
        "final_test_error": 1.0 - final_accuracy(reports, config.final_window) if reports else None,
        "last_test_acc": last.test_acc if last else None,
        "last_n_err_in_C": last.n_err_in_C if last else None,
        "last_auc": last.auc if last else None,
        "pretrain_loss": pretrain_trace,
        "warmup_loss": warmup_trace,
    }


def run_experiment(config: RunConfig, on_epoch=None) -> ExperimentResult:
    """Seeded end-to-end run: data, noise, auxiliary scorer, pretraining, warm-up, main loop."""
    return train_loop(prepare(config), config, on_epoch)


def err_slope(reports, first: int = 5, last: int = 30) -> float:
    """Least-squares slope of N_err_in_C against epoch over ``[first, last]``."""
    pts = [(r.epoch, r.n_err_in_C) for r in reports if first <= r.epoch <= last]
    if len(pts) < 2:
        return float("nan")
    e, v = np.array(pts, dtype=float).T
    return float(np.polyfit(e, v, 1)[0])
