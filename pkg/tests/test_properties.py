"""Property-based invariants."""
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from css_lnl.auxmodel import AuxModel, aux_predict
from css_lnl.data import NoiseSpec, generate_dataset, inject_noise, strong_augment
from css_lnl.losses import ntxent_head, pseudo_labels_from_probs, reg_head
from css_lnl.metrics import count_noisy_in_clean, roc_auc
from css_lnl.mixture import fit_gmm2, normalize_losses
from css_lnl.net import init_classifier, softmax
from css_lnl.selection import Partition, select
from css_lnl.selfcheck import brute_force_auc

finite = st.floats(-50, 50, allow_nan=False)
unit = st.floats(0, 1, allow_nan=False)


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 8)), elements=finite))
def test_softmax_normalized(logits):
    p = softmax(logits)
    assert np.all(p >= 0)
    assert np.allclose(p.sum(1), 1.0, atol=1e-9)


@given(st.integers(2, 60).flatmap(lambda n: st.tuples(
    arrays(np.float64, n, elements=st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.9, 1.0])),
    arrays(bool, n))))
def test_auc_equals_pairwise(case):
    scores, truth = case
    if truth.all() or not truth.any():
        return
    assert roc_auc(scores, truth).auc == brute_force_auc(scores, truth)


@given(arrays(np.float64, st.integers(1, 50), elements=st.floats(0, 1e3)))
def test_normalize_losses_range_and_order(v):
    out = normalize_losses(v)
    assert out.min() >= 0 and out.max() <= 1
    order = np.argsort(v, kind="stable")
    assert np.all(np.diff(out[order]) >= -1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(20, 200))
def test_em_likelihood_monotone_and_valid(seed, n):
    x = np.random.default_rng(seed).uniform(size=(n, 2))
    fit = fit_gmm2(x, max_iters=60, tol=0, seed=seed)
    assert np.diff(fit.log_likelihood).min() >= -1e-9
    assert abs(fit.weights.sum() - 1) < 1e-12
    assert all(np.linalg.eigvalsh(c).min() > 0 for c in fit.covs)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_epsilon_monotone(seed):
    x = np.random.default_rng(seed).uniform(size=(60, 2))
    a = select(x, epsilon=0.3, seed=seed)
    b = select(x, epsilon=0.7, seed=seed)
    assert set(b.clean_indices) <= set(a.clean_indices)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000), st.floats(0, 1), st.integers(2, 6))
def test_noise_never_touches_truth(seed, rate, classes):
    ds = generate_dataset(classes, 2, 10, 1.0, seed)
    out = inject_noise(ds, NoiseSpec("symmetric", rate), seed)
    assert np.array_equal(out.true_labels, ds.true_labels)
    assert np.array_equal(out.features, ds.features)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000), st.lists(st.integers(0, 29), unique=True, max_size=30), st.integers(0, 29))
def test_count_noisy_monotone(seed, idx, extra):
    ds = inject_noise(generate_dataset(3, 2, 10, 1.0, seed), NoiseSpec("symmetric", 0.5), seed)

    def part(ix):
        return Partition(np.array(ix, dtype=int), np.array([], dtype=int), np.ones(len(ix)), 0.5, "gmm2d")

    grown = sorted(set(idx) | {extra})
    assert count_noisy_in_clean(part(grown), ds) >= count_noisy_in_clean(part(idx), ds)


@given(arrays(np.float64, st.tuples(st.integers(1, 10), st.integers(2, 6)), elements=st.floats(0.01, 1)),
       st.floats(0.05, 1.0))
def test_pseudo_mask_rule(raw, delta):
    probs = raw / raw.sum(1, keepdims=True)
    labels, mask = pseudo_labels_from_probs(probs, delta)
    assert np.array_equal(mask, probs.max(1) > delta)
    assert np.array_equal(labels, probs.argmax(1))


@given(arrays(np.float64, st.tuples(st.integers(1, 10), st.integers(2, 6)), elements=st.floats(0.01, 1)))
def test_reg_nonnegative(raw):
    assert reg_head(raw / raw.sum(1, keepdims=True))[0] >= -1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 8))
def test_ntxent_finite_and_rotation_invariant(seed, n):
    rng = np.random.default_rng(seed)
    h1, h2 = rng.normal(size=(n, 4)), rng.normal(size=(n, 4))
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    a = ntxent_head(h1, h2, 0.5)[0]
    assert np.isfinite(a) and a >= 0
    assert abs(ntxent_head(h1 @ q, h2 @ q, 0.5)[0] - a) < 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 100))
def test_aux_valid_distribution_and_scale_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    aux = AuxModel(rng.normal(size=(4, 6)), rng.normal(size=(3, 6)), rng.normal(size=(2, 6)), 0.1)
    x = rng.normal(size=(5, 4))
    p = aux_predict(aux, x)
    assert np.allclose(p.sum(1), 1, atol=1e-9) and np.all(p >= 0)
    assert np.allclose(aux_predict(aux, scale * x), p, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_augmentation_is_per_index(seed):
    x = np.random.default_rng(seed).normal(size=(5, 3))
    full = strong_augment(x, 0.5, 0.2, seed, np.arange(5))
    for i in range(5):
        assert np.array_equal(full[i], strong_augment(x[i], 0.5, 0.2, seed, i))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_classifier_deterministic(seed):
    a = init_classifier(3, 2, 4, seed)
    b = init_classifier(3, 2, 4, seed)
    assert all(np.array_equal(a.weights[k], b.weights[k]) for k in a.weights)
