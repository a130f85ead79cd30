import numpy as np
import pytest
from numpy.testing import assert_array_equal

from css_lnl.data import (Dataset, NoiseSpec, class_means, generate_dataset, generate_splits, inject_noise,
                          load_csv, save_csv, strong_augment, weak_augment)
from css_lnl.errors import ConfigError, ParameterError


def nearest_mean_accuracy(ds, means):
    d = ((ds.features[:, None, :] - means[None]) ** 2).sum(-1)
    return np.mean(d.argmin(1) == ds.true_labels)


def test_one_sample_per_class():
    ds = generate_dataset(2, 2, 1, 10.0, 7)
    assert len(ds) == 2
    assert set(ds.true_labels.tolist()) == {0, 1}
    assert_array_equal(ds.observed_labels, ds.true_labels)


def test_nearest_mean_oracle_on_separated_data():
    ds = generate_dataset(10, 8, 500, 6.0, 1)
    assert len(ds) == 5000
    means = class_means(10, 8, 6.0, 1)
    assert nearest_mean_accuracy(ds, means) > 0.95


def test_means_are_separated():
    means = class_means(10, 8, 3.0, 4)
    d = np.linalg.norm(means[:, None] - means[None], axis=-1)
    assert d[~np.eye(10, dtype=bool)].min() >= 3.0


def test_generation_is_deterministic():
    a = generate_dataset(4, 3, 20, 2.0, 5)
    b = generate_dataset(4, 3, 20, 2.0, 5)
    assert_array_equal(a.features, b.features)
    assert_array_equal(a.true_labels, b.true_labels)


def test_splits_share_means_but_not_samples():
    sp = generate_splits(3, 4, 30, 3.0, 0, 10, 5)
    assert {k: len(v) for k, v in sp.items()} == {"train": 90, "test": 30, "aux_pretrain": 15}
    assert not np.isin(sp["test"].features[:, 0], sp["train"].features[:, 0]).any()


@pytest.mark.parametrize("args", [(1, 2, 5, 1.0, 0), (3, 1, 5, 1.0, 0), (3, 2, 0, 1.0, 0), (3, 2, 5, 0.0, 0)])
def test_generate_rejects_bad_parameters(args):
    with pytest.raises(ParameterError):
        generate_dataset(*args)


def test_dataset_arrays_are_read_only():
    ds = generate_dataset(2, 2, 3, 1.0, 0)
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0


def test_test_split_cannot_be_corrupted():
    with pytest.raises(ParameterError):
        Dataset(np.zeros((2, 2)), np.array([0, 1]), np.array([1, 1]), "test", 2)


def test_zero_rate_is_identity():
    ds = generate_dataset(5, 3, 40, 2.0, 0)
    out = inject_noise(ds, NoiseSpec("symmetric", 0.0), 1)
    assert_array_equal(out.observed_labels, ds.observed_labels)


def test_symmetric_rate_matches_expectation():
    fracs = []
    for s in range(10):
        ds = generate_dataset(10, 2, 5000, 1.0, s)
        noisy = inject_noise(ds, NoiseSpec("symmetric", 0.9), 100 + s)
        fracs.append(np.mean(noisy.observed_labels != noisy.true_labels))
    assert abs(np.mean(fracs) - 0.81) < 0.01
    assert all(abs(f - 0.81) < 0.01 for f in fracs)


def test_asymmetric_single_flip():
    ds = generate_dataset(4, 2, 200, 2.0, 0)
    noisy = inject_noise(ds, NoiseSpec("asymmetric", 0.4, {0: 1}), 3)
    bad = noisy.observed_labels != noisy.true_labels
    assert bad.any()
    assert np.all(noisy.true_labels[bad] == 0)
    assert np.all(noisy.observed_labels[bad] == 1)


def test_noise_keeps_features_order_and_truth():
    ds = generate_dataset(4, 3, 50, 2.0, 0)
    noisy = inject_noise(ds, NoiseSpec("symmetric", 0.7), 9)
    assert_array_equal(noisy.features, ds.features)
    assert_array_equal(noisy.true_labels, ds.true_labels)


def test_noise_rejects_bad_specs():
    ds = generate_dataset(3, 2, 10, 2.0, 0)
    with pytest.raises(ConfigError):
        NoiseSpec("symmetric", 1.5)
    with pytest.raises(ConfigError):
        NoiseSpec("asymmetric", 0.2, {1: 1})
    with pytest.raises(ConfigError):
        inject_noise(ds, NoiseSpec("asymmetric", 0.2, {}), 0)
    with pytest.raises(ParameterError):
        inject_noise(generate_dataset(3, 2, 10, 2.0, 0, split="test"), NoiseSpec("symmetric", 0.2), 0)


def test_weak_augment_zero_sigma_is_identity():
    x = np.arange(6.0).reshape(2, 3)
    assert_array_equal(weak_augment(x, 0.0, 4, np.arange(2)), x)


def test_augment_seeds_differ():
    x = np.ones(5)
    assert not np.array_equal(weak_augment(x, 0.1, 1), weak_augment(x, 0.1, 2))


def test_strong_augment_drop_fraction():
    x = np.ones(10000)
    fracs = [np.mean(strong_augment(x, 0.5, 0.3, s) == 0.0) for s in range(10)]
    assert abs(np.mean(fracs) - 0.3) < 0.02


def test_augmentation_depends_only_on_sample_index():
    x = np.random.default_rng(0).normal(size=(6, 4))
    idx = np.arange(6)
    perm = np.array([3, 0, 5, 1, 4, 2])
    a = strong_augment(x, 0.5, 0.2, 11, idx)
    b = strong_augment(x[perm], 0.5, 0.2, 11, idx[perm])
    assert_array_equal(a[perm], b)


def test_csv_round_trip(tmp_path):
    ds = inject_noise(generate_dataset(3, 4, 5, 2.0, 0), NoiseSpec("symmetric", 0.5), 1)
    save_csv(ds, tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv", 3)
    assert_array_equal(back.features, ds.features)
    assert_array_equal(back.observed_labels, ds.observed_labels)
    assert_array_equal(back.true_labels, ds.true_labels)
