"""Synthetic class-conditional Gaussian data, label noise and vector augmentations."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParameterError

SPLITS = ("train", "test", "aux_pretrain")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    observed_labels: np.ndarray
    true_labels: np.ndarray
    split: str
    class_count: int
    rng_seed: int = 0

    def __post_init__(self):
        n = len(self.features)
        if n < 1 or len(self.observed_labels) != n or len(self.true_labels) != n:
            raise ParameterError("features, observed_labels and true_labels must have equal length >= 1")
        if self.split not in SPLITS:
            raise ParameterError(f"unknown split {self.split!r}")
        for name in ("observed_labels", "true_labels"):
            lab = getattr(self, name)
            if lab.min() < 0 or lab.max() >= self.class_count:
                raise ParameterError(f"{name} outside [0, {self.class_count})")
        if self.split == "test" and not np.array_equal(self.observed_labels, self.true_labels):
            raise ParameterError("test labels must never be corrupted")
        for name in ("features", "observed_labels", "true_labels"):
            getattr(self, name).flags.writeable = False

    def __len__(self):
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def is_clean(self) -> np.ndarray:
        return self.observed_labels == self.true_labels


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "symmetric"
    rate: float = 0.0
    flip_map: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("symmetric", "asymmetric"):
            raise ConfigError(f"noise kind must be symmetric or asymmetric, got {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigError(f"noise rate must lie in [0, 1], got {self.rate}")
        for src, dst in self.flip_map.items():
            if src == dst:
                raise ConfigError(f"flip_map sends class {src} to itself")


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def uniform_stream(seed: int, index, slot: int, dim: int) -> np.ndarray:
    """Counter-based uniforms in [0, 1) keyed by (seed, sample index, slot, coordinate).

    ``index`` may be a scalar or a 1-d array; the result has shape ``(len(index), dim)``.
    Each sample's values depend only on its own index, so batching and ordering
    never change them.
    """
    idx = np.atleast_1d(np.asarray(index, dtype=np.int64)).astype(np.uint64)
    with np.errstate(over="ignore"):
        key = _mix64(np.uint64(seed & _MASK64) + _GOLDEN)
        row = _mix64(key ^ (idx * _GOLDEN + np.uint64(slot + 1)))
        cols = (np.arange(1, dim + 1, dtype=np.uint64) * _GOLDEN)
        h = _mix64(row[:, None] + cols[None, :])
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def normal_stream(seed: int, index, slot: int, dim: int) -> np.ndarray:
    u1 = 1.0 - uniform_stream(seed, index, 2 * slot, dim)
    u2 = uniform_stream(seed, index, 2 * slot + 1, dim)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def class_means(class_count: int, dim: int, separation: float, seed: int) -> np.ndarray:
    """Place class means on a sphere so every pair is at least ``separation`` apart."""
    if class_count < 2 or dim < 2:
        raise ParameterError("need class_count >= 2 and dim >= 2")
    if not separation > 0:
        raise ParameterError("separation must be positive")
    rng = np.random.default_rng([seed, 0xC1A55])
    radius = separation
    means = np.empty((class_count, dim))
    filled = 0
    attempts = 0
    while filled < class_count:
        v = rng.normal(size=dim)
        v *= radius / np.linalg.norm(v)
        if filled == 0 or np.min(np.linalg.norm(means[:filled] - v, axis=1)) >= separation:
            means[filled] = v
            filled += 1
            attempts = 0
            continue
        attempts += 1
        if attempts > 200:
            radius *= 1.05
            filled = 0
            attempts = 0
    return means


def sample_split(means: np.ndarray, per_class: int, split: str, seed: int) -> Dataset:
    if per_class < 1:
        raise ParameterError("per_class must be >= 1")
    c, d = means.shape
    rng = np.random.default_rng([seed, SPLITS.index(split) + 1])
    labels = np.repeat(np.arange(c), per_class)
    feats = means[labels] + rng.normal(size=(c * per_class, d))
    order = rng.permutation(len(labels))
    labels, feats = labels[order], feats[order]
    return Dataset(feats, labels.copy(), labels.copy(), split, c, seed)


def generate_dataset(class_count: int, dim: int, per_class: int, separation: float, seed: int,
                     split: str = "train") -> Dataset:
    means = class_means(class_count, dim, separation, seed)
    return sample_split(means, per_class, split, seed)


def generate_splits(class_count, dim, per_class, separation, seed, test_per_class, pretrain_per_class):
    """Train, test and auxiliary-pretraining draws that share class means but no samples."""
    means = class_means(class_count, dim, separation, seed)
    return {
        "train": sample_split(means, per_class, "train", seed),
        "test": sample_split(means, test_per_class, "test", seed),
        "aux_pretrain": sample_split(means, pretrain_per_class, "aux_pretrain", seed),
    }


def inject_noise(dataset: Dataset, spec: NoiseSpec, seed: int) -> Dataset:
    if dataset.split != "train":
        raise ParameterError(f"noise is only injected into the train split, got {dataset.split!r}")
    c = dataset.class_count
    if spec.kind == "asymmetric":
        if spec.rate > 0 and not spec.flip_map:
            raise ConfigError("asymmetric noise needs a flip_map with at least one class -> target entry")
        stray = sorted(k for k in spec.flip_map if not 0 <= k < c or not 0 <= spec.flip_map[k] < c)
        if stray:
            raise ConfigError(f"flip_map entries outside [0, {c}) for classes {stray}")
    n = len(dataset)
    rng = np.random.default_rng([seed, 0x7015E])
    n_corrupt = int(round(spec.rate * n))
    chosen = rng.choice(n, size=n_corrupt, replace=False)
    labels = np.array(dataset.observed_labels, copy=True)
    if spec.kind == "symmetric":
        labels[chosen] = rng.integers(0, c, size=n_corrupt)
    else:
        lut = np.array([spec.flip_map.get(k, k) for k in range(c)])
        labels[chosen] = lut[dataset.true_labels[chosen]]
    return replace(dataset, observed_labels=labels, true_labels=np.array(dataset.true_labels))


def weak_augment(x, sigma_w: float, seed: int, index=0) -> np.ndarray:
    """Isotropic Gaussian jitter. ``x`` may be one vector or a batch with matching ``index``."""
    x = np.asarray(x, dtype=np.float64)
    if sigma_w < 0:
        raise ParameterError("sigma_w must be non-negative")
    if sigma_w == 0:
        return x.copy()
    batch = np.atleast_2d(x)
    out = batch + sigma_w * normal_stream(seed, _indices(batch, index), 0, batch.shape[1])
    return out.reshape(x.shape)


def strong_augment(x, sigma_s: float, drop_prob: float, seed: int, index=0) -> np.ndarray:
    """Jitter of scale ``sigma_s`` followed by independent coordinate dropout."""
    x = np.asarray(x, dtype=np.float64)
    if sigma_s < 0:
        raise ParameterError("sigma_s must be non-negative")
    if not 0.0 <= drop_prob < 1.0:
        raise ParameterError("drop_prob must lie in [0, 1)")
    batch = np.atleast_2d(x)
    idx = _indices(batch, index)
    d = batch.shape[1]
    out = batch + sigma_s * normal_stream(seed, idx, 1, d)
    out[uniform_stream(seed, idx, 7, d) < drop_prob] = 0.0
    return out.reshape(x.shape)


def _indices(batch, index):
    idx = np.atleast_1d(np.asarray(index, dtype=np.int64))
    if len(idx) == 1 and len(batch) > 1:
        raise ParameterError("batched augmentation needs one index per row")
    if len(idx) != len(batch):
        raise ParameterError("index length does not match batch size")
    return idx


def save_csv(dataset: Dataset, path) -> None:
    d = dataset.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"feat_{j}" for j in range(d)] + ["y_obs", "y_true", "split"])
        for x, yo, yt in zip(dataset.features, dataset.observed_labels, dataset.true_labels):
            w.writerow([repr(float(v)) for v in x] + [int(yo), int(yt), dataset.split])


def load_csv(path, class_count: int | None = None) -> Dataset:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParameterError(f"{path}: empty file, header row is mandatory")
    header, body = rows[0], rows[1:]
    feat_cols = [h for h in header if h.startswith("feat_")]
    expected = [f"feat_{j}" for j in range(len(feat_cols))] + ["y_obs", "y_true", "split"]
    if header != expected:
        raise ParameterError(f"{path}: header {header} does not match {expected}")
    d = len(feat_cols)
    splits = {r[d + 2] for r in body}
    if len(splits) != 1:
        raise ParameterError(f"{path}: expected a single split, found {sorted(splits)}")
    feats = np.array([[float(v) for v in r[:d]] for r in body])
    yo = np.array([int(r[d]) for r in body])
    yt = np.array([int(r[d + 1]) for r in body])
    c = class_count if class_count is not None else int(max(yo.max(), yt.max())) + 1
    return Dataset(feats, yo, yt, splits.pop(), c)
