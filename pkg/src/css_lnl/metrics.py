"""Selection-quality and generalization diagnostics plus report emission."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .data import Dataset
from .errors import ParameterError, UndefinedAUCError
from .net import forward_batch

EPOCH_COLUMNS = ("epoch", "N1", "N2", "auc", "n_err_in_C", "loss_x", "loss_u", "loss_con", "loss_reg",
                 "loss_p", "test_acc", "seconds")
ROC_COLUMNS = ("threshold", "fpr", "tpr")


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def roc_auc(scores, truth) -> RocCurve:
    """ROC over every distinct score and the midrank (Mann-Whitney) AUC.

    The first point is (threshold=+inf, fpr=0, tpr=0); ties between a clean and a
    noisy sample count one half.
    """
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(truth).astype(bool)
    if s.shape != t.shape or s.ndim != 1 or len(s) < 2:
        raise ParameterError("scores and truth must be 1-d and of equal length >= 2")
    n_pos = int(t.sum())
    n_neg = len(t) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("AUC is undefined when truth contains a single class")
    ranks = rankdata(s)
    auc = (ranks[t].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    order = np.argsort(-s, kind="stable")
    s_sorted, t_sorted = s[order], t[order]
    tp = np.cumsum(t_sorted)
    fp = np.cumsum(~t_sorted)
    last_of_run = np.r_[s_sorted[1:] != s_sorted[:-1], True]
    thresholds = np.r_[np.inf, s_sorted[last_of_run]]
    tpr = np.r_[0.0, tp[last_of_run] / n_pos]
    fpr = np.r_[0.0, fp[last_of_run] / n_neg]
    return RocCurve(thresholds, fpr, tpr, float(auc))


def trapezoid_area(fpr, tpr) -> float:
    fpr, tpr = np.asarray(fpr), np.asarray(tpr)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def count_noisy_in_clean(partition, dataset: Dataset) -> int:
    idx = np.asarray(partition.clean_indices, dtype=np.int64)
    if idx.size == 0:
        return 0
    return int(np.sum(dataset.observed_labels[idx] != dataset.true_labels[idx]))


def test_accuracy(classifier, test: Dataset) -> float:
    if test is None or len(test.features) == 0:
        raise ParameterError("test accuracy needs a non-empty test split")
    pred = np.argmax(forward_batch(classifier, test.features).probs, axis=1)
    return float(np.mean(pred == test.true_labels))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.6g}"


def _open_for_write(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write report file {path}: {exc.strerror or exc}") from exc


def write_epochs_csv(reports, path) -> Path:
    path = Path(path)
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPOCH_COLUMNS)
        for r in reports:
            w.writerow([_fmt(v) for v in r.row()])
    return path


def write_roc_csv(curve: RocCurve, path) -> Path:
    path = Path(path)
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROC_COLUMNS)
        for row in zip(curve.thresholds, curve.fpr, curve.tpr):
            w.writerow([_fmt(v) for v in row])
    return path


def write_summary(summary: dict, path) -> Path:
    path = Path(path)
    with _open_for_write(path) as fh:
        json.dump(summary, fh, indent=2, sort_keys=False)
        fh.write("\n")
    return path


def emit(reports, out_dir, summary: dict | None = None, roc_curves: dict | None = None) -> dict:
    """Write ``epochs.csv``, ``roc_epoch_<k>.csv`` and ``summary.json`` under ``out_dir``."""
    out = Path(out_dir)
    paths = {"epochs": write_epochs_csv(reports, out / "epochs.csv")}
    for epoch, curve in sorted((roc_curves or {}).items()):
        paths[f"roc_{epoch}"] = write_roc_csv(curve, out / f"roc_epoch_{epoch}.csv")
    if summary is not None:
        paths["summary"] = write_summary(summary, out / "summary.json")
    return paths


def read_epochs_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: float(v) for k, v in r.items()} for r in rows]


def final_accuracy(reports, window: int = 10) -> float:
    accs = [r.test_acc for r in reports][-window:]
    return float(np.mean(accs)) if accs else float("nan")

