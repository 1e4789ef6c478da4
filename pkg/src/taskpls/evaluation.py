"""ROC analysis, RMSE and difference maps."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import InsufficientDataError, InvalidParameterError, ShapeError
from .objects import H0, H1, LabeledEnsemble
from .observer import ObserverTemplate, test_statistic


@dataclass
class ScoreSet:
    absent_scores: np.ndarray
    present_scores: np.ndarray

    def __post_init__(self):
        self.absent_scores = np.asarray(self.absent_scores, dtype=np.float64).ravel()
        self.present_scores = np.asarray(self.present_scores, dtype=np.float64).ravel()
        if self.absent_scores.size == 0 or self.present_scores.size == 0:
            raise InsufficientDataError("both classes need at least one score")
        if not (np.all(np.isfinite(self.absent_scores)) and np.all(np.isfinite(self.present_scores))):
            raise InvalidParameterError("scores must be finite")


@dataclass
class RocResult:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    auc_std_err: float
    n_absent: int
    n_present: int

    @property
    def operating_points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "fpr", "tpr"])
            for t, x, y in zip(self.thresholds, self.fpr, self.tpr):
                writer.writerow([repr(float(t)), repr(float(x)), repr(float(y))])

    def summary(self) -> dict:
        return {
            "auc": self.auc,
            "auc_std_err": self.auc_std_err,
            "n_absent": self.n_absent,
            "n_present": self.n_present,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def mann_whitney_auc(absent, present) -> float:
    """Probability that a present score beats an absent one, ties counted 1/2."""
    absent = np.asarray(absent, dtype=np.float64)
    present = np.asarray(present, dtype=np.float64)
    n0, n1 = absent.size, present.size
    ranks = rankdata(np.concatenate([absent, present]))
    u = ranks[n0:].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n0 * n1))


def hanley_mcneil_se(auc: float, n_absent: int, n_present: int) -> float:
    q1 = auc / (2.0 - auc)
    q2 = 2.0 * auc * auc / (1.0 + auc)
    var = (
        auc * (1.0 - auc)
        + (n_present - 1) * (q1 - auc * auc)
        + (n_absent - 1) * (q2 - auc * auc)
    ) / (n_absent * n_present)
    return float(np.sqrt(max(var, 0.0)))


def roc_curve(scores: ScoreSet) -> RocResult:
    """Empirical ROC over every distinct threshold, H1 favoured by high scores.

    The first operating point (0, 0) corresponds to a threshold of +inf; each
    further point classifies scores ``>= threshold`` as signal-present.
    """
    a, p = scores.absent_scores, scores.present_scores
    thresholds = np.unique(np.concatenate([a, p]))[::-1]
    a_sorted = np.sort(a)
    p_sorted = np.sort(p)
    # count of scores >= threshold in each class
    fp = a.size - np.searchsorted(a_sorted, thresholds, side="left")
    tp = p.size - np.searchsorted(p_sorted, thresholds, side="left")
    fpr = np.concatenate([[0.0], fp / a.size])
    tpr = np.concatenate([[0.0], tp / p.size])
    auc = mann_whitney_auc(a, p)
    return RocResult(
        thresholds=np.concatenate([[np.inf], thresholds]),
        fpr=fpr,
        tpr=tpr,
        auc=auc,
        auc_std_err=hanley_mcneil_se(auc, a.size, p.size),
        n_absent=int(a.size),
        n_present=int(p.size),
    )


def trapezoid_auc(roc: RocResult) -> float:
    return float(np.trapezoid(roc.tpr, roc.fpr))


def _check_same(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shapes {a.shape} and {b.shape} differ")
    return a, b


def rmse(a, b) -> float:
    a, b = _check_same(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def difference_map(f_task, f_plain) -> np.ndarray:
    f_task, f_plain = _check_same(f_task, f_plain)
    return f_task - f_plain


def score_ensemble(ensemble: LabeledEnsemble, template: ObserverTemplate, images=None) -> ScoreSet:
    """Apply the template to each image (the noisy images unless given)."""
    images = ensemble.noisy if images is None else images
    t = test_statistic(template, images)
    return ScoreSet(t[ensemble.labels == H0], t[ensemble.labels == H1])


def evaluate_pipeline(
    ensemble: LabeledEnsemble,
    template: ObserverTemplate,
    denoise_config=None,
    batch_size: int = 16,
) -> RocResult:
    """ROC of the template on raw or denoised images of ``ensemble``."""
    from .denoiser import denoise_batch

    if denoise_config is None:
        return roc_curve(score_ensemble(ensemble, template))
    estimates = np.empty_like(ensemble.noisy)
    for start in range(0, len(ensemble), batch_size):
        chunk = ensemble.noisy[start:start + batch_size]
        estimates[start:start + batch_size] = denoise_batch(
            chunk, template, denoise_config, item_offset=start
        )[0]
    return roc_curve(score_ensemble(ensemble, template, estimates))
