"""Evaluation protocol: per-class top-1 accuracy, seen/unseen accuracies
and their harmonic mean, confusion matrices over the union label space,
and calibration-factor sweeps.

Reports serialize to JSON as {"gamma", "acc_s", "acc_u", "H",
"per_class_acc", "confusion"} with accuracies as decimals in [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as model_mod
from .data import Dataset
from .errors import UsageError, ValidationError


def per_class_top1(predictions, truths, class_set) -> float:
    """Macro accuracy: mean over classes (with at least one sample) of the
    within-class hit rate. Robust to class imbalance."""
    preds = np.asarray(predictions, dtype=np.int64)
    truth = np.asarray(truths, dtype=np.int64)
    classes = np.asarray(sorted(int(c) for c in class_set), dtype=np.int64)
    if preds.shape != truth.shape:
        raise UsageError(f"predictions shape {preds.shape} != truths shape {truth.shape}")
    if classes.size == 0:
        raise UsageError("class_set is empty")
    rates = []
    for cls in classes:
        mask = truth == cls
        if mask.any():
            rates.append(float(np.mean(preds[mask] == cls)))
    if not rates:
        raise UsageError("no samples belong to any class in class_set")
    return float(np.mean(rates))


def harmonic_mean(acc_s: float, acc_u: float) -> float:
    """2ab / (a + b); zero when both accuracies are zero."""
    if acc_s + acc_u == 0.0:
        return 0.0
    return 2.0 * acc_s * acc_u / (acc_s + acc_u)


@dataclass(eq=False)
class EvalReport:
    gamma: float
    acc_s: float
    acc_u: float
    H: float
    per_class_acc: dict[int, float]
    confusion: np.ndarray  # (C, C) counts, rows = true class

    def as_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "acc_s": self.acc_s,
            "acc_u": self.acc_u,
            "H": self.H,
            "per_class_acc": {str(k): v for k, v in sorted(self.per_class_acc.items())},
            "confusion": self.confusion.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "EvalReport":
        return cls(
            gamma=float(raw["gamma"]),
            acc_s=float(raw["acc_s"]),
            acc_u=float(raw["acc_u"]),
            H=float(raw["H"]),
            per_class_acc={int(k): float(v) for k, v in raw["per_class_acc"].items()},
            confusion=np.asarray(raw["confusion"], dtype=np.int64),
        )


@dataclass(eq=False)
class SweepCurve:
    points: list[tuple[float, EvalReport]]
    best_gamma: float

    def as_dict(self) -> dict:
        return {
            "points": [report.as_dict() for _, report in self.points],
            "best_gamma": self.best_gamma,
        }


def _score_matrix(model, features, prototypes) -> np.ndarray:
    """Models are either trained generator params or any stub exposing
    score_matrix(features, prototypes) -> (n, C) raw scores."""
    if hasattr(model, "score_matrix"):
        return np.asarray(model.score_matrix(features, prototypes), dtype=np.float64)
    return model_mod.score_matrix(features, prototypes, model)


def _predict_gzsl_rows(scores: np.ndarray, candidates: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Row-wise argmax over the candidate classes of (score - offset);
    candidates are sorted so ties resolve to the lowest class id."""
    sub = scores[:, candidates] - offsets[candidates]
    return candidates[np.argmax(sub, axis=1)]


def _require_split(dataset: Dataset, name: str) -> np.ndarray:
    idx = getattr(dataset.splits, name)
    if idx.size == 0:
        raise UsageError(f"dataset has an empty {name} split")
    return idx


def _gzsl_report(dataset: Dataset, scores_seen, scores_unseen, gamma: float) -> EvalReport:
    union = np.asarray(
        sorted(int(c) for c in np.concatenate([dataset.seen_classes, dataset.unseen_classes])),
        dtype=np.int64,
    )
    offsets = np.zeros(dataset.n_classes)
    offsets[dataset.seen_classes] = gamma

    truth_seen = dataset.labels[dataset.splits.test_seen_idx]
    truth_unseen = dataset.labels[dataset.splits.test_unseen_idx]
    preds_seen = _predict_gzsl_rows(scores_seen, union, offsets)
    preds_unseen = _predict_gzsl_rows(scores_unseen, union, offsets)

    acc_s = per_class_top1(preds_seen, truth_seen, dataset.seen_classes)
    acc_u = per_class_top1(preds_unseen, truth_unseen, dataset.unseen_classes)

    c = dataset.n_classes
    confusion = np.zeros((c, c), dtype=np.int64)
    all_truth = np.concatenate([truth_seen, truth_unseen])
    all_preds = np.concatenate([preds_seen, preds_unseen])
    np.add.at(confusion, (all_truth, all_preds), 1)

    per_class = {}
    for cls in np.unique(all_truth):
        mask = all_truth == cls
        per_class[int(cls)] = float(np.mean(all_preds[mask] == cls))

    return EvalReport(
        gamma=float(gamma),
        acc_s=acc_s,
        acc_u=acc_u,
        H=harmonic_mean(acc_s, acc_u),
        per_class_acc=per_class,
        confusion=confusion,
    )


def evaluate_gzsl(model, dataset: Dataset, gamma: float = 0.0) -> EvalReport:
    """Generalized protocol: both test splits are predicted over the union
    of seen and unseen classes, with seen scores reduced by gamma."""
    seen_idx = _require_split(dataset, "test_seen_idx")
    unseen_idx = _require_split(dataset, "test_unseen_idx")
    scores_seen = _score_matrix(model, dataset.features[seen_idx], dataset.prototypes)
    scores_unseen = _score_matrix(model, dataset.features[unseen_idx], dataset.prototypes)
    return _gzsl_report(dataset, scores_seen, scores_unseen, gamma)


def evaluate_zsl(model, dataset: Dataset) -> float:
    """Conventional protocol: unseen test images, candidates restricted to
    the unseen classes; returns macro top-1 accuracy."""
    unseen_idx = _require_split(dataset, "test_unseen_idx")
    candidates = np.asarray(sorted(int(c) for c in dataset.unseen_classes), dtype=np.int64)
    if candidates.size == 0:
        raise UsageError("dataset has no unseen classes")
    scores = _score_matrix(model, dataset.features[unseen_idx], dataset.prototypes)
    preds = _predict_gzsl_rows(scores, candidates, np.zeros(dataset.n_classes))
    return per_class_top1(preds, dataset.labels[unseen_idx], candidates)


def calibration_sweep(model, dataset: Dataset, gammas) -> SweepCurve:
    """One GZSL report per calibration factor; scores are computed once.
    best_gamma maximizes H, ties resolved toward the smallest gamma."""
    gammas = [float(g) for g in gammas]
    if not gammas:
        raise UsageError("gamma grid is empty")
    if any(b <= a for a, b in zip(gammas, gammas[1:])):
        raise ValidationError("gamma grid must be strictly increasing")
    seen_idx = _require_split(dataset, "test_seen_idx")
    unseen_idx = _require_split(dataset, "test_unseen_idx")
    scores_seen = _score_matrix(model, dataset.features[seen_idx], dataset.prototypes)
    scores_unseen = _score_matrix(model, dataset.features[unseen_idx], dataset.prototypes)

    points = [(g, _gzsl_report(dataset, scores_seen, scores_unseen, g)) for g in gammas]
    best_gamma, best_h = points[0][0], points[0][1].H
    for g, report in points[1:]:
        if report.H > best_h:
            best_gamma, best_h = g, report.H
    return SweepCurve(points=points, best_gamma=best_gamma)
