import json

import numpy as np
import pytest

from igsc.data import Dataset, SplitSet, build_dataset
from igsc.errors import UsageError, ValidationError
from igsc.evaluation import (
    EvalReport,
    calibration_sweep,
    evaluate_gzsl,
    evaluate_zsl,
    harmonic_mean,
    per_class_top1,
)


class TestPerClassTop1:
    def test_all_correct(self):
        assert per_class_top1([0, 1, 2], [0, 1, 2], [0, 1, 2]) == 1.0

    def test_macro_differs_from_micro(self):
        # class 0: one sample, correct; class 1: three samples, all wrong
        preds = [0, 0, 0, 0]
        truth = [0, 1, 1, 1]
        assert per_class_top1(preds, truth, [0, 1]) == pytest.approx(0.5)
        assert np.mean(np.array(preds) == np.array(truth)) == pytest.approx(0.25)

    def test_class_without_samples_excluded(self):
        preds = [0, 1]
        truth = [0, 1]
        assert per_class_top1(preds, truth, [0, 1, 7]) == 1.0

    def test_no_samples_at_all(self):
        with pytest.raises(UsageError):
            per_class_top1([0, 0], [5, 5], [1, 2])

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(0)
        truth = rng.integers(0, 5, 40)
        preds = rng.integers(0, 5, 40)
        base = per_class_top1(preds, truth, range(5))
        perm = rng.permutation(5)
        assert per_class_top1(perm[preds], perm[truth], perm) == pytest.approx(base, abs=1e-12)


class TestHarmonicMean:
    def test_reported_pair_one(self):
        assert harmonic_mean(0.849, 0.198) * 100 == pytest.approx(32.1, abs=0.05)

    def test_reported_pair_two(self):
        assert harmonic_mean(0.836, 0.257) * 100 == pytest.approx(39.3, abs=0.05)

    def test_equal_inputs(self):
        assert harmonic_mean(0.4, 0.4) == pytest.approx(0.4, abs=1e-12)

    def test_zero_input(self):
        assert harmonic_mean(0.0, 0.9) == 0.0
        assert harmonic_mean(0.0, 0.0) == 0.0

    def test_bounds(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            a, b = rng.uniform(1e-6, 1.0, 2)
            h = harmonic_mean(a, b)
            assert min(a, b) <= h + 1e-12
            assert h <= 2 * min(a, b) + 1e-12


class StubModel:
    """Scores looked up by sample id stored in feature column 0."""

    def __init__(self, table):
        self.table = np.asarray(table, dtype=np.float64)

    def score_matrix(self, features, prototypes):
        return self.table[np.asarray(features)[:, 0].astype(int)]


def stub_dataset():
    """2 seen + 2 unseen classes, 4 test samples per class; feature column
    0 is the sample id for the stub's lookup table."""
    n = 16
    features = np.zeros((n, 2), dtype=np.float32)
    features[:, 0] = np.arange(n)
    labels = np.repeat([0, 1, 2, 3], 4)
    prototypes = np.eye(4, 3, dtype=np.float32) + 0.1
    splits = SplitSet(
        train_idx=np.asarray([], dtype=np.int64),
        val_idx=np.asarray([], dtype=np.int64),
        test_seen_idx=np.arange(0, 8),
        test_unseen_idx=np.arange(8, 16),
    )
    return build_dataset(features, labels, prototypes, splits, [0, 1], [2, 3])


def stub_scores():
    """Known hit pattern, hand-enumerated below.

    Seen split (classes 0, 1): class 0 gets 3/4 right (sample 3 -> class 2);
    class 1 gets 2/4 right (samples 6, 7 -> class 0).
    Unseen split (classes 2, 3): class 2 gets 4/4; class 3 gets 1/4
    (samples 13, 14 -> class 0, sample 15 -> class 2).
    """
    rows = {
        0: [9, 0, 0, 0], 1: [9, 0, 0, 0], 2: [9, 0, 0, 0], 3: [0, 0, 9, 0],
        4: [0, 9, 0, 0], 5: [0, 9, 0, 0], 6: [9, 1, 0, 0], 7: [9, 1, 0, 0],
        8: [0, 0, 9, 0], 9: [0, 0, 9, 0], 10: [0, 0, 9, 0], 11: [0, 0, 9, 0],
        12: [0, 0, 0, 9], 13: [9, 0, 0, 1], 14: [9, 0, 0, 1], 15: [0, 0, 9, 1],
    }
    return np.array([rows[i] for i in range(16)], dtype=np.float64)


class TestEvaluateGzsl:
    def test_hand_computed_stub_report(self):
        ds = stub_dataset()
        report = evaluate_gzsl(StubModel(stub_scores()), ds, gamma=0.0)
        # per-class hits enumerated in stub_scores
        acc_s = (3 / 4 + 2 / 4) / 2
        acc_u = (4 / 4 + 1 / 4) / 2
        assert report.acc_s == pytest.approx(acc_s, abs=1e-12)
        assert report.acc_u == pytest.approx(acc_u, abs=1e-12)
        assert report.H == pytest.approx(2 * acc_s * acc_u / (acc_s + acc_u), abs=1e-12)

    def test_confusion_row_sums_are_class_counts(self):
        ds = stub_dataset()
        report = evaluate_gzsl(StubModel(stub_scores()), ds, gamma=0.0)
        assert np.array_equal(report.confusion.sum(axis=1), [4, 4, 4, 4])

    def test_gamma_zero_equals_plain_union_argmax(self):
        ds = stub_dataset()
        scores = stub_scores()
        report = evaluate_gzsl(StubModel(scores), ds, gamma=0.0)
        # direct recomputation: plain argmax over all four classes
        test_idx = np.concatenate([ds.splits.test_seen_idx, ds.splits.test_unseen_idx])
        preds = np.argmax(scores[test_idx], axis=1)
        truth = ds.labels[test_idx]
        for cls, acc in report.per_class_acc.items():
            mask = truth == cls
            assert acc == pytest.approx(float(np.mean(preds[mask] == cls)), abs=1e-12)

    def test_penalty_moves_predictions_to_unseen(self):
        ds = stub_dataset()
        report = evaluate_gzsl(StubModel(stub_scores()), ds, gamma=100.0)
        cols_hit = np.nonzero(report.confusion.sum(axis=0))[0]
        assert set(cols_hit.tolist()) <= {2, 3}

    def test_missing_split_rejected(self):
        ds = stub_dataset()
        import dataclasses

        crippled = dataclasses.replace(
            ds, splits=dataclasses.replace(ds.splits, test_unseen_idx=np.asarray([], dtype=np.int64))
        )
        with pytest.raises(UsageError):
            evaluate_gzsl(StubModel(stub_scores()), crippled, gamma=0.0)

    def test_report_determinism(self):
        ds = stub_dataset()
        a = evaluate_gzsl(StubModel(stub_scores()), ds, gamma=0.5)
        b = evaluate_gzsl(StubModel(stub_scores()), ds, gamma=0.5)
        assert a.as_dict() == b.as_dict()

    def test_report_json_round_trip(self):
        ds = stub_dataset()
        report = evaluate_gzsl(StubModel(stub_scores()), ds, gamma=0.25)
        payload = json.dumps(report.as_dict())
        restored = EvalReport.from_dict(json.loads(payload))
        assert restored.as_dict() == report.as_dict()


class TestEvaluateZsl:
    def test_perfect_stub(self):
        ds = stub_dataset()
        scores = np.zeros((16, 4))
        scores[np.arange(16), ds.labels] = 1.0
        assert evaluate_zsl(StubModel(scores), ds) == 1.0

    def test_fixed_class_stub(self):
        ds = stub_dataset()
        scores = np.zeros((16, 4))
        scores[:, 2] = 1.0  # always predicts unseen class 2
        assert evaluate_zsl(StubModel(scores), ds) == pytest.approx(0.5)

    def test_trained_synthetic_recovers_planted_labels(self, trained_synth):
        acc = evaluate_zsl(trained_synth.params, trained_synth.dataset)
        assert acc >= 0.90


class TestCalibrationSweep:
    def test_contains_gamma_zero_point_exactly(self, trained_synth):
        curve = calibration_sweep(trained_synth.params, trained_synth.dataset, [0.0, 0.5, 1.0])
        direct = evaluate_gzsl(trained_synth.params, trained_synth.dataset, gamma=0.0)
        assert curve.points[0][1].as_dict() == direct.as_dict()

    def test_monotone_accuracies(self, trained_synth):
        gammas = list(np.linspace(0.0, 30.0, 11))
        curve = calibration_sweep(trained_synth.params, trained_synth.dataset, gammas)
        acc_u = [r.acc_u for _, r in curve.points]
        acc_s = [r.acc_s for _, r in curve.points]
        assert all(b >= a - 1e-12 for a, b in zip(acc_u, acc_u[1:]))
        assert all(b <= a + 1e-12 for a, b in zip(acc_s, acc_s[1:]))

    def test_best_gamma_positive_when_seen_dominates(self, trained_synth):
        # brute force at 10x finer resolution as the oracle
        coarse = calibration_sweep(trained_synth.params, trained_synth.dataset,
                                   list(np.linspace(0.0, 20.0, 21)))
        fine = calibration_sweep(trained_synth.params, trained_synth.dataset,
                                 list(np.linspace(0.0, 20.0, 201)))
        h0 = coarse.points[0][1].H
        best_fine_h = max(r.H for _, r in fine.points)
        if best_fine_h > h0 + 1e-9:  # seen-class scores dominate at gamma 0
            assert coarse.best_gamma > 0.0
            best_coarse_h = max(r.H for _, r in coarse.points)
            assert best_coarse_h <= best_fine_h + 1e-12
            assert best_coarse_h >= 0.95 * best_fine_h

    def test_empty_grid_rejected(self, trained_synth):
        with pytest.raises(UsageError):
            calibration_sweep(trained_synth.params, trained_synth.dataset, [])

    def test_unsorted_grid_rejected(self, trained_synth):
        with pytest.raises(ValidationError):
            calibration_sweep(trained_synth.params, trained_synth.dataset, [0.0, 1.0, 0.5])
