"""Folds, AUC and the cross-validation report."""

import numpy as np
import pandas as pd
import pytest

from app.models.schemas import EvaluationScheme, ExperimentConfig
from app.services.evaluation import auc, make_folds, run_cv, write_report


def config(tmp_path, **overrides) -> ExperimentConfig:
    return ExperimentConfig(task="classify", dataset=tmp_path, seed=5, **overrides)


def memorizer(labels: np.ndarray):
    """A fit-predict stub that returns the true class of every test point."""
    return lambda train, test, rng: (labels[test] > 0).astype(float)


def test_auc_examples():
    """Test the Mann-Whitney AUC, ties and the single-class case."""
    labels = np.array([-1, -1, 1, 1])
    assert auc(np.array([0.1, 0.4, 0.35, 0.8]), labels) == 0.75
    assert auc(np.full(4, 0.3), labels) == 0.5
    assert auc(np.array([0.2, 0.9, 0.1, 0.3]), labels) == 0.25
    assert np.isnan(auc(np.array([0.1, 0.2]), np.array([1, 1])))


def test_split_folds_are_stratified():
    """Test each shuffle split keeps the class ratio and partitions the indices."""
    labels = np.r_[-np.ones(12), np.ones(12)]
    folds = make_folds(labels, EvaluationScheme.SPLIT, np.random.default_rng(0), test_fraction=0.25, replicates=3)
    assert len(folds) == 3
    for fold in folds:
        assert fold.test.size == 6
        assert (labels[fold.test] == 1).sum() == 3
        assert np.array_equal(np.sort(np.r_[fold.train, fold.test]), np.arange(24))


def test_kfold_and_loocv_folds():
    """Test k-fold test sets partition each replicate and leave-one-out has m folds."""
    labels = np.r_[-np.ones(8), np.ones(8)]
    folds = make_folds(labels, EvaluationScheme.KFOLD, np.random.default_rng(1), folds=4, replicates=2)
    assert len(folds) == 8
    for r in (0, 1):
        tests = np.concatenate([f.test for f in folds if f.replicate == r])
        assert np.array_equal(np.sort(tests), np.arange(16))

    loo = make_folds(labels, EvaluationScheme.LOOCV, np.random.default_rng(2), replicates=5)
    assert len(loo) == 16
    assert all(f.test.size == 1 and f.replicate == 0 for f in loo)


def test_memorizing_classifier_scores_perfectly(tmp_path):
    """Test a stub that returns the truth gets accuracy and AUC of one."""
    labels = np.r_[-np.ones(10), np.ones(10)]
    report = run_cv(config(tmp_path, replicates=3), labels, memorizer(labels))
    assert report.mean_accuracy == 1.0 and report.sd_accuracy == 0.0
    assert report.mean_auc == 1.0
    assert len(report.replicates) == 3
    assert all(r.tp + r.tn == r.n_test for r in report.replicates)


def test_loocv_pools_auc(tmp_path):
    """Test leave-one-out reports one pooled AUC from all held-out predictions."""
    labels = np.r_[-np.ones(5), np.ones(5)]
    report = run_cv(config(tmp_path, evaluation="loocv"), labels, memorizer(labels))
    assert len(report.replicates) == 10
    assert all(r.auc is None for r in report.replicates)
    assert report.mean_auc == 1.0
    assert report.sd_auc is None


def test_single_class_training_folds_are_skipped(tmp_path):
    """Test a fold that leaves out the only positive graph is skipped and counted."""
    labels = np.array([1, -1, -1, -1, 1, -1])
    calls = []

    def fit_predict(train, test, rng):
        calls.append(test.tolist())
        return np.full(test.size, 0.5)

    report = run_cv(config(tmp_path, evaluation="loocv"), np.array([1, -1, -1, -1]), fit_predict)
    assert report.skipped == 1
    assert report.replicates[0].skipped
    assert report.replicates[0].note == "single-class training set"
    assert [0] not in calls

    assert run_cv(config(tmp_path, evaluation="loocv"), labels, fit_predict).skipped == 0


def test_results_do_not_depend_on_thread_count(tmp_path):
    """Test per-fold sampler streams make reports identical for any n_jobs."""
    labels = np.r_[-np.ones(8), np.ones(8)]

    def noisy(train, test, rng):
        return rng.uniform(size=test.size)

    serial = run_cv(config(tmp_path, evaluation="kfold", folds=4, n_jobs=1), labels, noisy)
    threaded = run_cv(config(tmp_path, evaluation="kfold", folds=4, n_jobs=3), labels, noisy)
    assert [r.accuracy for r in serial.replicates] == [r.accuracy for r in threaded.replicates]
    assert serial.mean_auc == threaded.mean_auc


def test_write_report(tmp_path):
    """Test the per-fold and summary CSV layouts, without runtimes."""
    labels = np.r_[-np.ones(6), np.ones(6)]
    report = run_cv(config(tmp_path, replicates=2), labels, memorizer(labels))
    per_fold, summary = write_report(report, tmp_path / "out")

    frame = pd.read_csv(per_fold)
    assert list(frame.columns) == [
        "replicate", "fold", "n_test", "accuracy", "auc", "tp", "fp", "tn", "fn", "skipped"
    ]
    assert len(frame) == 2
    assert "runtime_s" not in frame.columns

    totals = pd.read_csv(summary)
    assert list(totals["metric"]) == ["accuracy", "auc"]
    assert totals.loc[0, "mean"] == pytest.approx(1.0)
