"""Stratified splits, cross-validation and accuracy/AUC reports."""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score, confusion_matrix, roc_auc_score
from sklearn.model_selection import LeaveOneOut, StratifiedKFold, StratifiedShuffleSplit

from app.models.schemas import EvalReport, EvaluationScheme, ExperimentConfig, ReplicateResult
from app.services.seeding import int_seed, stream

logger = logging.getLogger(__name__)

# (train_idx, test_idx, rng) -> class +1 probabilities for the test points
FitPredict = Callable[[np.ndarray, np.ndarray, np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class Fold:
    replicate: int
    fold: int
    train: np.ndarray
    test: np.ndarray


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """
    Area under the ROC curve (Mann-Whitney statistic, ties count 1/2).

    Returns nan, with a warning, when only one class is present.
    """
    labels = np.asarray(labels)
    if np.unique(labels).size < 2:
        logger.warning("AUC undefined for single-class labels")
        return float("nan")
    return float(roc_auc_score(labels, np.asarray(scores, dtype=float)))


def make_folds(
    labels: np.ndarray,
    scheme: EvaluationScheme,
    rng: np.random.Generator,
    test_fraction: float = 0.25,
    folds: int = 10,
    replicates: int = 1,
) -> list[Fold]:
    """Stratified shuffle splits, stratified k-fold per replicate, or leave-one-out."""
    labels = np.asarray(labels)
    X = np.zeros((labels.size, 1))
    out: list[Fold] = []

    if scheme is EvaluationScheme.SPLIT:
        splitter = StratifiedShuffleSplit(
            n_splits=replicates, test_size=test_fraction, random_state=int_seed(rng)
        )
        for r, (train, test) in enumerate(splitter.split(X, labels)):
            out.append(Fold(r, 0, np.sort(train), np.sort(test)))
    elif scheme is EvaluationScheme.KFOLD:
        for r in range(replicates):
            splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=int_seed(rng))
            for k, (train, test) in enumerate(splitter.split(X, labels)):
                out.append(Fold(r, k, train, test))
    else:
        if replicates > 1:
            logger.info("Leave-one-out is deterministic; running a single replicate")
        for k, (train, test) in enumerate(LeaveOneOut().split(X)):
            out.append(Fold(0, k, train, test))
    return out


def score_fold(fold: Fold, y_test: np.ndarray, probabilities: np.ndarray) -> ReplicateResult:
    decisions = np.where(probabilities >= 0.5, 1, -1)
    tn, fp, fn, tp = confusion_matrix(y_test, decisions, labels=[-1, 1]).ravel()
    fold_auc = auc(probabilities, y_test) if np.unique(y_test).size == 2 else float("nan")
    return ReplicateResult(
        replicate=fold.replicate,
        fold=fold.fold,
        n_test=int(y_test.size),
        accuracy=float(accuracy_score(y_test, decisions)),
        auc=None if np.isnan(fold_auc) else fold_auc,
        tp=int(tp), fp=int(fp), tn=int(tn), fn=int(fn),
    )


def _mean_sd(values: list[float]) -> tuple[Optional[float], Optional[float]]:
    if not values:
        return None, None
    sd = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return float(np.mean(values)), sd


def run_cv(cfg: ExperimentConfig, labels: np.ndarray, fit_predict: FitPredict) -> EvalReport:
    """
    Evaluate `fit_predict` over the configured replicates or folds.

    Every fold draws its sampler stream from (seed, replicate, fold), so results do
    not depend on n_jobs. Folds whose training labels are single-class are skipped
    and flagged. For leave-one-out the AUC is pooled over all held-out predictions.
    """
    labels = np.asarray(labels)
    started = time.perf_counter()
    folds = make_folds(
        labels, cfg.evaluation, stream(cfg.seed, "split"),
        test_fraction=cfg.test_fraction, folds=cfg.folds, replicates=cfg.replicates,
    )
    logger.info(f"Running {len(folds)} {cfg.evaluation.value} folds on m={labels.size}")

    def run(fold: Fold) -> tuple[ReplicateResult, np.ndarray]:
        if np.unique(labels[fold.train]).size < 2:
            logger.warning(f"Skipping replicate {fold.replicate} fold {fold.fold}: single-class training set")
            return ReplicateResult(
                replicate=fold.replicate, fold=fold.fold, n_test=int(fold.test.size),
                skipped=True, note="single-class training set",
            ), np.full(fold.test.size, np.nan)
        fold_started = time.perf_counter()
        probabilities = np.asarray(
            fit_predict(fold.train, fold.test, stream(cfg.seed, "sampler", fold.replicate, fold.fold)),
            dtype=float,
        )
        result = score_fold(fold, labels[fold.test], probabilities)
        result.runtime_s = time.perf_counter() - fold_started
        return result, probabilities

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
            # map keeps fold order
            outcomes = list(pool.map(run, folds))
    else:
        outcomes = [run(fold) for fold in folds]

    results = [r for r, _ in outcomes]
    scored = [r for r in results if not r.skipped]
    mean_acc, sd_acc = _mean_sd([r.accuracy for r in scored])

    if cfg.evaluation is EvaluationScheme.LOOCV:
        kept = [(f, p) for f, (r, p) in zip(folds, outcomes) if not r.skipped]
        if kept:
            pooled = auc(
                np.concatenate([p for _, p in kept]),
                np.concatenate([labels[f.test] for f, _ in kept]),
            )
        else:
            pooled = float("nan")
        mean_auc, sd_auc = (None if np.isnan(pooled) else pooled), None
    else:
        mean_auc, sd_auc = _mean_sd([r.auc for r in scored if r.auc is not None])

    report = EvalReport(
        replicates=results,
        mean_accuracy=mean_acc,
        sd_accuracy=sd_acc,
        mean_auc=mean_auc,
        sd_auc=sd_auc,
        skipped=len(results) - len(scored),
        runtime_s=time.perf_counter() - started,
    )
    logger.info(
        f"Evaluation done in {report.runtime_s:.1f}s: accuracy={mean_acc}, auc={mean_auc}, "
        f"skipped={report.skipped}"
    )
    return report


REPLICATE_COLUMNS = ["replicate", "fold", "n_test", "accuracy", "auc", "tp", "fp", "tn", "fn", "skipped"]


def write_report(report: EvalReport, out: Path) -> list[Path]:
    """classify_replicates.csv and classify_summary.csv; runtimes stay out of the files."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    per_fold = pd.DataFrame([r.model_dump() for r in report.replicates])[REPLICATE_COLUMNS]
    summary = pd.DataFrame(
        {
            "metric": ["accuracy", "auc"],
            "mean": [report.mean_accuracy, report.mean_auc],
            "sd": [report.sd_accuracy, report.sd_auc],
        }
    )
    summary["skipped"] = report.skipped
    paths = [out / "classify_replicates.csv", out / "classify_summary.csv"]
    per_fold.to_csv(paths[0], index=False, float_format="%.10g")
    summary.to_csv(paths[1], index=False, float_format="%.10g")
    return paths
