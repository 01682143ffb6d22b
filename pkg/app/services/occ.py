"""One-class anomaly scores from the GP classifier and elbow thresholds on them."""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from app.models.schemas import PredictMode
from app.services.classifier import ClassifierPosterior, predict

logger = logging.getLogger(__name__)

SCORE_NAMES = ("mu", "sigma2", "pi", "H")


@dataclass(frozen=True)
class ElbowThreshold:
    """Midpoint of the largest gap in the sorted scores; split_index counts scores below it."""
    value: Optional[float]
    split_index: Optional[int]
    degenerate: bool = False


@dataclass
class OccScores:
    """Per-test-point predictive mean, variance, membership probability and mu/sigma."""
    mu: np.ndarray
    sigma2: np.ndarray
    pi: np.ndarray
    H: np.ndarray
    thresholds: dict[str, ElbowThreshold] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.mu)

    def score(self, name: str) -> np.ndarray:
        if name not in SCORE_NAMES:
            raise KeyError(f"unknown score {name!r}; expected one of {SCORE_NAMES}")
        return getattr(self, name)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({name: self.score(name) for name in SCORE_NAMES})


def coefficient_score(mu: np.ndarray, sigma2: np.ndarray) -> np.ndarray:
    """H = mu / sigma, +inf wherever the predictive variance is exactly zero."""
    mu = np.asarray(mu, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    H = np.full(mu.shape, np.inf)
    positive = sigma2 > 0
    H[positive] = mu[positive] / np.sqrt(sigma2[positive])
    return H


def elbow_threshold(scores: np.ndarray) -> ElbowThreshold:
    """
    Cut at the largest jump among the sorted values.

    Args:
        scores: At least three finite values, in any order.

    Returns:
        ElbowThreshold, flagged degenerate when all values are equal.
    """
    values = np.sort(np.asarray(scores, dtype=float).ravel())
    if values.size < 3:
        raise ValueError(f"elbow threshold needs at least 3 scores, got {values.size}")
    if not np.all(np.isfinite(values)):
        raise ValueError("elbow threshold needs finite scores")

    gaps = np.diff(values)
    if gaps.max() == 0:
        logger.warning(f"All {values.size} scores are equal; no elbow threshold")
        return ElbowThreshold(value=None, split_index=None, degenerate=True)

    k = int(np.argmax(gaps))
    return ElbowThreshold(value=float((values[k] + values[k + 1]) / 2.0), split_index=k + 1)


def _threshold_or_flag(name: str, values: np.ndarray) -> ElbowThreshold:
    finite = values[np.isfinite(values)]
    if finite.size < 3:
        logger.warning(f"Only {finite.size} finite {name} scores; no elbow threshold")
        return ElbowThreshold(value=None, split_index=None, degenerate=True)
    return elbow_threshold(finite)


def occ_scores(
    post: ClassifierPosterior,
    cross: np.ndarray,
    self_input: Optional[np.ndarray] = None,
    mode: PredictMode | str | None = None,
) -> OccScores:
    """
    Score test points against a classifier trained on one (or a dominant) class.

    Infinite H values (zero predictive variance) are left out of the H threshold.
    """
    pred = predict(post, cross, mode=mode, self_input=self_input)
    scores = OccScores(
        mu=pred.mean,
        sigma2=pred.variance,
        pi=pred.probability,
        H=coefficient_score(pred.mean, pred.variance),
    )
    scores.thresholds = {name: _threshold_or_flag(name, scores.score(name)) for name in SCORE_NAMES}
    return scores


def anomalous_side(threshold: ElbowThreshold, training_scores: np.ndarray) -> Optional[str]:
    """
    "below" or "above": the side of the threshold away from the training-class centroid.

    Returns None for a degenerate threshold.
    """
    if threshold.degenerate or threshold.value is None:
        return None
    finite = np.asarray(training_scores, dtype=float)
    finite = finite[np.isfinite(finite)]
    if finite.size == 0:
        return None
    return "below" if finite.mean() > threshold.value else "above"


def anomaly_flags(scores: np.ndarray, threshold: ElbowThreshold, side: Optional[str]) -> np.ndarray:
    """Boolean mask of points on the anomalous side; all False without a usable threshold."""
    scores = np.asarray(scores, dtype=float)
    if side is None or threshold.value is None:
        return np.zeros(scores.shape, dtype=bool)
    if side == "below":
        return scores < threshold.value
    return scores > threshold.value
