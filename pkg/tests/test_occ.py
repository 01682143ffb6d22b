"""One-class scores and elbow thresholds."""

import numpy as np
import pytest

from app.models.schemas import PredictMode
from app.services.classifier import ClassifierPosterior, SqExpFamily
from app.services.occ import (
    ElbowThreshold,
    anomalous_side,
    anomaly_flags,
    coefficient_score,
    elbow_threshold,
    occ_scores,
)


def test_elbow_examples():
    """Test the largest-gap midpoint and the split index."""
    cut = elbow_threshold([1, 2, 10, 11])
    assert cut.value == 6.0
    assert cut.split_index == 2
    assert not cut.degenerate

    assert elbow_threshold([5, 5, 5, 5, 50]).value == 27.5
    assert elbow_threshold([5, 5, 5, 5, 50]).split_index == 4


def test_elbow_degenerate_and_invalid():
    """Test equal scores are flagged while short or non-finite inputs are errors."""
    flat = elbow_threshold([0, 0, 0])
    assert flat.degenerate and flat.value is None and flat.split_index is None

    with pytest.raises(ValueError, match="at least 3"):
        elbow_threshold([1.0, 2.0])
    with pytest.raises(ValueError, match="finite"):
        elbow_threshold([1.0, np.inf, 2.0])


def test_elbow_permutation_and_affine_invariance():
    """Test the threshold ignores order and maps through increasing affine transforms."""
    rng = np.random.default_rng(40)
    for _ in range(20):
        scores = rng.normal(size=15)
        base = elbow_threshold(scores)
        assert elbow_threshold(rng.permutation(scores)) == base

        a, b = rng.uniform(0.1, 10), rng.normal()
        moved = elbow_threshold(a * scores + b)
        assert moved.value == pytest.approx(a * base.value + b)
        assert moved.split_index == base.split_index


def test_coefficient_score():
    """Test H = mu / sigma with +inf where the variance is zero."""
    H = coefficient_score(np.array([1.0, -2.0, 3.0]), np.array([4.0, 1.0, 0.0]))
    assert H[0] == 0.5 and H[1] == -2.0
    assert H[2] == np.inf


def test_occ_scores_match_definitions():
    """Test scores on training duplicates and far points, with H recomputed from mu and sigma2."""
    x = np.arange(5.0)
    D = (x[:, None] - x[None, :]) ** 2
    post = ClassifierPosterior(
        family=SqExpFamily(D),
        f_draws=np.array([[1.5, 1.2, 0.8, 1.1, 1.4]]),
        sigma2_draws=np.array([1.0]),
        length_scale_draws=np.array([[1.0]]),
        loglik_draws=np.zeros(1),
    )
    x_new = np.array([0.0, 2.5, 40.0, 50.0])
    scores = occ_scores(post, (x_new[:, None] - x[None, :]) ** 2, mode=PredictMode.PLUGIN)

    assert len(scores) == 4
    assert scores.pi[0] > 0.5
    assert scores.mu[2] == pytest.approx(0.0, abs=1e-12)
    assert scores.pi[3] == pytest.approx(0.5)
    assert scores.sigma2[3] == pytest.approx(1.0)

    finite = scores.sigma2 > 0
    assert np.array_equal(scores.H[finite], scores.mu[finite] / np.sqrt(scores.sigma2[finite]))
    assert set(scores.thresholds) == {"mu", "sigma2", "pi", "H"}
    assert list(scores.to_frame().columns) == ["mu", "sigma2", "pi", "H"]


def test_occ_scores_flag_thresholds_with_few_test_points():
    """Test fewer than three test points leave every score without a threshold."""
    D = np.array([[0.0, 1.0], [1.0, 0.0]])
    post = ClassifierPosterior(
        family=SqExpFamily(D),
        f_draws=np.array([[1.0, 2.0]]),
        sigma2_draws=np.array([1.0]),
        length_scale_draws=np.array([[1.0]]),
        loglik_draws=np.zeros(1),
    )
    scores = occ_scores(post, np.array([[4.0, 9.0], [9.0, 4.0]]), mode=PredictMode.PLUGIN)
    assert all(cut.degenerate for cut in scores.thresholds.values())


def test_anomalous_side_and_flags():
    """Test the anomalous side is the one away from the training centroid."""
    cut = ElbowThreshold(value=0.5, split_index=3)
    assert anomalous_side(cut, np.array([0.8, 0.9, np.inf])) == "below"
    assert anomalous_side(cut, np.array([0.1, 0.2])) == "above"
    assert anomalous_side(ElbowThreshold(None, None, degenerate=True), np.array([1.0])) is None

    scores = np.array([0.2, 0.7, 0.4])
    assert list(anomaly_flags(scores, cut, "below")) == [True, False, True]
    assert list(anomaly_flags(scores, cut, "above")) == [False, True, False]
    assert not anomaly_flags(scores, cut, None).any()
