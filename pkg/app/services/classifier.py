"""
GP binary classification over graphs.

Gibbs sampling with a logistic likelihood and inverse-gamma hyperpriors: a joint
slice move on (f, length scales) in the whitened parameterization, elliptical slice
refreshes of f, and conjugate signal-variance draws. The chain machinery is written
against a kernel family so the survival model can reuse it unchanged.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Protocol, Sequence

import numpy as np
import pandas as pd
from scipy import linalg, stats
from scipy.special import expit

from app.exceptions import DimensionError, NumericalError, SamplerAbort
from app.models.schemas import ClassifierConfig, PredictMode
from app.config import get_settings
from app.services.distances import DistanceMatrix
from app.services.kernels import cross_covariance, SqExpHyper, stabilized_cholesky

logger = logging.getLogger(__name__)

LogLik = Callable[[np.ndarray], float]

_MIN_BRACKET = 1e-12
_LOG_SCALE_BOUND = 50.0
_MAX_STEP_OUT = 20


def logistic(z):
    """1 / (1 + exp(-z)), overflow-free for any |z|."""
    return expit(z)


def log_likelihood(f: np.ndarray, y: np.ndarray) -> float:
    """sum_k log logistic(f_k y_k)."""
    return float(-np.sum(np.logaddexp(0.0, -y * f)))


def labeled_log_likelihood(y: np.ndarray) -> LogLik:
    y = np.asarray(y, dtype=float)
    return lambda f: log_likelihood(f, y)


# ============== Kernel Families ==============

class KernelFamily(Protocol):
    """Unit-signal-variance kernel as a function of its length scales."""
    n_length_scales: int

    @property
    def m(self) -> int: ...

    def unit_gram(self, length_scales: np.ndarray) -> np.ndarray: ...

    def unit_cross(self, cross: np.ndarray, length_scales: np.ndarray) -> np.ndarray: ...

    def unit_self(
        self, cross: np.ndarray, self_input: Optional[np.ndarray], length_scales: np.ndarray
    ) -> np.ndarray: ...


class SqExpFamily:
    """exp(-ell * D) over a precomputed graph distance matrix (GP-F, GP-lambda)."""
    n_length_scales = 1

    def __init__(self, distances: DistanceMatrix | np.ndarray):
        d = distances.values if isinstance(distances, DistanceMatrix) else np.asarray(distances)
        self.distances = np.asarray(d, dtype=float)

    @property
    def m(self) -> int:
        return self.distances.shape[0]

    def unit_gram(self, length_scales):
        return np.exp(-length_scales[0] * self.distances)

    def unit_cross(self, cross, length_scales):
        cross = np.atleast_2d(np.asarray(cross, dtype=float))
        return cross_covariance(cross, SqExpHyper(1.0, float(length_scales[0])), m=self.m)

    def unit_self(self, cross, self_input, length_scales):
        return np.ones(np.atleast_2d(cross).shape[0])


class FixedGramFamily:
    """A kernel with no sampled length scale, e.g. the random-walk kernel (GP-RW)."""
    n_length_scales = 0

    def __init__(self, gram: np.ndarray):
        self.gram = np.asarray(gram, dtype=float)

    @property
    def m(self) -> int:
        return self.gram.shape[0]

    def unit_gram(self, length_scales):
        return self.gram

    def unit_cross(self, cross, length_scales):
        cross = np.atleast_2d(np.asarray(cross, dtype=float))
        if cross.shape[1] != self.m:
            raise DimensionError(f"expected kernel values against {self.m} training graphs")
        return cross

    def unit_self(self, cross, self_input, length_scales):
        if self_input is None:
            raise ValueError("fixed-Gram prediction needs the test points' self-kernel values")
        return np.asarray(self_input, dtype=float)


# ============== Data and State ==============

@dataclass
class LabeledDataset:
    """Labels in {-1, +1} with either a distance matrix or a fixed unit Gram."""
    labels: np.ndarray
    distances: Optional[DistanceMatrix | np.ndarray] = None
    gram: Optional[np.ndarray] = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=float)
        bad = ~np.isin(self.labels, (-1.0, 1.0))
        if bad.any():
            raise ValueError(f"labels must be -1 or +1; bad value at index {int(np.argmax(bad))}")
        if (self.distances is None) == (self.gram is None):
            raise ValueError("provide exactly one of distances or gram")
        if self.family().m != self.labels.size:
            raise DimensionError(
                f"{self.labels.size} labels but kernel input covers {self.family().m} points"
            )

    @property
    def m(self) -> int:
        return self.labels.size

    def family(self) -> KernelFamily:
        if self.gram is not None:
            return FixedGramFamily(self.gram)
        return SqExpFamily(self.distances)


@dataclass
class LatentState:
    """Current latent values and kernel hyperparameters; chol0 factors K0 + jitter I."""
    f: np.ndarray
    length_scales: np.ndarray
    sigma2: float
    chol0: np.ndarray
    jitter: float
    loglik: float = float("nan")

    @property
    def chol(self) -> np.ndarray:
        """Cholesky factor of K = sigma^2 K0."""
        return np.sqrt(self.sigma2) * self.chol0


class SliceStep(NamedTuple):
    f: np.ndarray
    loglik: float
    stalled: bool


# ============== Conditional Updates ==============

def sample_sigma2(
    f: np.ndarray,
    K0_chol: np.ndarray,
    cfg: ClassifierConfig,
    rng: np.random.Generator,
) -> float:
    """Inv-Gamma(alpha + m/2, beta + f'K0^{-1}f / 2) using a triangular solve."""
    v = linalg.solve_triangular(K0_chol, f, lower=True)
    quad = float(v @ v)
    if not np.isfinite(quad):
        raise NumericalError("non-finite quadratic form in signal-variance update",
                             diagnostics={"m": int(f.size)})
    shape = cfg.alpha_sigma + f.size / 2.0
    scale = cfg.beta_sigma + quad / 2.0
    return float(stats.invgamma.rvs(shape, scale=scale, random_state=rng))


def ess_update(
    f: np.ndarray,
    C: np.ndarray,
    loglik: LogLik,
    rng: np.random.Generator,
    current_loglik: Optional[float] = None,
) -> SliceStep:
    """One elliptical slice transition for N(0, CC') x exp(loglik)."""
    if current_loglik is None:
        current_loglik = loglik(f)
    nu = C @ rng.standard_normal(f.size)
    log_y = current_loglik + np.log(rng.uniform())

    theta = rng.uniform(0.0, 2.0 * np.pi)
    lo, hi = theta - 2.0 * np.pi, theta
    while True:
        proposal = f * np.cos(theta) + nu * np.sin(theta)
        ll = loglik(proposal)
        if ll > log_y:
            return SliceStep(proposal, ll, False)
        if theta < 0:
            lo = theta
        else:
            hi = theta
        if hi - lo < _MIN_BRACKET:
            return SliceStep(f, current_loglik, True)
        theta = rng.uniform(lo, hi)


class _Candidate(NamedTuple):
    log_post: float
    chol0: np.ndarray
    jitter: float
    f: np.ndarray
    loglik: float


def _log_prior_log_scale(length_scales: np.ndarray, cfg: ClassifierConfig) -> float:
    # inverse-gamma density on ell, Jacobian of ell = exp(x) included
    return float(np.sum(-cfg.alpha_ell * np.log(length_scales) - cfg.beta_ell / length_scales))


def _slice_coordinate(
    x0: float,
    at: Callable[[float], Optional[_Candidate]],
    log_y: float,
    width: float,
    rng: np.random.Generator,
) -> tuple[float, Optional[_Candidate]]:
    """Stepping-out and shrinkage on one coordinate; candidate is None when the bracket collapsed."""
    def log_post(candidate: Optional[_Candidate]) -> float:
        return -np.inf if candidate is None else candidate.log_post

    left = x0 - width * rng.uniform()
    right = left + width
    j = int(_MAX_STEP_OUT * rng.uniform())
    steps_right = _MAX_STEP_OUT - 1 - j
    while j > 0 and log_post(at(left)) > log_y:
        left -= width
        j -= 1
    while steps_right > 0 and log_post(at(right)) > log_y:
        right += width
        steps_right -= 1

    while True:
        x1 = rng.uniform(left, right)
        candidate = at(x1)
        if log_post(candidate) > log_y:
            return x1, candidate
        if x1 < x0:
            left = x1
        else:
            right = x1
        if right - left < _MIN_BRACKET:
            return x0, None


def joint_f_ell_update(
    state: LatentState,
    family: KernelFamily,
    loglik: LogLik,
    cfg: ClassifierConfig,
    rng: np.random.Generator,
    ladder: Optional[Sequence[float]] = None,
) -> tuple[LatentState, bool]:
    """
    Slice-sample each log length scale with the whitened latent nu = C(ell)^{-1} f fixed.

    f follows as C(ell*) nu, so the prior on f cancels and no determinant is needed.
    Returns the new state and whether any coordinate stalled.
    """
    if family.n_length_scales == 0 or not cfg.sample_length_scale:
        return state, False

    scale = np.sqrt(state.sigma2)
    nu = linalg.solve_triangular(state.chol0, state.f, lower=True) / scale
    log_ells = np.log(state.length_scales).astype(float)

    def evaluate(x: np.ndarray) -> Optional[_Candidate]:
        if np.any(np.abs(x) > _LOG_SCALE_BOUND):
            return None
        ells = np.exp(x)
        try:
            chol0, jitter = stabilized_cholesky(family.unit_gram(ells), ladder)
        except NumericalError:
            return None
        f_new = scale * (chol0 @ nu)
        ll = loglik(f_new)
        return _Candidate(ll + _log_prior_log_scale(ells, cfg), chol0, jitter, f_new, ll)

    current_ll = loglik(state.f)
    current = _Candidate(
        current_ll + _log_prior_log_scale(state.length_scales, cfg),
        state.chol0, state.jitter, state.f, current_ll,
    )
    stalled = False

    for k in range(family.n_length_scales):

        def at(x: float) -> Optional[_Candidate]:
            trial = log_ells.copy()
            trial[k] = x
            return evaluate(trial)

        log_y = current.log_post + np.log(rng.uniform())
        x1, candidate = _slice_coordinate(log_ells[k], at, log_y, cfg.slice_width, rng)
        if candidate is None:
            stalled = True
            continue
        log_ells[k] = x1
        current = candidate

    new_state = replace(
        state,
        f=current.f,
        length_scales=np.exp(log_ells),
        chol0=current.chol0,
        jitter=current.jitter,
        loglik=current.loglik,
    )
    return new_state, stalled


def _log_prior_log_variance(x: float, cfg: ClassifierConfig) -> float:
    # inverse-gamma density on sigma^2 = exp(x), Jacobian included
    return -cfg.alpha_sigma * x - cfg.beta_sigma * np.exp(-x)


def signal_variance_rescale(
    state: LatentState,
    loglik: LogLik,
    cfg: ClassifierConfig,
    rng: np.random.Generator,
) -> tuple[LatentState, bool]:
    """
    Slice-sample log sigma^2 with the whitened latent held fixed.

    f scales by sqrt(sigma*^2 / sigma^2) and C0 is unchanged, so no factorization is needed.
    """
    x0 = float(np.log(state.sigma2))
    f0 = state.f

    def at(x: float) -> Optional[_Candidate]:
        if abs(x) > _LOG_SCALE_BOUND:
            return None
        f_new = f0 * np.exp((x - x0) / 2.0)
        ll = loglik(f_new)
        return _Candidate(ll + _log_prior_log_variance(x, cfg), state.chol0, state.jitter, f_new, ll)

    current_ll = loglik(f0)
    log_y = current_ll + _log_prior_log_variance(x0, cfg) + np.log(rng.uniform())
    x1, candidate = _slice_coordinate(x0, at, log_y, cfg.slice_width, rng)
    if candidate is None:
        return replace(state, loglik=current_ll), True
    return replace(state, f=candidate.f, sigma2=float(np.exp(x1)), loglik=candidate.loglik), False


# ============== Chain ==============

@dataclass
class ClassifierPosterior:
    """Retained, thinned draws of f, sigma^2 and the length scales."""
    family: KernelFamily
    f_draws: np.ndarray
    sigma2_draws: np.ndarray
    length_scale_draws: np.ndarray
    loglik_draws: np.ndarray
    n_sweeps: int = 0
    stalled_sweeps: int = 0
    ess_stalls: int = 0
    labels: Optional[np.ndarray] = None
    jitters: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.f_draws) == 0:
            raise ValueError("posterior holds no draws")
        if not (len(self.f_draws) == len(self.sigma2_draws) == len(self.length_scale_draws)):
            raise ValueError("draw counts disagree")

    @property
    def n_draws(self) -> int:
        return len(self.sigma2_draws)

    @property
    def f_mean(self) -> np.ndarray:
        return self.f_draws.mean(axis=0)

    @property
    def sigma2_mean(self) -> float:
        return float(self.sigma2_draws.mean())

    @property
    def length_scale_mean(self) -> np.ndarray:
        return self.length_scale_draws.mean(axis=0)

    def to_csv(self, path: Path) -> Path:
        """One row per draw: sigma2, length scales, then f entries."""
        columns = {"sigma2": self.sigma2_draws}
        for k in range(self.length_scale_draws.shape[1]):
            columns[f"ell_{k}"] = self.length_scale_draws[:, k]
        for i in range(self.f_draws.shape[1]):
            columns[f"f_{i}"] = self.f_draws[:, i]
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(columns).to_csv(path, index=False, float_format="%.10g")
        return path


class LatentGibbsSampler:
    """One sweep: joint (f, ell) move, whitened sigma^2 move, elliptical slice refreshes, conjugate sigma^2."""

    def __init__(
        self,
        cfg: ClassifierConfig,
        rng: np.random.Generator,
        ladder: Optional[Sequence[float]] = None,
    ):
        self.cfg = cfg
        self.rng = rng
        self.ladder = ladder

    def initialize(self, family: KernelFamily) -> LatentState:
        """f ~ N(0, K) at the initial sigma^2 and length scales."""
        ells = np.full(family.n_length_scales, self.cfg.initial_length_scale)
        chol0, jitter = stabilized_cholesky(family.unit_gram(ells), self.ladder)
        sigma2 = self.cfg.initial_signal_variance
        f = np.sqrt(sigma2) * (chol0 @ self.rng.standard_normal(family.m))
        return LatentState(f=f, length_scales=ells, sigma2=sigma2, chol0=chol0, jitter=jitter)

    def refactor(self, state: LatentState, family: KernelFamily) -> LatentState:
        """Recompute C0 after the point set behind the family changed."""
        chol0, jitter = stabilized_cholesky(family.unit_gram(state.length_scales), self.ladder)
        return replace(state, chol0=chol0, jitter=jitter)

    def sweep(
        self,
        state: LatentState,
        family: KernelFamily,
        loglik: LogLik,
    ) -> tuple[LatentState, bool, int]:
        """Returns (state, sweep stalled, number of stalled ESS refreshes)."""
        state, stalled = joint_f_ell_update(state, family, loglik, self.cfg, self.rng, self.ladder)
        if self.cfg.sample_signal_variance:
            state, rescale_stalled = signal_variance_rescale(state, loglik, self.cfg, self.rng)
            stalled = stalled or rescale_stalled

        ll = loglik(state.f)
        ess_stalls = 0
        f = state.f
        C = state.chol
        for _ in range(self.cfg.ess_refreshes):
            f, ll, ess_stalled = ess_update(f, C, loglik, self.rng, ll)
            ess_stalls += int(ess_stalled)
        state = replace(state, f=f, loglik=ll)

        if self.cfg.sample_signal_variance:
            state = replace(state, sigma2=sample_sigma2(state.f, state.chol0, self.cfg, self.rng))

        return state, stalled or ess_stalls > 0, ess_stalls


def run_chain(
    family: KernelFamily,
    loglik: LogLik,
    cfg: ClassifierConfig,
    rng: Optional[np.random.Generator] = None,
    ladder: Optional[Sequence[float]] = None,
    labels: Optional[np.ndarray] = None,
) -> ClassifierPosterior:
    """Run cfg.n_samples sweeps and keep post-burn-in draws at the thinning interval."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    sampler = LatentGibbsSampler(cfg, rng, ladder)
    state = sampler.initialize(family)

    max_stalled = cfg.max_stall_fraction * cfg.n_samples
    f_draws, sigma2_draws, ell_draws, ll_draws, jitters = [], [], [], [], []
    stalled_sweeps = 0
    ess_stalls = 0

    for t in range(cfg.n_samples):
        state, stalled, n_ess = sampler.sweep(state, family, loglik)
        stalled_sweeps += int(stalled)
        ess_stalls += n_ess
        if stalled_sweeps > max_stalled:
            logger.error(f"Aborting chain: {stalled_sweeps} stalled sweeps after {t + 1}")
            raise SamplerAbort(
                f"{stalled_sweeps} of {t + 1} sweeps stalled",
                diagnostics={"sweeps": t + 1, "stalled": stalled_sweeps,
                             "sigma2": state.sigma2, "length_scales": state.length_scales.tolist()},
            )
        if t >= cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0:
            f_draws.append(state.f.copy())
            sigma2_draws.append(state.sigma2)
            ell_draws.append(state.length_scales.copy())
            ll_draws.append(state.loglik)
            jitters.append(state.jitter)
        if (t + 1) % 500 == 0:
            logger.debug(
                f"Sweep {t + 1}/{cfg.n_samples}: sigma2={state.sigma2:.4g}, "
                f"ell={np.round(state.length_scales, 4).tolist()}, loglik={state.loglik:.4g}"
            )

    if stalled_sweeps:
        logger.warning(f"{stalled_sweeps} of {cfg.n_samples} sweeps stalled")
    posterior = ClassifierPosterior(
        family=family,
        f_draws=np.asarray(f_draws),
        sigma2_draws=np.asarray(sigma2_draws),
        length_scale_draws=np.asarray(ell_draws).reshape(len(ell_draws), family.n_length_scales),
        loglik_draws=np.asarray(ll_draws),
        n_sweeps=cfg.n_samples,
        stalled_sweeps=stalled_sweeps,
        ess_stalls=ess_stalls,
        labels=labels,
        jitters=jitters,
    )
    logger.info(
        f"Gibbs finished: {posterior.n_draws} draws kept from {cfg.n_samples} sweeps "
        f"(m={family.m}, mean sigma2={posterior.sigma2_mean:.4g}, "
        f"mean ell={np.round(posterior.length_scale_mean, 4).tolist()})"
    )
    return posterior


def fit(
    data: LabeledDataset,
    cfg: ClassifierConfig,
    rng: Optional[np.random.Generator] = None,
) -> ClassifierPosterior:
    """Gibbs sampling for GP classification on a labeled dataset."""
    return run_chain(
        data.family(),
        labeled_log_likelihood(data.labels),
        cfg,
        rng=rng,
        labels=data.labels,
    )


# ============== Prediction ==============

@dataclass
class Prediction:
    """Posterior predictive latent mean, variance and class-+1 probability per test point."""
    mean: np.ndarray
    variance: np.ndarray
    probability: np.ndarray

    @property
    def decision(self) -> np.ndarray:
        # ties go to +1
        return np.where(self.probability >= 0.5, 1, -1)


def _predict_at(
    family: KernelFamily,
    cross: np.ndarray,
    self_input: Optional[np.ndarray],
    length_scales: np.ndarray,
    sigma2: float,
    f: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    chol, _ = stabilized_cholesky(sigma2 * family.unit_gram(length_scales))
    k = sigma2 * family.unit_cross(cross, length_scales)
    k_self = sigma2 * family.unit_self(cross, self_input, length_scales)
    mean = k @ linalg.cho_solve((chol, True), f)
    v = linalg.solve_triangular(chol, k.T, lower=True)
    variance = np.maximum(k_self - np.sum(v * v, axis=0), 0.0)
    return mean, variance


def predict(
    post: ClassifierPosterior,
    cross: np.ndarray,
    mode: PredictMode | str | None = None,
    self_input: Optional[np.ndarray] = None,
    max_draws: Optional[int] = None,
) -> Prediction:
    """
    Posterior predictive at test points.

    `cross` holds test-to-train distances (or kernel values for a fixed Gram, with the
    test self-kernel values in `self_input`). Plugin mode plugs in the posterior means
    of theta and f; mc mode averages the per-draw predictors built from each theta draw.
    """
    settings = get_settings()
    mode = PredictMode(mode or settings.predict_mode)
    cross = np.atleast_2d(np.asarray(cross, dtype=float))
    f_hat = post.f_mean

    if mode is PredictMode.PLUGIN:
        mean, variance = _predict_at(
            post.family, cross, self_input, post.length_scale_mean, post.sigma2_mean, f_hat
        )
        return Prediction(mean, variance, logistic(mean))

    max_draws = max_draws or settings.predict_draws
    picks = np.unique(np.linspace(0, post.n_draws - 1, min(max_draws, post.n_draws)).astype(int))
    means, variances = [], []
    for b in picks:
        mu_b, var_b = _predict_at(
            post.family, cross, self_input,
            post.length_scale_draws[b], float(post.sigma2_draws[b]), f_hat,
        )
        means.append(mu_b)
        variances.append(var_b)
    means = np.asarray(means)
    variances = np.asarray(variances)
    return Prediction(
        mean=means.mean(axis=0),
        variance=variances.mean(axis=0) + means.var(axis=0),
        probability=logistic(means).mean(axis=0),
    )
