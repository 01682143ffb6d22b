"""
GP survival analysis with a constant baseline hazard.

Each survival time is the first accepted jump of a Poisson process with rate Omega,
thinned with probability logistic(f(t, G)). Rejected jumps are imputed every sweep,
after which f over rejected and observed points is updated with the classifier's
sampler, treating observed times as +1 and rejected points as -1.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from lifelines import KaplanMeierFitter
from scipy import linalg, stats
from scipy.integrate import cumulative_trapezoid
from scipy.special import expit

from app.config import get_settings
from app.exceptions import DimensionError, NumericalError, SamplerAbort
from app.models.schemas import SurvivalConfig
from app.services.classifier import LatentGibbsSampler, LatentState, labeled_log_likelihood
from app.services.distances import DistanceMatrix
from app.services.kernels import SqExpHyper, stabilized_cholesky, survival_kernel

logger = logging.getLogger(__name__)


# ============== Data ==============

@dataclass
class SurvivalDataset:
    """Event times, graph distances between subjects, and optional scalar covariates."""
    times: np.ndarray
    distances: DistanceMatrix | np.ndarray
    covariates: Optional[np.ndarray] = None
    covariate_names: list[str] = field(default_factory=list)
    groups: Optional[np.ndarray] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or self.times.size < 1:
            raise DimensionError("times must be a non-empty vector")
        bad = ~(self.times > 0) | ~np.isfinite(self.times)
        if bad.any():
            i = int(np.argmax(bad))
            raise ValueError(f"survival times must be positive and finite; T[{i}]={self.times[i]!r}")

        d = self.distances.values if isinstance(self.distances, DistanceMatrix) else self.distances
        self.distances = np.asarray(d, dtype=float)
        if self.distances.shape != (self.m, self.m):
            raise DimensionError(
                f"{self.m} times but a {self.distances.shape} distance matrix"
            )

        if self.covariates is None:
            self.covariates = np.zeros((self.m, 0))
        self.covariates = np.asarray(self.covariates, dtype=float).reshape(self.m, -1)
        if not self.covariate_names:
            self.covariate_names = [f"x{k}" for k in range(self.p)]
        if len(self.covariate_names) != self.p:
            raise DimensionError(
                f"{self.p} covariate columns but {len(self.covariate_names)} names"
            )
        if self.groups is not None:
            self.groups = np.asarray(self.groups)
            if self.groups.shape != (self.m,):
                raise DimensionError(f"groups must have length {self.m}")

    @property
    def m(self) -> int:
        return self.times.size

    @property
    def p(self) -> int:
        return self.covariates.shape[1]


@dataclass(frozen=True)
class PointRegistry:
    """
    Which subject and time each latent coordinate belongs to.

    The first m entries are the observed times in subject order; the rest are
    rejected points. Rebuilt, never mutated, on every sweep.
    """
    subject: np.ndarray
    time: np.ndarray
    n_observed: int

    @classmethod
    def observed_only(cls, data: SurvivalDataset) -> "PointRegistry":
        return cls(np.arange(data.m), data.times.copy(), data.m)

    @property
    def n_points(self) -> int:
        return self.subject.size

    @property
    def n_rejected(self) -> int:
        return self.n_points - self.n_observed

    @property
    def labels(self) -> np.ndarray:
        """+1 for observed times, -1 for rejected points."""
        labels = -np.ones(self.n_points)
        labels[: self.n_observed] = 1.0
        return labels

    def with_rejected(self, subjects: np.ndarray, times: np.ndarray) -> "PointRegistry":
        return PointRegistry(
            subject=np.concatenate([self.subject[: self.n_observed], subjects]).astype(int),
            time=np.concatenate([self.time[: self.n_observed], times]),
            n_observed=self.n_observed,
        )


@dataclass(frozen=True)
class KernelBlocks:
    """Squared-distance blocks (graph, time, each covariate) between two point sets."""
    graph: np.ndarray
    time: np.ndarray
    covariates: tuple[np.ndarray, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.graph.shape

    def kernel(self, h: SqExpHyper) -> np.ndarray:
        return survival_kernel(self.graph, self.time, self.covariates, h)


def point_blocks(
    data: SurvivalDataset,
    subjects_a: np.ndarray,
    times_a: np.ndarray,
    subjects_b: np.ndarray,
    times_b: np.ndarray,
    graph_rows: Optional[np.ndarray] = None,
    covariate_rows: Optional[np.ndarray] = None,
) -> KernelBlocks:
    """
    Blocks between points (subject, time) in set a and set b.

    Subjects in set a index the training data unless `graph_rows` (distances from each
    a-point's graph to the m training graphs) and `covariate_rows` are given.
    """
    d_rows = data.distances[subjects_a] if graph_rows is None else np.asarray(graph_rows)
    x_rows = data.covariates[subjects_a] if covariate_rows is None else np.asarray(covariate_rows)
    graph = d_rows[:, subjects_b]
    time = (np.asarray(times_a)[:, None] - np.asarray(times_b)[None, :]) ** 2
    covariates = tuple(
        (x_rows[:, k][:, None] - data.covariates[subjects_b, k][None, :]) ** 2
        for k in range(data.p)
    )
    return KernelBlocks(graph, time, covariates)


def survival_hyper(length_scales: np.ndarray, signal_variance: float = 1.0) -> SqExpHyper:
    """Length scales are ordered (graph, time, covariates...)."""
    return SqExpHyper(
        signal_variance=signal_variance,
        length_scale=float(length_scales[0]),
        time_length_scale=float(length_scales[1]),
        covariate_length_scales=tuple(float(v) for v in length_scales[2:]),
    )


class SurvivalFamily:
    """Additive graph + time + covariate kernel over the points of a registry."""

    def __init__(self, data: SurvivalDataset, registry: PointRegistry):
        self.data = data
        self.registry = registry
        self.n_length_scales = 2 + data.p
        self.blocks = point_blocks(
            data, registry.subject, registry.time, registry.subject, registry.time
        )

    @property
    def m(self) -> int:
        return self.registry.n_points

    def kernel(self, blocks: KernelBlocks, length_scales: np.ndarray) -> np.ndarray:
        return blocks.kernel(survival_hyper(length_scales))

    def unit_gram(self, length_scales):
        return self.kernel(self.blocks, length_scales)

    def unit_cross(self, cross: KernelBlocks, length_scales):
        return self.kernel(cross, length_scales)

    def unit_self(self, cross: KernelBlocks, self_input, length_scales):
        return np.full(cross.shape[0], 2.0 + self.data.p)


@dataclass
class SurvivalState:
    """Baseline rate, point registry and the latent state over its points."""
    omega: float
    registry: PointRegistry
    latent: LatentState


# ============== Conditional Updates ==============

def update_omega(
    registry: PointRegistry,
    data: SurvivalDataset,
    cfg: SurvivalConfig,
    rng: np.random.Generator,
) -> float:
    """Omega ~ Gamma(alpha + m + |R|, rate beta + sum T)."""
    shape = cfg.alpha_omega + data.m + registry.n_rejected
    rate = cfg.beta_omega + float(data.times.sum())
    return float(stats.gamma.rvs(shape, scale=1.0 / rate, random_state=rng))


def _candidate_times(i: int, state: SurvivalState, data: SurvivalDataset, rng: np.random.Generator) -> np.ndarray:
    """n_i ~ Poisson(Omega T_i) jump times on (0, T_i) through the inverse cumulative hazard."""
    T_i = data.times[i]
    n_i = int(rng.poisson(state.omega * T_i))
    if n_i == 0:
        return np.empty(0)
    candidates = rng.uniform(0.0, state.omega * T_i, size=n_i) / state.omega
    return candidates[(candidates > 0) & (candidates < T_i)]


def _thin_candidates(
    candidates: np.ndarray,
    mean: np.ndarray,
    k_self: np.ndarray,
    v: np.ndarray,
    rng: np.random.Generator,
    ladder: Sequence[float],
) -> tuple[np.ndarray, np.ndarray]:
    """Draw f at the candidates from N(mean, k_self - v'v) and keep each with probability 1 - logistic(f)."""
    cov = k_self - v.T @ v
    cov = (cov + cov.T) / 2.0
    cond_chol, _ = stabilized_cholesky(cov, ladder)
    f_candidates = mean + cond_chol @ rng.standard_normal(candidates.size)
    keep = rng.uniform(size=candidates.size) < expit(-f_candidates)
    return candidates[keep], f_candidates[keep]


def augment_subject(
    i: int,
    state: SurvivalState,
    data: SurvivalDataset,
    rng: np.random.Generator,
    ladder: Optional[Sequence[float]] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Impute the rejected jumps before subject i's event time.

    Draws n_i ~ Poisson(Omega T_i) candidate times uniformly on (0, T_i), samples f at
    them from the GP conditional given the current latent values, and keeps each
    candidate with probability 1 - logistic(f). Returns (times, f values) kept.
    """
    ladder = get_settings().survival_jitter_ladder if ladder is None else ladder
    candidates = _candidate_times(i, state, data, rng)
    if candidates.size == 0:
        return np.empty(0), np.empty(0)

    latent = state.latent
    registry = state.registry
    subject = np.full(candidates.size, i)
    h = survival_hyper(latent.length_scales, latent.sigma2)

    k_cross = point_blocks(data, subject, candidates, registry.subject, registry.time).kernel(h)
    k_self = point_blocks(data, subject, candidates, subject, candidates).kernel(h)
    chol = latent.chol
    mean = k_cross @ linalg.cho_solve((chol, True), latent.f)
    v = linalg.solve_triangular(chol, k_cross.T, lower=True)
    return _thin_candidates(candidates, mean, k_self, v, rng, ladder)


def augment_all(
    state: SurvivalState,
    data: SurvivalDataset,
    rng: np.random.Generator,
    n_jobs: int = 1,
) -> tuple[PointRegistry, np.ndarray]:
    """
    Rebuild the rejected set for every subject.

    Each subject draws from its own generator seeded from `rng`, so results do not
    depend on n_jobs. Subjects are conditioned on the current points only, never on
    each other's candidates, which lets the cross-covariance solve run once for all
    of them. Returns the new registry and f carried over to it.
    """
    ladder = get_settings().survival_jitter_ladder
    seeds = rng.integers(0, np.iinfo(np.int64).max, size=data.m)
    rngs = [np.random.default_rng(seed) for seed in seeds]
    candidates = [_candidate_times(i, state, data, rngs[i]) for i in range(data.m)]
    offsets = np.concatenate([[0], np.cumsum([c.size for c in candidates])])

    latent = state.latent
    registry = state.registry
    if offsets[-1] == 0:
        return registry.with_rejected(np.empty(0, dtype=int), np.empty(0)), latent.f[: data.m].copy()

    h = survival_hyper(latent.length_scales, latent.sigma2)
    all_subjects = np.repeat(np.arange(data.m), np.diff(offsets))
    all_times = np.concatenate(candidates)
    k_cross = point_blocks(data, all_subjects, all_times, registry.subject, registry.time).kernel(h)
    chol = latent.chol
    mean = k_cross @ linalg.cho_solve((chol, True), latent.f)
    v = linalg.solve_triangular(chol, k_cross.T, lower=True)

    def run(i: int) -> tuple[np.ndarray, np.ndarray]:
        if candidates[i].size == 0:
            return np.empty(0), np.empty(0)
        rows = slice(offsets[i], offsets[i + 1])
        subject = all_subjects[rows]
        k_self = point_blocks(data, subject, candidates[i], subject, candidates[i]).kernel(h)
        return _thin_candidates(candidates[i], mean[rows], k_self, v[:, rows], rngs[i], ladder)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, range(data.m)))
    else:
        results = [run(i) for i in range(data.m)]

    subjects = np.concatenate([np.full(t.size, i) for i, (t, _) in enumerate(results)]).astype(int)
    times = np.concatenate([t for t, _ in results])
    f_rejected = np.concatenate([fv for _, fv in results])

    new_registry = registry.with_rejected(subjects, times)
    f = np.concatenate([latent.f[: data.m], f_rejected])
    return new_registry, f


# ============== Chain ==============

@dataclass
class SurvivalDraw:
    """One retained sweep: enough to evaluate the latent conditional mean anywhere."""
    omega: float
    sigma2: float
    length_scales: np.ndarray
    subject: np.ndarray
    time: np.ndarray
    alpha: np.ndarray  # K^{-1} f over the registry points
    f_observed: np.ndarray

    @property
    def n_rejected(self) -> int:
        return self.subject.size - self.f_observed.size


@dataclass
class SurvivalPosterior:
    data: SurvivalDataset
    draws: list[SurvivalDraw]
    n_sweeps: int = 0
    stalled_sweeps: int = 0

    def __post_init__(self):
        if not self.draws:
            raise ValueError("posterior holds no draws")

    @property
    def omega_draws(self) -> np.ndarray:
        return np.array([d.omega for d in self.draws])

    @property
    def f_observed_mean(self) -> np.ndarray:
        return np.mean([d.f_observed for d in self.draws], axis=0)

    def summary_frame(self) -> pd.DataFrame:
        """One row per draw: Omega, sigma2, the length scales and |R|."""
        rows = []
        for d in self.draws:
            row = {"omega": d.omega, "sigma2": d.sigma2, "ell_graph": d.length_scales[0],
                   "ell_time": d.length_scales[1]}
            for name, value in zip(self.data.covariate_names, d.length_scales[2:]):
                row[f"ell_{name}"] = value
            row["n_rejected"] = d.n_rejected
            rows.append(row)
        return pd.DataFrame(rows)

    def to_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.summary_frame().to_csv(path, index=False, float_format="%.10g")
        return path


def _retain(state: SurvivalState, data: SurvivalDataset) -> SurvivalDraw:
    latent = state.latent
    alpha = linalg.cho_solve((latent.chol, True), latent.f)
    return SurvivalDraw(
        omega=state.omega,
        sigma2=latent.sigma2,
        length_scales=latent.length_scales.copy(),
        subject=state.registry.subject.copy(),
        time=state.registry.time.copy(),
        alpha=alpha,
        f_observed=latent.f[: data.m].copy(),
    )


class SurvivalGibbsSampler:
    """One sweep: per-subject augmentation, the Omega draw, then the latent sweep over R and T."""

    def __init__(
        self,
        data: SurvivalDataset,
        cfg: SurvivalConfig,
        rng: np.random.Generator,
        n_jobs: int = 1,
    ):
        self.data = data
        self.cfg = cfg
        self.rng = rng
        self.n_jobs = n_jobs
        self.latent_sampler = LatentGibbsSampler(cfg, rng, get_settings().survival_jitter_ladder)
        self._family: Optional[SurvivalFamily] = None

    def family(self, registry: PointRegistry) -> SurvivalFamily:
        if self._family is None or self._family.registry is not registry:
            self._family = SurvivalFamily(self.data, registry)
        return self._family

    def initialize(self) -> SurvivalState:
        """No rejected points, f ~ N(0, K) over the observed times, Omega at its R-free mean."""
        registry = PointRegistry.observed_only(self.data)
        return SurvivalState(
            omega=(self.cfg.alpha_omega + self.data.m)
            / (self.cfg.beta_omega + float(self.data.times.sum())),
            registry=registry,
            latent=self.latent_sampler.initialize(self.family(registry)),
        )

    def sweep(self, state: SurvivalState, sweep_number: int = 0) -> tuple[SurvivalState, bool]:
        """Returns the new state and whether augmentation failed or the latent sweep stalled."""
        augment_failed = False
        if self.cfg.augment:
            try:
                registry, f = augment_all(state, self.data, self.rng, self.n_jobs)
                latent = self.latent_sampler.refactor(replace(state.latent, f=f), self.family(registry))
                state = SurvivalState(state.omega, registry, latent)
            except NumericalError as e:
                logger.warning(f"Augmentation failed in sweep {sweep_number + 1}, keeping previous points: {e}")
                augment_failed = True

        omega = update_omega(state.registry, self.data, self.cfg, self.rng)
        loglik = labeled_log_likelihood(state.registry.labels)
        latent, stalled, _ = self.latent_sampler.sweep(state.latent, self.family(state.registry), loglik)
        return SurvivalState(omega, state.registry, latent), stalled or augment_failed


def fit_survival(
    data: SurvivalDataset,
    cfg: SurvivalConfig,
    rng: Optional[np.random.Generator] = None,
    n_jobs: Optional[int] = None,
) -> SurvivalPosterior:
    """
    Gibbs sampling for GP survival analysis.

    Each sweep: per-subject augmentation, the Omega draw, then the classifier sweep
    over f on observed and rejected points with the survival Gram.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    sampler = SurvivalGibbsSampler(data, cfg, rng, n_jobs or get_settings().n_jobs)
    state = sampler.initialize()

    max_stalled = cfg.max_stall_fraction * cfg.n_samples
    draws: list[SurvivalDraw] = []
    stalled_sweeps = 0

    for t in range(cfg.n_samples):
        state, stalled = sampler.sweep(state, t)
        stalled_sweeps += int(stalled)
        if stalled_sweeps > max_stalled:
            logger.error(f"Aborting survival chain: {stalled_sweeps} stalled sweeps after {t + 1}")
            raise SamplerAbort(
                f"{stalled_sweeps} of {t + 1} survival sweeps stalled",
                diagnostics={"sweeps": t + 1, "stalled": stalled_sweeps, "omega": state.omega,
                             "n_rejected": state.registry.n_rejected},
            )
        if t >= cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0:
            draws.append(_retain(state, data))
        if (t + 1) % 100 == 0:
            logger.debug(
                f"Survival sweep {t + 1}/{cfg.n_samples}: omega={state.omega:.4g}, "
                f"|R|={state.registry.n_rejected}, sigma2={state.latent.sigma2:.4g}"
            )

    posterior = SurvivalPosterior(data, draws, cfg.n_samples, stalled_sweeps)
    logger.info(
        f"Survival Gibbs finished: {len(draws)} draws kept (m={data.m}, "
        f"mean omega={posterior.omega_draws.mean():.4g}, "
        f"mean |R|={np.mean([d.n_rejected for d in draws]):.1f})"
    )
    return posterior


# ============== Survival Surfaces ==============

@dataclass
class SurvivalSurface:
    """Posterior-mean S(t, X) on a time grid, one row per subject."""
    grid: np.ndarray
    survival: np.ndarray
    subjects: np.ndarray
    groups: Optional[np.ndarray] = None

    def group_means(self) -> dict:
        if self.groups is None:
            return {}
        return {g: self.survival[self.groups == g].mean(axis=0) for g in np.unique(self.groups)}

    def to_frame(self) -> pd.DataFrame:
        """Grid times as columns; subject rows, then one `group_<g>` row per group."""
        columns = [f"{t:.10g}" for t in self.grid]
        frame = pd.DataFrame(self.survival, columns=columns)
        frame.insert(0, "row", [f"subject_{int(s)}" for s in self.subjects])
        means = self.group_means()
        if means:
            group_frame = pd.DataFrame(np.vstack(list(means.values())), columns=columns)
            group_frame.insert(0, "row", [f"group_{g}" for g in means])
            frame = pd.concat([frame, group_frame], ignore_index=True)
        return frame


def survival_grid(times: np.ndarray, points: Optional[int] = None) -> np.ndarray:
    """`points` equally spaced times from 0 to max T."""
    points = points or get_settings().survival_grid_points
    return np.linspace(0.0, float(np.max(times)), points)


def survival_surface(
    post: SurvivalPosterior,
    subjects: Optional[Sequence[int]] = None,
    grid: Optional[np.ndarray] = None,
    max_draws: Optional[int] = None,
    graph_rows: Optional[np.ndarray] = None,
    covariate_rows: Optional[np.ndarray] = None,
) -> SurvivalSurface:
    """
    S(t, X) = exp(-int_0^t Omega logistic(f(s, X)) ds), averaged over draws.

    f on the grid is the GP conditional mean for each draw and the integral uses the
    trapezoidal rule. Subjects default to all training subjects; new subjects are
    described by `graph_rows` (distances to the training graphs) and `covariate_rows`.
    """
    data = post.data
    grid = survival_grid(data.times) if grid is None else np.asarray(grid, dtype=float)
    if graph_rows is not None:
        graph_rows = np.atleast_2d(graph_rows)
        q = graph_rows.shape[0]
        subjects = np.arange(q)
        covariate_rows = np.zeros((q, 0)) if covariate_rows is None else np.atleast_2d(covariate_rows)
        groups = None
    else:
        subjects = np.arange(data.m) if subjects is None else np.asarray(subjects, dtype=int)
        groups = None if data.groups is None else data.groups[subjects]

    max_draws = max_draws or get_settings().surface_draws
    picks = np.unique(np.linspace(0, len(post.draws) - 1, min(max_draws, len(post.draws))).astype(int))

    n_grid = grid.size
    query_subject = np.repeat(np.arange(len(subjects)), n_grid)
    query_time = np.tile(grid, len(subjects))
    total = np.zeros((len(subjects), n_grid))

    for b in picks:
        draw = post.draws[b]
        if graph_rows is None:
            blocks = point_blocks(
                data, subjects[query_subject], query_time, draw.subject, draw.time
            )
        else:
            blocks = point_blocks(
                data, query_subject, query_time, draw.subject, draw.time,
                graph_rows=graph_rows[query_subject],
                covariate_rows=covariate_rows[query_subject],
            )
        k = blocks.kernel(survival_hyper(draw.length_scales, draw.sigma2))
        intensity = draw.omega * expit(k @ draw.alpha).reshape(len(subjects), n_grid)
        cumulative = cumulative_trapezoid(intensity, grid, axis=1, initial=0.0)
        total += np.exp(-cumulative)

    return SurvivalSurface(grid=grid, survival=total / len(picks), subjects=subjects, groups=groups)


def kaplan_meier(
    times: np.ndarray,
    grid: np.ndarray,
    groups: Optional[np.ndarray] = None,
) -> pd.DataFrame:
    """Kaplan-Meier step estimates per group on the grid; every event is observed."""
    times = np.asarray(times, dtype=float)
    groups = np.zeros(times.size, dtype=int) if groups is None else np.asarray(groups)
    columns = {"time": grid}
    for g in np.unique(groups):
        kmf = KaplanMeierFitter()
        subset = times[groups == g]
        kmf.fit(durations=subset, event_observed=np.ones(subset.size, dtype=bool))
        columns[f"group_{g}"] = kmf.survival_function_at_times(grid).values
    return pd.DataFrame(columns)
