"""Pydantic models for configuration, reports, manifests and API bodies."""

from enum import Enum
from pathlib import Path
from typing import Annotated, Optional

from pydantic import AfterValidator, BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import get_settings


def _setting(name: str):
    return lambda: getattr(get_settings(), name)


# ============== Enumerations ==============

class DistanceKind(str, Enum):
    """Pairwise graph distance feeding the squared-exponential kernel."""
    FROBENIUS = "frobenius"
    SPECTRAL_LAPLACIAN = "spectral-laplacian"
    SPECTRAL_NORMALIZED = "spectral-normalized"
    SPECTRAL_SIGNED = "spectral-signed"

    @property
    def is_spectral(self) -> bool:
        return self is not DistanceKind.FROBENIUS


class LaplacianVariant(str, Enum):
    LAPLACIAN = "laplacian"
    NORMALIZED = "normalized"
    SIGNED = "signed"


class KernelChoice(str, Enum):
    GP_F = "gp-f"
    GP_LAMBDA = "gp-lambda"
    GP_RW = "gp-rw"


class EvaluationScheme(str, Enum):
    SPLIT = "split"
    LOOCV = "loocv"
    KFOLD = "kfold"


class Task(str, Enum):
    SIMULATE = "simulate"
    DISTANCES = "distances"
    CLASSIFY = "classify"
    OCC = "occ"
    SURVIVAL = "survival"


class GraphModel(str, Enum):
    SMALL_WORLD = "small-world"
    SBM = "sbm"
    CORR_ER = "corr-er"
    PREF_ATTACH = "pref-attach"
    ER = "er"
    ERGM = "ergm"


class SurvivalCase(str, Enum):
    EASY = "easy"
    HARD = "hard"


class PredictMode(str, Enum):
    PLUGIN = "plugin"
    MC = "mc"


class OccTraining(str, Enum):
    """Which training points the one-class task fits on."""
    ONE_CLASS = "one-class"  # only points labelled occ_train_label
    UNBALANCED = "unbalanced"  # the whole unbalanced training split, both labels


# ============== Sampler Configuration ==============

class ClassifierConfig(BaseModel):
    """Hyperpriors and chain settings for the GP classification Gibbs sampler."""
    alpha_sigma: float = Field(default_factory=_setting("alpha_sigma"), gt=0)
    beta_sigma: float = Field(default_factory=_setting("beta_sigma"), gt=0)
    alpha_ell: float = Field(default_factory=_setting("alpha_ell"), gt=0)
    beta_ell: float = Field(default_factory=_setting("beta_ell"), gt=0)
    n_samples: int = Field(default_factory=_setting("n_samples"), ge=1)
    burn_in: int = Field(default_factory=_setting("burn_in"), ge=0)
    thin: int = Field(default_factory=_setting("thin"), ge=1)
    ess_refreshes: int = Field(default_factory=_setting("ess_refreshes"), ge=0)
    slice_width: float = Field(default_factory=_setting("slice_width"), gt=0)
    max_stall_fraction: float = Field(default_factory=_setting("max_stall_fraction"), gt=0, le=1)
    initial_signal_variance: float = Field(default=1.0, gt=0)
    initial_length_scale: float = Field(default=1.0, gt=0)
    sample_signal_variance: bool = True
    sample_length_scale: bool = True
    seed: Optional[int] = None

    @model_validator(mode="after")
    def _check_chain_length(self):
        if self.n_samples <= self.burn_in:
            raise ValueError(
                f"n_samples ({self.n_samples}) must exceed burn_in ({self.burn_in})"
            )
        return self


class SurvivalConfig(ClassifierConfig):
    """Adds the Gamma prior on the constant baseline hazard and surface settings."""
    alpha_omega: float = Field(default_factory=_setting("alpha_omega"), gt=0)
    beta_omega: float = Field(default_factory=_setting("beta_omega"), gt=0)
    augment: bool = True  # False disables rejected-point imputation
    grid_points: int = Field(default_factory=_setting("survival_grid_points"), ge=2)
    surface_draws: int = Field(default_factory=_setting("surface_draws"), ge=1)


# ============== Simulation Design ==============

def _check_link_matrix(matrix: list[list[float]]) -> list[list[float]]:
    if len(matrix) != 2 or any(len(row) != 2 for row in matrix):
        raise ValueError("SBM link matrix must be 2x2")
    if any(not 0.0 <= p <= 1.0 for row in matrix for p in row):
        raise ValueError("SBM link probabilities must lie in [0, 1]")
    if matrix[0][1] != matrix[1][0]:
        raise ValueError("SBM link matrix must be symmetric")
    return matrix


LinkMatrix = Annotated[list[list[float]], AfterValidator(_check_link_matrix)]


class SimDesign(BaseModel):
    """Random-graph design for one simulated dataset (m is the total sample size)."""
    model: GraphModel = GraphModel.SMALL_WORLD
    survival_case: Optional[SurvivalCase] = None
    m: int = Field(default=100, ge=2)
    n: int = Field(default=100, ge=2)
    seed: int = 0
    minority_fraction: Optional[float] = Field(default=None, gt=0, lt=1)

    rewire_p0: float = Field(default=0.05, ge=0, le=1)
    rewire_p1: float = Field(default=0.07, ge=0, le=1)
    lattice_radius: int = Field(default=2, ge=1)
    sbm_link0: LinkMatrix = [[0.05, 0.15], [0.15, 0.05]]
    sbm_link1: LinkMatrix = [[0.1, 0.15], [0.15, 0.05]]
    er_parent_p: float = Field(default=0.8, ge=0, le=1)
    corr_rho: float = Field(default=0.8, ge=0, le=1)
    pa_power0: float = Field(default=0.6, gt=0)
    pa_power1: float = Field(default=1.4, gt=0)
    er_p0: float = Field(default=0.3, ge=0, le=1)
    er_p1: float = Field(default=0.7, ge=0, le=1)

    @model_validator(mode="after")
    def _check_design(self):
        if self.minority_fraction is None and self.m % 2:
            raise ValueError(f"two-class designs need an even m, got {self.m}")
        if self.model is GraphModel.SBM and self.n % 2:
            raise ValueError(f"SBM needs an even node count, got {self.n}")
        return self


# ============== Experiment Configuration ==============

READ_TASKS = {Task.DISTANCES, Task.CLASSIFY, Task.OCC, Task.SURVIVAL}


class ExperimentConfig(BaseModel):
    """One CLI/API run: task, data, kernel, sampler and evaluation settings."""
    model_config = ConfigDict(extra="forbid")

    task: Task
    dataset: Optional[Path] = None
    out: Path = Path("results")
    seed: int = 0
    n_jobs: int = Field(default_factory=_setting("n_jobs"), ge=1)

    # Kernel
    kernel: KernelChoice = KernelChoice.GP_LAMBDA
    laplacian: LaplacianVariant = LaplacianVariant.NORMALIZED
    rw_steps: int = Field(default_factory=_setting("rw_steps"), ge=0)
    rw_decay: float = Field(default_factory=_setting("rw_decay"), gt=0)
    rw_normalize: bool = Field(default_factory=_setting("rw_normalize"))
    binarize_cutoff: Optional[float] = None

    # Sampler
    n_samples: int = Field(default_factory=_setting("n_samples"), ge=1)
    burn_in: int = Field(default_factory=_setting("burn_in"), ge=0)
    thin: int = Field(default_factory=_setting("thin"), ge=1)
    ess_refreshes: int = Field(default_factory=_setting("ess_refreshes"), ge=0)
    alpha_sigma: float = Field(default_factory=_setting("alpha_sigma"), gt=0)
    beta_sigma: float = Field(default_factory=_setting("beta_sigma"), gt=0)
    alpha_ell: float = Field(default_factory=_setting("alpha_ell"), gt=0)
    beta_ell: float = Field(default_factory=_setting("beta_ell"), gt=0)
    predict_mode: PredictMode = Field(default_factory=lambda: PredictMode(get_settings().predict_mode))

    # Evaluation
    evaluation: EvaluationScheme = EvaluationScheme.SPLIT
    test_fraction: float = Field(default=0.25, gt=0, lt=1)
    folds: int = Field(default=10, ge=2)
    replicates: int = Field(default=1, ge=1)
    occ_train_label: int = 1
    occ_training: OccTraining = OccTraining.ONE_CLASS

    # Survival
    alpha_omega: float = Field(default_factory=_setting("alpha_omega"), gt=0)
    beta_omega: float = Field(default_factory=_setting("beta_omega"), gt=0)
    survival_grid_points: int = Field(default_factory=_setting("survival_grid_points"), ge=2)
    surface_draws: int = Field(default_factory=_setting("surface_draws"), ge=1)

    # Simulation
    model: GraphModel = GraphModel.SMALL_WORLD
    survival_case: Optional[SurvivalCase] = None
    m: int = Field(default=100, ge=2)
    n: int = Field(default=100, ge=2)
    minority_fraction: Optional[float] = Field(default=None, gt=0, lt=1)
    lattice_radius: int = Field(default=2, ge=1)

    @field_validator("occ_train_label")
    @classmethod
    def _check_label(cls, value: int) -> int:
        if value not in (-1, 1):
            raise ValueError("occ_train_label must be -1 or +1")
        return value

    @model_validator(mode="after")
    def _check_paths(self):
        if self.task in READ_TASKS:
            if self.dataset is None:
                raise ValueError(f"task '{self.task.value}' needs a dataset path")
            if not Path(self.dataset).exists():
                raise ValueError(f"dataset path does not exist: {self.dataset}")
        if self.n_samples <= self.burn_in:
            raise ValueError(
                f"n_samples ({self.n_samples}) must exceed burn_in ({self.burn_in})"
            )
        return self

    def distance_kind(self) -> DistanceKind:
        """Distance matrix implied by the kernel choice (GP-RW uses none)."""
        if self.kernel is KernelChoice.GP_F:
            return DistanceKind.FROBENIUS
        return {
            LaplacianVariant.LAPLACIAN: DistanceKind.SPECTRAL_LAPLACIAN,
            LaplacianVariant.NORMALIZED: DistanceKind.SPECTRAL_NORMALIZED,
            LaplacianVariant.SIGNED: DistanceKind.SPECTRAL_SIGNED,
        }[self.laplacian]

    def classifier_config(self, seed: Optional[int] = None) -> ClassifierConfig:
        return ClassifierConfig(
            alpha_sigma=self.alpha_sigma,
            beta_sigma=self.beta_sigma,
            alpha_ell=self.alpha_ell,
            beta_ell=self.beta_ell,
            n_samples=self.n_samples,
            burn_in=self.burn_in,
            thin=self.thin,
            ess_refreshes=self.ess_refreshes,
            seed=seed,
        )

    def survival_config(self, seed: Optional[int] = None) -> SurvivalConfig:
        return SurvivalConfig(
            **self.classifier_config(seed).model_dump(),
            alpha_omega=self.alpha_omega,
            beta_omega=self.beta_omega,
            grid_points=self.survival_grid_points,
            surface_draws=self.surface_draws,
        )

    def sim_design(self) -> SimDesign:
        return SimDesign(
            model=self.model,
            survival_case=self.survival_case,
            m=self.m,
            n=self.n,
            seed=self.seed,
            minority_fraction=self.minority_fraction,
            lattice_radius=self.lattice_radius,
        )


# ============== Dataset Models ==============

class DatasetManifest(BaseModel):
    """manifest.json written next to a dataset's graph files."""
    kind: str  # "classification" or "survival"
    m: int
    n: int
    graph_files: list[str]
    has_labels: bool = False
    has_times: bool = False
    covariate_names: list[str] = []
    design: Optional[SimDesign] = None
    seed: Optional[int] = None
    policies: dict[str, str] = {}


# ============== Report Models ==============

class ReplicateResult(BaseModel):
    """Test-set metrics for one replicate or fold."""
    replicate: int
    fold: int
    n_test: int
    accuracy: Optional[float] = None
    auc: Optional[float] = None
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    skipped: bool = False
    note: str = ""
    runtime_s: float = 0.0


class EvalReport(BaseModel):
    """Aggregated accuracy/AUC over replicates or folds."""
    replicates: list[ReplicateResult]
    mean_accuracy: Optional[float] = None
    sd_accuracy: Optional[float] = None
    mean_auc: Optional[float] = None
    sd_auc: Optional[float] = None
    skipped: int = 0
    runtime_s: float = 0.0


class TaskResult(BaseModel):
    """Summary returned by the runner to the CLI and the API."""
    task: Task
    outputs: list[str]
    summary: dict[str, Optional[float | str | int]] = {}
    report: Optional[EvalReport] = None


# ============== API Models ==============

class DistanceRequest(BaseModel):
    """Request body for computing a distance matrix over posted graphs."""
    graphs: list[list[list[float]]] = Field(..., min_length=2)
    kind: DistanceKind = DistanceKind.SPECTRAL_NORMALIZED


class DistanceResponse(BaseModel):
    kind: DistanceKind
    m: int
    distances: list[list[float]]


class HealthResponse(BaseModel):
    """Health check response."""
    status: str
    numpy_version: str
    scipy_version: str
    networkx_version: str
    n_jobs: int
    version: str = "1.0.0"


class ErrorResponse(BaseModel):
    """Standard error response."""
    error: str
    detail: Optional[str] = None
    status_code: int
