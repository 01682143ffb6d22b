"""Application configuration via environment variables."""

from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level defaults, overridable through NETGP_* environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="NETGP_",
        extra="ignore",
    )

    # Application Settings
    api_title: str = "NetGP API"
    api_version: str = "1.0.0"
    log_level: str = "INFO"
    n_jobs: int = 1  # thread workers for distances and replicates

    # Graph validation
    graph_tolerance: float = 1e-10

    # Cholesky jitter ladders, relative to mean(diag K)
    jitter_ladder: tuple[float, ...] = (0.0, 1e-8, 1e-6, 1e-4, 1e-2)
    survival_jitter_ladder: tuple[float, ...] = (1e-6, 1e-4, 1e-2)

    # Random-walk kernel (fixed, never sampled)
    rw_steps: int = 3
    rw_decay: float = 0.01
    rw_normalize: bool = True

    # Gibbs sampler defaults
    n_samples: int = 2000
    burn_in: int = 500
    thin: int = 1
    ess_refreshes: int = 5
    alpha_sigma: float = 1.0
    beta_sigma: float = 1.0
    alpha_ell: float = 1.0
    beta_ell: float = 1.0
    slice_width: float = 1.0
    max_stall_fraction: float = 0.5

    # Prediction
    predict_mode: str = "plugin"
    predict_draws: int = 200

    # Survival
    alpha_omega: float = 1.0
    beta_omega: float = 1.0
    survival_grid_points: int = 100
    surface_draws: int = 200

    # Graph-file binarization for GP-RW on weighted data
    binarize_cutoff: float = 0.45


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
