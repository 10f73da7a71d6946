from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Numerical tolerances and defaults shared by every service.

    Values can be overridden with ``CIRCLE_IFS_*`` environment variables or a
    ``.env`` file in the working directory. Explicit call arguments always win.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="CIRCLE_IFS_",
        extra="ignore",
    )

    # Map evaluation
    tol_inv: float = 1e-12
    max_bisection_iterations: int = 200
    tol_deriv: float = 1e-6
    monotonicity_grid: int = 1000
    well_conditioned_ratio: float = 0.1

    # Hyperspace
    default_delta: float = 1.0 / 2048
    default_seed_count: int = 64
    cantor_depth: int = 12

    # Certificates
    derivative_samples: int = 512
    safety_margin: float = 0.10
    leaf_search_budget: int = 40

    # Runtime
    max_workers: int = 1
    log_level: str = "INFO"
    api_host: str = "0.0.0.0"
    api_port: int = 8888


@lru_cache
def get_settings() -> Settings:
    return Settings()
