from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load environment variables from .env file
load_dotenv()


class Settings(BaseSettings):
    """
    Numerical plumbing shared by all services.

    Physics-relevant values (tolerances, friction, amplitudes) are not here;
    they come from the experiment config.
    """
    model_config = SettingsConfigDict(env_prefix="ROUGHSLIP_", env_file=".env", extra="ignore")

    log_level: str = "INFO"
    default_threads: int = 4

    # charts
    mollifier_nodes: int = 256
    inversion_tol: float = 1e-12
    newton_steps: int = 3

    # half-space truncation and lifts
    pad_fraction: float = 0.25
    pad_tolerance: float = 1e-8
    compatibility_tol: float = 1e-3
    lift_width_fraction: float = 0.15
    jet_order: int = 5
    jet_stencil: int = 12
    friction_floor: float = 1e-3

    # norms
    image_shells: int = 4
    dictionary_size: int = 50
    min_besov_bands: int = 4

    # sweeps
    stagnation_floor: float = 1e-13
    non_contraction_limit: int = 3
    residual_tol: float = 1e-4

    # sharpness
    hopf_floor: float = 1e-6


settings = Settings()
