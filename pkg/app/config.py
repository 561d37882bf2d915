from pydantic_settings import BaseSettings

# Defaults shared by the CLI (which reads no environment) and the HTTP service.
DEFAULT_WINDOW = 80
DEFAULT_ALPHA = 0.01
DEFAULT_OBS_NOISE = 1e-6
DEFAULT_THETA0 = (0.01, 0.1, 0.0)
DEFAULT_MAX_ITER = 4000
DEFAULT_XTOL = 1e-6
DEFAULT_FTOL = 1e-9
DEFAULT_VARIANCE_FLOOR = 1e-12
DEFAULT_SEPARATOR = ","
DIVERGENCE_SENTINEL = -1e300


class Settings(BaseSettings):
    OBS_NOISE: float = DEFAULT_OBS_NOISE
    WINDOW: int = DEFAULT_WINDOW
    ALPHA: float = DEFAULT_ALPHA
    THETA0_TVAR1: list[float] = list(DEFAULT_THETA0)
    MAX_ITER: int = DEFAULT_MAX_ITER
    XTOL: float = DEFAULT_XTOL
    FTOL: float = DEFAULT_FTOL
    CSV_SEPARATOR: str = DEFAULT_SEPARATOR
    LOG_LEVEL: str = "INFO"

    model_config = {
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "extra": "allow"
    }

settings = Settings()
