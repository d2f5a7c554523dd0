from pathlib import Path
from typing import Dict, List, Optional, Union

from dotenv import dotenv_values
from pydantic_settings import BaseSettings, SettingsConfigDict

from qdsb.core.exceptions import ConfigurationError, MissingFileError


class Settings(BaseSettings):
    """Process-wide defaults for quantized bridge experiments"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="QDSB_",
        case_sensitive=True,
        extra="ignore",
    )

    # Basic settings
    APP_NAME: str = "qdsb"
    VERSION: str = "1.0.0"
    OUTPUT_DIR: str = "runs"

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # Experiment protocol
    DEFAULT_SEEDS: List[int] = [0, 1, 2, 3, 4]
    N_TRAIN: int = 16384
    N_EVAL: int = 4096
    DATA_SEED: int = 0
    BUDGET_SECONDS: List[float] = [10.0, 60.0]

    # Sinkhorn
    SINKHORN_TOL: float = 1e-9
    SINKHORN_MAX_ITER: int = 10000
    MARGINAL_ATOL: float = 1e-10
    COUPLING_ATOL: float = 1e-8

    # Bridge
    T_MIN: float = 1e-3

    # Anchors
    QUANT_EXPONENT: float = 2.0

    # Evaluation
    MMD_REFERENCE_SIZE: int = 4096
    MMD_BLOCK_SIZE: int = 1024

    # Exact oracles
    EXACT_ORACLE_MAX_N: int = 64
    VALUE_ORACLE_MAX_N: int = 256
    KCENTER_ORACLE_MAX_N: int = 12
    PLAN_ORACLE_MAX_N: int = 32

    # Storage
    CSV_PRECISION: int = 17
    CHECKPOINT_MAGIC: str = "QDSB-CKPT"
    CHECKPOINT_VERSION: int = 1


# Create settings instance
settings = Settings()


def load_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """Read a flat ``key = value`` run configuration file."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"Config file not found: {path}")

    values: Dict[str, Optional[str]] = dotenv_values(path)
    missing = [key for key, value in values.items() if value is None]
    if missing:
        raise ConfigurationError(f"Config keys without a value in {path}: {', '.join(missing)}")
    return {key.strip(): str(value).strip() for key, value in values.items()}


def dump_config_file(values: Dict[str, object], path: Union[str, Path]) -> None:
    """Write resolved configuration back in ``key = value`` form."""
    lines = []
    for key, value in values.items():
        if value is None:
            continue
        if isinstance(value, (list, tuple)):
            value = ",".join(str(item) for item in value)
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")
