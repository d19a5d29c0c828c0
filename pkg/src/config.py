"""
configuration module for the continual depth-limited resolving toolkit.
// what this files handles //

- environment variables (and a local .env file)
- solver, value-function and harness settings
- output paths and flat key=value experiment files
"""

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

from dotenv import dotenv_values, load_dotenv

load_dotenv()


def _env_float_tuple(name: str, default: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in os.getenv(name, default).split(",") if v.strip())


def _env_int_tuple(name: str, default: str) -> Tuple[int, ...]:
    return tuple(int(v) for v in os.getenv(name, default).split(",") if v.strip())


@dataclass
class SolverConfig:
    """configuration for CFR+ runs and value functions."""

    iterations: int = field(default_factory=lambda: int(os.getenv("CDLR_ITERATIONS", "1000")))
    vf_kind: str = field(default_factory=lambda: os.getenv("CDLR_VF", "optimal"))
    vf_tolerance: float = field(default_factory=lambda: float(os.getenv("CDLR_VF_TOLERANCE", "1e-6")))
    vf_max_iterations: int = 100000
    best_iterate_every: int = field(
        default_factory=lambda: int(os.getenv("CDLR_BEST_ITERATE_EVERY", "5"))
    )
    value_cache_size: int = 4096

    # Game values (used for gain and exploitability)
    game_value_tolerance: float = 1e-6
    game_value_max_iterations: int = 50000


@dataclass
class PathConfig:
    """configuration for file paths and directories."""

    # Project root directory
    project_root: Path = Path(__file__).parent.parent

    output_dir: Path = field(
        default_factory=lambda: Path(os.getenv("CDLR_OUTPUT_DIR", str(Path(__file__).parent.parent / "outputs")))
    )
    manifest_name: str = "manifest.json"


@dataclass
class LoggingConfig:
    """Configuration for structured logging."""

    level: str = field(default_factory=lambda: os.getenv("LOG_LEVEL", "INFO"))
    format_type: str = field(default_factory=lambda: os.getenv("LOG_FORMAT", "json"))  # json or text
    log_file: Optional[str] = field(default_factory=lambda: os.getenv("LOG_FILE"))


@dataclass
class HarnessConfig:
    """defaults for experiment sweeps."""

    p_grid: Tuple[float, ...] = field(
        default_factory=lambda: _env_float_tuple("CDLR_P_GRID", "0.1,0.25,0.5,0.75,0.9")
    )
    cfr_ladder: Tuple[int, ...] = field(
        default_factory=lambda: _env_int_tuple("CDLR_CFR_LADDER", "2,5,10,20,34,50,100,200")
    )
    random_seeds: Tuple[int, ...] = field(default_factory=lambda: _env_int_tuple("CDLR_RANDOM_SEEDS", "0,1,2"))
    workers: int = field(default_factory=lambda: int(os.getenv("CDLR_WORKERS", "1")))
    error_budget: float = 1e-3


@dataclass
class AppConfig:
    """Main application configuration."""

    # Sub-configurations
    solver: SolverConfig = field(default_factory=SolverConfig)
    paths: PathConfig = field(default_factory=PathConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)

    # Application settings
    environment: str = field(default_factory=lambda: os.getenv("ENVIRONMENT", "development"))
    debug: bool = field(default_factory=lambda: os.getenv("DEBUG", "false").lower() == "true")

    # Visualization settings
    figure_size: Tuple[int, int] = (12, 8)
    dpi: int = 150


def read_experiment_file(path: Path) -> Dict[str, str]:
    """
    read a flat key=value experiment file.

    Args:
        path: experiment file (same syntax as .env files, `#` comments allowed)

    Returns:
        mapping of keys to raw string values
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Experiment file not found: {path}")
    return {key: value for key, value in dotenv_values(path).items() if value is not None}


# Global configuration instance
config = AppConfig()
