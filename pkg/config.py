"""
Application Configuration Module

All configuration values are loaded from environment variables.
Defaults are tuned for desk-scale runs; scenario files and CLI flags
override them per run.
"""

import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


@dataclass
class NumericsConfig:
    """Sampling and quadrature defaults for scenarios that leave them unset."""
    quadrature_nodes: int = 32      # Gauss-Legendre nodes per velocity axis
    sample_count: int = 100         # samples per defect / equivalence report
    seed: int = 20240601
    workers: int = 4                # batch integration threads

    @classmethod
    def from_env(cls) -> "NumericsConfig":
        """Load numerics config from environment variables."""
        return cls(
            quadrature_nodes=int(os.getenv("VLASOVKIT_QUAD_NODES", "32")),
            sample_count=int(os.getenv("VLASOVKIT_SAMPLES", "100")),
            seed=int(os.getenv("VLASOVKIT_SEED", "20240601")),
            workers=int(os.getenv("VLASOVKIT_WORKERS", "4")),
        )


@dataclass
class OutputConfig:
    """Where run artifacts go and how floats are written."""
    output_root: Path
    float_format: str = "%.17g"

    @classmethod
    def from_env(cls) -> "OutputConfig":
        return cls(
            output_root=Path(os.getenv("VLASOVKIT_OUTPUT_ROOT", "runs")),
            float_format=os.getenv("VLASOVKIT_FLOAT_FORMAT", "%.17g"),
        )


@dataclass
class LogConfig:
    """Logging destinations and verbosity."""
    log_dir: Path
    level: str = "INFO"
    json_files: bool = True

    @classmethod
    def from_env(cls) -> "LogConfig":
        return cls(
            log_dir=Path(os.getenv("VLASOVKIT_LOG_DIR", "logs")),
            level=os.getenv("VLASOVKIT_LOG_LEVEL", "INFO").upper(),
            json_files=os.getenv("VLASOVKIT_JSON_LOGS", "1") not in ("0", "false", "False"),
        )
