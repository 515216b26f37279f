"""
Configuration module for the histories simulation toolkit.
Loads settings from environment variables and provides centralized config.
"""
import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


@dataclass
class Config:
    """Toolkit configuration loaded from environment variables."""

    # Paths
    BASE_DIR: Path = Path(__file__).parent.parent
    SCENARIO_DIR: Path = Path(__file__).parent / "scenarios" / "data"
    OUTPUT_DIR: Path = Path(os.getenv("HISTORIES_OUTPUT_DIR", str(BASE_DIR / "results")))
    LOGS_DIR: Path = Path(os.getenv("HISTORIES_LOG_DIR", str(BASE_DIR / "logs")))

    # Runs
    DEFAULT_SEED: int = int(os.getenv("HISTORIES_DEFAULT_SEED", "20240601"))
    THREADS: int = int(os.getenv("HISTORIES_THREADS", "1"))
    TRAJECTORY_CHUNK: int = int(os.getenv("HISTORIES_TRAJECTORY_CHUNK", "64"))

    # Numerics
    MAX_HISTORY_STRINGS: int = int(os.getenv("HISTORIES_MAX_STRINGS", "100000"))
    DEFAULT_TOLERANCE: float = float(os.getenv("HISTORIES_TOLERANCE", "1e-8"))
    PROPAGATOR_CACHE_SIZE: int = int(os.getenv("HISTORIES_CACHE_SIZE", "64"))

    # Logging
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    LOG_TO_FILE: bool = os.getenv("HISTORIES_LOG_TO_FILE", "true").lower() == "true"
    LOG_FORMAT: str = "%(asctime)s - %(scenario)s - %(name)s - %(levelname)s - %(message)s"
    LOG_FILE: str = "histories.log"

    def validate(self) -> bool:
        """
        Validate configuration settings.

        Returns:
            bool: True if configuration is valid

        Raises:
            ValueError: If a setting is out of range
        """
        self.OUTPUT_DIR.mkdir(exist_ok=True, parents=True)
        if self.LOG_TO_FILE:
            self.LOGS_DIR.mkdir(exist_ok=True, parents=True)

        if self.THREADS < 1:
            raise ValueError(f"HISTORIES_THREADS must be >= 1, got {self.THREADS}")

        if self.TRAJECTORY_CHUNK < 1:
            raise ValueError(f"HISTORIES_TRAJECTORY_CHUNK must be >= 1, got {self.TRAJECTORY_CHUNK}")

        if self.MAX_HISTORY_STRINGS < 1:
            raise ValueError(f"HISTORIES_MAX_STRINGS must be positive, got {self.MAX_HISTORY_STRINGS}")

        if not 0 < self.DEFAULT_TOLERANCE < 1:
            raise ValueError(f"HISTORIES_TOLERANCE must lie in (0, 1), got {self.DEFAULT_TOLERANCE}")

        if self.DEFAULT_SEED < 0:
            raise ValueError(f"HISTORIES_DEFAULT_SEED must be non-negative, got {self.DEFAULT_SEED}")

        return True

    def __post_init__(self):
        """Post-initialization: convert string paths to Path objects if needed."""
        if not isinstance(self.BASE_DIR, Path):
            self.BASE_DIR = Path(self.BASE_DIR)
        if not isinstance(self.SCENARIO_DIR, Path):
            self.SCENARIO_DIR = Path(self.SCENARIO_DIR)
        if not isinstance(self.OUTPUT_DIR, Path):
            self.OUTPUT_DIR = Path(self.OUTPUT_DIR)
        if not isinstance(self.LOGS_DIR, Path):
            self.LOGS_DIR = Path(self.LOGS_DIR)


# Global configuration instance
config = Config()
