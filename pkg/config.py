"""Configuration module for the Gaussian blur stack codec.

Runtime knobs only; nothing here changes the bytes of an encoded stack
except where a CLI flag or profile passes the value explicitly.
"""

import logging
import sys
from dataclasses import dataclass


@dataclass
class Config:
    """Base configuration class."""

    # Worker settings
    NUM_WORKERS: int = 1

    # Logging settings
    LOG_LEVEL: str = 'INFO'
    LOG_FORMAT: str = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    # Codec settings
    MID_GREY: int = 128
    CASCADE_SIGMA: float = 64.0
    DEFAULT_QUANT_BITS: int = 6
    DEFAULT_BASE_QUANT_BITS: int = 5
    DEFLATE_LEVEL: int = 9

    # Analysis settings
    NOISE_THRESHOLD: float = 0.6
    NOISE_FLOOR: float = 2.0
    HF_DETAIL_SIGMA: float = 2.0

    # Search settings
    THUMBNAIL_SIZE: int = 64

    @property
    def parallel(self) -> bool:
        """Check if work should be fanned out to worker processes."""
        return self.NUM_WORKERS > 1


def get_config() -> Config:
    """Get the default configuration."""
    return Config()


def configure_logging(level: str = None) -> None:
    """Install the stderr log handler used by the command-line entry point."""
    logging.basicConfig(
        level=getattr(logging, (level or config.LOG_LEVEL).upper(), logging.INFO),
        format=config.LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )


# Global config instance
config = get_config()
