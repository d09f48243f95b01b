"""Experiment orchestration: configuration, training, testing, checkpoints."""

from .checkpoint import CheckpointError
from .config import ConfigError, RunConfig, load_config, smoke_config
from .testing import heading_alignment, read_records, run_test
from .training import run_training

__all__ = ["CheckpointError", "ConfigError", "RunConfig", "heading_alignment", "load_config",
           "read_records", "run_test", "run_training", "smoke_config"]
