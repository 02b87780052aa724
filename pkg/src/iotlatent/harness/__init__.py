"""Configuration, checkpoints, experiment grid, result tables and CLI."""

from .checkpoint import (
    CheckpointError,
    CheckpointTagError,
    CorruptCheckpointError,
    load_checkpoint,
    save_checkpoint,
)
from .config import ConfigError, ExperimentConfig, load_config
from .grid import derive_seed, prepare_data, run_grid
from .tables import CellResult, ResultTable, emit_table, parse_csv
