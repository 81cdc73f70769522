from .config import ConfigError, ExperimentConfig, ExperimentSpec, load_config, load_preset
from .runner import (
    CSV_COLUMNS,
    OracleCheck,
    RunRecord,
    oracle_check,
    read_records,
    run_experiment,
    run_repetition,
    write_records,
)
from .summary import SUMMARY_COLUMNS, relative_differences, summarize, write_summary

__all__ = [
    "CSV_COLUMNS",
    "SUMMARY_COLUMNS",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentSpec",
    "OracleCheck",
    "RunRecord",
    "load_config",
    "load_preset",
    "oracle_check",
    "read_records",
    "relative_differences",
    "run_experiment",
    "run_repetition",
    "summarize",
    "write_records",
    "write_summary",
]
