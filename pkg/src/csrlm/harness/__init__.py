"""Configuration, sweep execution and file output."""

from .config import ConfigError, SweepConfig, config_from_dict, load_config
from .io import OutputExists, SchemaError, read_observables
from .sweep import RunRecord, point_seed, run_point, run_sweep, write_sweep_outputs

__all__ = [
    "ConfigError",
    "OutputExists",
    "RunRecord",
    "SchemaError",
    "SweepConfig",
    "config_from_dict",
    "load_config",
    "point_seed",
    "read_observables",
    "run_point",
    "run_sweep",
    "write_sweep_outputs",
]
