from .config import ConfigError, RunConfig, parse_config, parse_config_text
from .records import RunRecord, RunStore
from .reports import emit_reports
from .runner import (
    SCENARIOS,
    ScenarioSelection,
    SweepPoint,
    aggregate_records,
    dp_trend,
    load_run_datasets,
    rad,
    run_dp_sweep,
    run_jobs,
    run_pairs,
    run_single,
    run_sweep,
    select_scenario,
)

__all__ = [
    "ConfigError",
    "RunConfig",
    "RunRecord",
    "RunStore",
    "SCENARIOS",
    "ScenarioSelection",
    "SweepPoint",
    "aggregate_records",
    "dp_trend",
    "emit_reports",
    "load_run_datasets",
    "parse_config",
    "parse_config_text",
    "rad",
    "run_dp_sweep",
    "run_jobs",
    "run_pairs",
    "run_single",
    "run_sweep",
    "select_scenario",
]
