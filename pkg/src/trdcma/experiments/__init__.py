"""Configuration, scenario runners and the command-line entry point."""
from .config import ExperimentConfig
from .scenarios import (RUNNERS, ScenarioResult, run_bep_sweep, run_calibrate, run_end_to_end,
                        run_mai_traces, run_sir_sweep)

__all__ = ["ExperimentConfig", "RUNNERS", "ScenarioResult", "run_bep_sweep", "run_calibrate",
           "run_end_to_end", "run_mai_traces", "run_sir_sweep"]
