from .config import ExperimentConfig, load_config, make_config
from .experiments import ResultRow, run_experiment

__all__ = ["ExperimentConfig", "ResultRow", "load_config", "make_config", "run_experiment"]
