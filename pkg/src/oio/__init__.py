"""Olfactory inertial odometry: odour-source localisation with a simulated 5-DoF arm."""
from .errors import ConfigurationError
from .harness import TrialConfig, run_experiment, run_trial

__all__ = ["ConfigurationError", "TrialConfig", "run_experiment", "run_trial"]
__version__ = "0.1.0"
