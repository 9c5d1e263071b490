from .experiment import ExperimentResult, ablate, fit, run_experiment, score, sweep
from .trainer import Trainer

__all__ = ["ExperimentResult", "Trainer", "ablate", "fit", "run_experiment", "score", "sweep"]
