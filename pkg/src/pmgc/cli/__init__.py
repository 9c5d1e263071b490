from . import data, evaluate, lab, model
from .app import app

__all__ = ["app", "data", "evaluate", "lab", "model"]
