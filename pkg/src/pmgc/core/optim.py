from dataclasses import dataclass, field, replace

import numpy as np

from pmgc.core.errors import NonFiniteError, ShapeError
from pmgc.core.types import ParamStore


@dataclass(frozen=True, slots=True)
class AdamState:
    """Adam moments and step counter. Moments are created lazily with the parameter shapes."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: ParamStore = field(default_factory=dict)
    v: ParamStore = field(default_factory=dict)


def adam_step(params: ParamStore, grads: ParamStore, state: AdamState) -> tuple[ParamStore, AdamState]:
    """
    One bias-corrected Adam update. Inputs are left untouched; new stores are returned.

    Raises:
        ShapeError: If gradient keys or shapes differ from the parameters.
        NonFiniteError: If a gradient holds NaN or Inf (the message names the parameter).
    """
    if list(grads) != list(params):
        missing = set(params) ^ set(grads)
        raise ShapeError(f"gradient keys do not match parameters: {sorted(missing) or 'order differs'}")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter has {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {name}")

    t = state.t + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    new_params: ParamStore = {}
    new_m: ParamStore = {}
    new_v: ParamStore = {}
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        new_params[name] = p - state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
        new_m[name] = m
        new_v[name] = v
    return new_params, replace(state, t=t, m=new_m, v=new_v)
