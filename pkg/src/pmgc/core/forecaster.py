"""
Prospective multi-graph forecaster.

Context features S = f_e(C) are propagated by two MixHop layers over every graph branch, decoded by
f_d and averaged over branches. GNN weights and the decoder are shared by all branches.
Inputs are windows of shape (..., N, w); a single window works the same as a batch.
"""

from dataclasses import dataclass

import numpy as np

from pmgc.core import numeric as nx
from pmgc.core.errors import ConfigError, ShapeError
from pmgc.core.graph import GraphSet, cohesion_loss, cohesion_loss_simple, encode_window, generate_graph, static_graph
from pmgc.core.models import ModelConfig
from pmgc.core.numeric import Tensor
from pmgc.core.types import InitScheme, Matrix, Mode, ParamStore, Propagation

type Params = dict[str, Tensor] | ParamStore


@dataclass(frozen=True, slots=True)
class WindowSample:
    """One stride-1 window X^t split into context (first w - p ticks) and target (last p ticks)."""

    full: Matrix  # (N, w)
    context: Matrix  # (N, w - p)
    target: Matrix  # (N, p)
    end_tick: int

    @classmethod
    def from_full(cls, full: Matrix, pred_window: int, end_tick: int) -> "WindowSample":
        if not 0 < pred_window < full.shape[-1]:
            raise ShapeError(f"pred_window {pred_window} must be in (0, {full.shape[-1]})")
        split = full.shape[-1] - pred_window
        return cls(full=full, context=full[..., :split], target=full[..., split:], end_tick=end_tick)


@dataclass(frozen=True, slots=True)
class ForecastOutput:
    per_graph: Tensor  # (..., branches, N, p)
    mean: Tensor  # (..., N, p)
    graphs: GraphSet


@dataclass(frozen=True, slots=True)
class LossParts:
    """Per-sample loss components, shape (...)."""

    total: Tensor
    prediction: Tensor
    cohesion: Tensor


def param_shapes(n_channels: int, config: ModelConfig) -> dict[str, tuple[int, int]]:
    """Canonical parameter names and shapes. Biases are 1 x n rows."""
    w, p, d, kd = config.window, config.pred_window, config.hidden, config.k * config.hidden
    return {
        "encoder.w1": (w, kd),
        "encoder.b1": (1, kd),
        "encoder.w2": (kd, kd),
        "encoder.b2": (1, kd),
        "context.w": (w - p, d),
        "context.b": (1, d),
        "gnn.w1": (d, d),
        "gnn.w2": (d, d),
        "decoder.w": (d, p),
        "decoder.b": (1, p),
        "static.xi": (n_channels, d),
    }


def init_params(n_channels: int, config: ModelConfig, seed: int) -> ParamStore:
    """Glorot-uniform weights, zero biases, N(0, 0.1) node embeddings. Each parameter gets its own derived seed."""
    shapes = param_shapes(n_channels, config)
    seeds = np.random.SeedSequence(seed).generate_state(len(shapes))
    params: ParamStore = {}
    for (name, shape), sub_seed in zip(shapes.items(), seeds, strict=True):
        if name.rsplit(".", 1)[1].startswith("b"):
            params[name] = np.zeros(shape)
        elif name == "static.xi":
            params[name] = nx.seeded_init(int(sub_seed), shape, InitScheme.NORMAL)
        else:
            params[name] = nx.seeded_init(int(sub_seed), shape, InitScheme.GLOROT_UNIFORM)
    return params


def check_params(params: ParamStore, n_channels: int, config: ModelConfig) -> None:
    expected = param_shapes(n_channels, config)
    if list(params) != list(expected):
        raise ShapeError(f"parameter names {list(params)} do not match {list(expected)}")
    for name, shape in expected.items():
        nx.require_shape(name, params[name], shape)


def build_graphs(windows: WindowSample | Matrix, params: Params, config: ModelConfig, prospective: bool = True) -> GraphSet:
    """
    k dynamic graphs from the encoded window plus the static graph from the node embeddings.

    With prospective graphing the whole window (target ticks included) feeds the encoder; otherwise
    the target ticks are zeroed so the encoder input keeps width w.
    """
    full = _full(windows)
    t = _tensors(params)
    if not prospective:
        full = full.copy()
        full[..., config.context_window :] = 0.0
    heads = encode_window(full, t, config.k)
    return GraphSet(dynamic=generate_graph(heads), static=static_graph(t["static.xi"]))


def normalize_adjacency(A: Tensor | Matrix, propagation: Propagation = Propagation.ADJACENCY) -> Tensor:
    """D^-1/2 A D^-1/2 with row-sum degrees; zero-degree rows map to zero rows. Laplacian is I minus that."""
    A = nx.as_tensor(A)
    inv_sqrt = nx.inv_sqrt_or_zero(nx.sum_(A, axis=-1))
    normalized = nx.unsqueeze(inv_sqrt, -1) * A * nx.unsqueeze(inv_sqrt, -2)
    if propagation is Propagation.LAPLACIAN:
        return np.eye(A.shape[-1]) - normalized
    return normalized


def mixhop_layer(Z: Tensor | Matrix, A_norm: Tensor | Matrix, W: Tensor | Matrix, beta: float) -> Tensor:
    """beta * Z + (1 - beta) * A_norm Z W."""
    Z, A_norm, W = nx.as_tensor(Z), nx.as_tensor(A_norm), nx.as_tensor(W)
    if A_norm.shape[-1] != Z.shape[-2] or W.shape[-2] != Z.shape[-1] or W.shape[-1] != Z.shape[-1]:
        raise ShapeError(f"mixhop shapes do not conform: Z {Z.shape}, A {A_norm.shape}, W {W.shape}")
    return beta * Z + (1.0 - beta) * (A_norm @ Z @ W)


def forecast(windows: WindowSample | Matrix, params: Params, config: ModelConfig) -> ForecastOutput:
    """Forecast the last p ticks of each window from its context, per the configured mode."""
    full = _full(windows)
    t = _tensors(params)
    if full.shape[-1] != config.window:
        raise ShapeError(f"window width {full.shape[-1]} does not match configured window {config.window}")
    context = full[..., : config.context_window]
    features = context @ t["context.w"] + t["context.b"]

    match config.mode:
        case Mode.STATIC_ONLY:
            static = static_graph(t["static.xi"])
            graphs = GraphSet(dynamic=nx.broadcast_to(static, (*full.shape[:-2], 1, *static.shape)), static=static)
            branches = graphs.dynamic
        case Mode.FULL | Mode.DYNAMIC_ONLY | Mode.SIMPLE_LOSS | Mode.NON_PROSPECTIVE:
            graphs = build_graphs(full, t, config, prospective=config.mode is not Mode.NON_PROSPECTIVE)
            branches = graphs.dynamic
        case Mode.STATIC_DYNAMIC:
            graphs = build_graphs(full, t, config)
            static = nx.broadcast_to(graphs.static, (*full.shape[:-2], 1, *graphs.static.shape))
            branches = nx.concat([graphs.dynamic, static], axis=-3)
        case _:
            raise ConfigError(f"unknown mode: {config.mode}")

    a_norm = normalize_adjacency(branches, config.propagation)
    z = nx.unsqueeze(features, -3)
    z = nx.relu(mixhop_layer(z, a_norm, t["gnn.w1"], config.beta))
    z = mixhop_layer(z, a_norm, t["gnn.w2"], config.beta)
    per_graph = z @ t["decoder.w"] + t["decoder.b"]
    return ForecastOutput(per_graph=per_graph, mean=nx.mean(per_graph, axis=-3), graphs=graphs)


def prediction_loss(out: ForecastOutput, target: Tensor | Matrix) -> Tensor:
    """Mean squared error over the N x p entries of each sample."""
    target = nx.as_tensor(target)
    if out.mean.shape[-2:] != target.shape[-2:]:
        raise ShapeError(f"prediction shape {out.mean.shape} does not match target {target.shape}")
    return nx.mean(nx.square(out.mean - target), axis=(-2, -1))


def total_loss(windows: WindowSample | Matrix, params: Params, config: ModelConfig) -> LossParts:
    """L = L_pred + lambda * L_gc per sample; the cohesion term follows the mode (zero when the mode drops it)."""
    full = _full(windows)
    out = forecast(full, params, config)
    prediction = prediction_loss(out, full[..., config.context_window :])
    match config.mode:
        case Mode.FULL | Mode.NON_PROSPECTIVE:
            cohesion = cohesion_loss(out.graphs, config.tau)
        case Mode.SIMPLE_LOSS:
            cohesion = cohesion_loss_simple(out.graphs)
        case _:
            cohesion = Tensor(np.zeros(prediction.shape))
    return LossParts(total=prediction + config.cohesion_weight * cohesion, prediction=prediction, cohesion=cohesion)


def predict_last(windows: Matrix, params: ParamStore, config: ModelConfig) -> Matrix:
    """Forecast of the final tick of each window, shape (..., N)."""
    return forecast(windows, params, config).mean.value[..., -1]


def _full(windows: WindowSample | Matrix) -> Matrix:
    return windows.full if isinstance(windows, WindowSample) else np.asarray(windows, dtype=np.float64)


def _tensors(params: Params) -> dict[str, Tensor]:
    return {name: nx.as_tensor(value) for name, value in params.items()}
