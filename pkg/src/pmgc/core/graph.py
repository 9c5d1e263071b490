"""
Graph structure learning: k dynamic graphs per window, one static graph from node embeddings,
and the cohesion losses that tie them together.

Every function accepts arbitrary leading batch axes. Head-indexed quantities keep the head on the
axis just before the node axes, e.g. heads are (..., k, N, d) and dynamic graphs (..., k, N, N).
"""

import logging
from dataclasses import dataclass

import numpy as np

from pmgc.core import numeric as nx
from pmgc.core.errors import ConfigError, ShapeError
from pmgc.core.numeric import Tensor
from pmgc.core.types import Matrix

logger = logging.getLogger(__name__)

EPS_NORM = 1e-12


@dataclass(slots=True)
class GraphDiagnostics:
    zero_norm_rows: int = 0  # rows regularized by EPS_NORM since the last reset

    def reset(self) -> None:
        self.zero_norm_rows = 0


diagnostics = GraphDiagnostics()


@dataclass(frozen=True, slots=True)
class GraphSet:
    dynamic: Tensor  # (..., k, N, N)
    static: Tensor  # (N, N)

    @property
    def k(self) -> int:
        return self.dynamic.shape[-3]


def encode_window(window: Tensor | Matrix, params: dict[str, Tensor], k: int) -> Tensor:
    """
    Two-layer row-wise network w -> k*d -> k*d with a relu in between, split into k heads.

    Head i is the contiguous column block [i*d, (i+1)*d) of the encoder output.
    Returns a tensor of shape (..., k, N, d).
    """
    window = nx.as_tensor(window)
    w1, b1, w2, b2 = (params[f"encoder.{n}"] for n in ("w1", "b1", "w2", "b2"))
    if window.shape[-1] != w1.shape[0]:
        raise ShapeError(f"window width {window.shape[-1]} does not match encoder input {w1.shape[0]}")
    out = nx.relu(window @ w1 + b1) @ w2 + b2
    width = out.shape[-1]
    if width % k:
        raise ShapeError(f"encoder width {width} is not divisible by k={k}")
    heads = nx.reshape(out, (*out.shape[:-1], k, width // k))
    return nx.moveaxis(heads, -2, -3)


def generate_graph(H: Tensor | Matrix) -> Tensor:
    """
    Cosine similarity graph: A*_ij = <H_i, H_j> / (|H_i| |H_j| + eps), A = relu(A*).

    Zero-norm rows produce zero rows and columns instead of failing; they are counted in `diagnostics`.
    """
    H = nx.as_tensor(H)
    norm = nx.row_norm(H)
    zero_rows = int(np.count_nonzero(norm.value == 0))
    if zero_rows:
        diagnostics.zero_norm_rows += zero_rows
        logger.debug("cosine graph: %d zero-norm rows regularized", zero_rows)
    gram = H @ nx.transpose(H)
    denom = norm @ nx.transpose(norm) + EPS_NORM
    return nx.relu(gram * nx.reciprocal(denom))


def static_graph(xi: Tensor | Matrix) -> Tensor:
    return generate_graph(xi)


def graph_distance(A: Tensor | Matrix, B: Tensor | Matrix) -> Tensor:
    """Squared Frobenius norm of A - B over the last two axes."""
    A, B = nx.as_tensor(A), nx.as_tensor(B)
    if A.shape[-2:] != B.shape[-2:]:
        raise ShapeError(f"graph shapes differ: {A.shape[-2:]} vs {B.shape[-2:]}")
    return nx.sum_(nx.square(A - B), axis=(-2, -1))


def graph_similarity(A: Tensor | Matrix, B: Tensor | Matrix, tau: float) -> Tensor:
    """h(A, B) = exp(-dist(A, B) / tau), in (0, 1]."""
    _check_tau(tau)
    return nx.exp(graph_distance(A, B) * (-1.0 / tau))


def cohesion_loss(graphs: GraphSet, tau: float) -> Tensor:
    """
    Contrastive cohesion loss, one value per sample (leading axes of `graphs.dynamic`).

    Each dynamic graph is pulled toward the static one and pushed away from the other dynamic graphs:
    sum_i -log(h(As, Ai) / (h(As, Ai) + sum_{j != i} h(Ai, Aj))). Evaluated as
    dist(As, Ai) / tau + logsumexp over {-dist(As, Ai) / tau, -dist(Ai, Aj) / tau for j != i},
    which stays finite when every similarity underflows. k = 1 gives 0.
    """
    _check_tau(tau)
    dynamic = graphs.dynamic
    k = graphs.k
    to_static = graph_distance(dynamic, graphs.static) * (1.0 / tau)  # (..., k)
    pairwise = graph_distance(nx.unsqueeze(dynamic, -3), nx.unsqueeze(dynamic, -4)) * (1.0 / tau)  # (..., k, k)
    eye = np.eye(k)
    logits = nx.unsqueeze(-to_static, -1) * eye - pairwise * (1.0 - eye)
    return nx.sum_(to_static + nx.logsumexp(logits, axis=-1), axis=-1)


def cohesion_loss_simple(graphs: GraphSet) -> Tensor:
    """Sum of distances from each dynamic graph to the static graph, one value per sample."""
    return nx.sum_(graph_distance(graphs.dynamic, graphs.static), axis=-1)


def _check_tau(tau: float) -> None:
    if tau <= 0:
        raise ConfigError(f"temperature must be positive, got {tau}")
