import math

import numpy as np
import pytest

from pmgc.core import graph
from pmgc.core.errors import ConfigError, ShapeError
from pmgc.core.forecaster import init_params
from pmgc.core.graph import (
    GraphSet,
    cohesion_loss,
    cohesion_loss_simple,
    encode_window,
    generate_graph,
    graph_distance,
    graph_similarity,
)
from pmgc.core.numeric import Tensor, leaves


def test_cosine_graph_values():
    H = np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 3.0], [-1.0, 0.0]])
    A = generate_graph(H).value
    assert A[0, 1] == pytest.approx(1.0)
    assert A[0, 2] == pytest.approx(0.0)
    assert A[0, 3] == 0.0  # negative cosine clipped by relu
    assert np.allclose(np.diag(A), 1.0)
    assert np.array_equal(A, A.T)
    assert A.min() >= 0.0
    assert A.max() <= 1.0


def test_zero_norm_rows_are_regularized():
    graph.diagnostics.reset()
    H = np.array([[0.0, 0.0], [1.0, 1.0]])
    A = generate_graph(H).value
    assert np.all(np.isfinite(A))
    assert np.array_equal(A[0], [0.0, 0.0])
    assert np.array_equal(A[:, 0], [0.0, 0.0])
    assert graph.diagnostics.zero_norm_rows == 1


def test_batched_graphs_match_single(rng):
    H = rng.normal(size=(3, 2, 5, 4))
    batched = generate_graph(H).value
    assert batched.shape == (3, 2, 5, 5)
    assert np.allclose(batched[2, 1], generate_graph(H[2, 1]).value, rtol=0, atol=1e-12)


def test_encode_window_splits_heads(tiny_config, windows):
    params = leaves(init_params(4, tiny_config, seed=0), requires_grad=False)
    heads = encode_window(windows, params, tiny_config.k)
    assert heads.shape == (5, tiny_config.k, 4, tiny_config.hidden)
    out = np.maximum(windows[0] @ params["encoder.w1"].value + params["encoder.b1"].value, 0.0)
    out = out @ params["encoder.w2"].value + params["encoder.b2"].value
    d = tiny_config.hidden
    assert np.allclose(heads.value[0, 1], out[:, d : 2 * d])


def test_encode_window_rejects_wrong_width(tiny_config, windows):
    params = leaves(init_params(4, tiny_config, seed=0), requires_grad=False)
    with pytest.raises(ShapeError):
        encode_window(windows[..., :-1], params, tiny_config.k)
    with pytest.raises(ShapeError):
        encode_window(windows, params, 3)  # 16 columns do not split into 3 heads


def test_distance_and_similarity():
    A = np.zeros((2, 2))
    B = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert graph_distance(A, B).item() == 5.0
    assert graph_similarity(A, A, 1.0).item() == 1.0
    assert graph_similarity(A, B, 2.0).item() == pytest.approx(math.exp(-2.5))
    with pytest.raises(ShapeError):
        graph_distance(A, np.zeros((3, 3)))
    with pytest.raises(ConfigError):
        graph_similarity(A, B, 0.0)


def _graphs(dynamic: list[np.ndarray], static: np.ndarray) -> GraphSet:
    return GraphSet(dynamic=Tensor(np.stack(dynamic)), static=Tensor(static))


def test_cohesion_single_graph_is_zero(rng):
    A = rng.uniform(size=(4, 4))
    assert cohesion_loss(_graphs([A + 0.3], A), 1.0).item() == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("k", [2, 3, 5])
def test_cohesion_uniform_case(rng, k):
    A = rng.uniform(size=(4, 4))
    assert cohesion_loss(_graphs([A] * k, A), 1.0).item() == pytest.approx(k * math.log(k), abs=1e-12)


def test_cohesion_matches_direct_formula(rng):
    tau = 0.7
    static = rng.uniform(size=(3, 3))
    dynamic = [rng.uniform(size=(3, 3)) for _ in range(3)]
    h = lambda a, b: math.exp(-np.sum((a - b) ** 2) / tau)  # noqa: E731
    expected = 0.0
    for i, Ai in enumerate(dynamic):
        others = sum(h(Ai, Aj) for j, Aj in enumerate(dynamic) if j != i)
        expected -= math.log(h(static, Ai) / (h(static, Ai) + others))
    assert cohesion_loss(_graphs(dynamic, static), tau).item() == pytest.approx(expected, rel=1e-12)


def test_cohesion_is_finite_when_similarities_underflow():
    static = np.zeros((3, 3))
    far = [np.full((3, 3), 100.0), np.full((3, 3), -100.0)]
    value = cohesion_loss(_graphs(far, static), 1e-3).item()
    assert math.isfinite(value)
    # distance to static 9e4 / tau per graph, pairwise 3.6e5 / tau, so each term is about log(1) = 0
    assert value == pytest.approx(0.0, abs=1e-6)


def test_cohesion_batched(rng):
    dynamic = rng.uniform(size=(4, 3, 5, 5))
    static = rng.uniform(size=(5, 5))
    batched = cohesion_loss(GraphSet(dynamic=Tensor(dynamic), static=Tensor(static)), 1.0).value
    assert batched.shape == (4,)
    single = cohesion_loss(GraphSet(dynamic=Tensor(dynamic[1]), static=Tensor(static)), 1.0).item()
    assert batched[1] == pytest.approx(single, rel=1e-12)


def test_simple_cohesion(rng):
    static = rng.uniform(size=(3, 3))
    assert cohesion_loss_simple(_graphs([static, static], static)).item() == 0.0
    shifted = static + 0.5
    assert cohesion_loss_simple(_graphs([shifted, static], static)).item() == pytest.approx(9 * 0.25)


def test_cosine_graph_ignores_positive_row_scaling(rng):
    H = rng.normal(size=(6, 4))
    scales = rng.uniform(0.1, 10.0, size=(6, 1))
    assert np.allclose(generate_graph(scales * H).value, generate_graph(H).value, rtol=1e-9, atol=1e-12)


def test_cohesion_ignores_dynamic_graph_order(rng):
    static = rng.uniform(size=(4, 4))
    dynamic = [rng.uniform(size=(4, 4)) for _ in range(4)]
    reordered = [dynamic[i] for i in (2, 0, 3, 1)]
    expected = cohesion_loss(_graphs(dynamic, static), 0.8).item()
    assert cohesion_loss(_graphs(reordered, static), 0.8).item() == pytest.approx(expected, rel=1e-12)
