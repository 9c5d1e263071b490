import numpy as np
import pytest

from pmgc.core.errors import ShapeError
from pmgc.core.forecaster import (
    WindowSample,
    build_graphs,
    check_params,
    forecast,
    init_params,
    mixhop_layer,
    normalize_adjacency,
    param_shapes,
    predict_last,
    total_loss,
)
from pmgc.core.models import ModelConfig
from pmgc.core.types import Mode, Propagation


def test_param_shapes_and_init(tiny_config):
    params = init_params(4, tiny_config, seed=3)
    shapes = param_shapes(4, tiny_config)
    assert list(params) == list(shapes)
    assert {name: p.shape for name, p in params.items()} == shapes
    assert shapes["encoder.w1"] == (12, 16)
    assert shapes["context.w"] == (9, 8)
    assert shapes["decoder.w"] == (8, 3)
    assert not params["encoder.b1"].any()
    assert not params["decoder.b"].any()
    check_params(params, 4, tiny_config)


def test_init_is_deterministic(tiny_config):
    a = init_params(4, tiny_config, seed=11)
    b = init_params(4, tiny_config, seed=11)
    c = init_params(4, tiny_config, seed=12)
    assert all(np.array_equal(a[n], b[n]) for n in a)
    assert not np.array_equal(a["gnn.w1"], c["gnn.w1"])


def test_check_params_rejects_wrong_channel_count(tiny_config):
    with pytest.raises(ShapeError):
        check_params(init_params(4, tiny_config, seed=0), 5, tiny_config)


def test_window_sample_split():
    full = np.arange(20.0).reshape(2, 10)
    sample = WindowSample.from_full(full, pred_window=3, end_tick=9)
    assert sample.context.shape == (2, 7)
    assert np.array_equal(sample.target, full[:, 7:])
    with pytest.raises(ShapeError):
        WindowSample.from_full(full, pred_window=10, end_tick=9)


def test_normalize_adjacency():
    A = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
    norm = normalize_adjacency(A).value
    assert np.allclose(norm[:2, :2], 0.5)
    assert np.array_equal(norm[2], [0.0, 0.0, 0.0])  # zero degree stays zero
    laplacian = normalize_adjacency(A, Propagation.LAPLACIAN).value
    assert np.allclose(laplacian, np.eye(3) - norm)


def test_mixhop_layer(rng):
    Z = rng.normal(size=(4, 3))
    A = rng.uniform(size=(4, 4))
    W = rng.normal(size=(3, 3))
    assert np.allclose(mixhop_layer(Z, A, W, beta=1.0).value, Z)
    assert np.allclose(mixhop_layer(Z, A, W, beta=0.25).value, 0.25 * Z + 0.75 * A @ Z @ W)
    with pytest.raises(ShapeError):
        mixhop_layer(Z, A, rng.normal(size=(2, 3)), beta=0.5)


@pytest.mark.parametrize(
    ("mode", "branches"),
    [
        (Mode.FULL, 2),
        (Mode.STATIC_ONLY, 1),
        (Mode.DYNAMIC_ONLY, 2),
        (Mode.NON_PROSPECTIVE, 2),
        (Mode.STATIC_DYNAMIC, 3),
        (Mode.SIMPLE_LOSS, 2),
    ],
)
def test_forecast_shapes(tiny_config, windows, mode, branches):
    config = tiny_config.model_copy(update={"mode": mode})
    params = init_params(4, config, seed=0)
    out = forecast(windows, params, config)
    assert out.per_graph.shape == (5, branches, 4, 3)
    assert out.mean.shape == (5, 4, 3)
    assert np.allclose(out.mean.value, out.per_graph.value.mean(axis=1))
    assert predict_last(windows, params, config).shape == (5, 4)


def test_single_window_matches_batch(tiny_config, windows):
    params = init_params(4, tiny_config, seed=0)
    batch = total_loss(windows, params, tiny_config)
    single = total_loss(WindowSample.from_full(windows[2], 3, end_tick=11), params, tiny_config)
    assert single.total.value.shape == ()
    assert single.total.item() == pytest.approx(batch.total.value[2], rel=1e-9)


def test_prospective_graphs_see_the_target(tiny_config, windows):
    params = init_params(4, tiny_config, seed=0)
    changed = windows.copy()
    changed[..., -1] += 5.0
    prospective = [build_graphs(w, params, tiny_config).dynamic.value for w in (windows, changed)]
    retrospective = [build_graphs(w, params, tiny_config, prospective=False).dynamic.value for w in (windows, changed)]
    assert not np.allclose(prospective[0], prospective[1])
    assert np.array_equal(retrospective[0], retrospective[1])


def test_cohesion_term_follows_mode(tiny_config, windows):
    for mode in Mode:
        config = tiny_config.model_copy(update={"mode": mode, "cohesion_weight": 0.5})
        parts = total_loss(windows, init_params(4, config, seed=0), config)
        assert np.allclose(parts.total.value, parts.prediction.value + 0.5 * parts.cohesion.value)
        if mode.uses_cohesion:
            assert np.all(parts.cohesion.value > 0)
        else:
            assert not parts.cohesion.value.any()


def test_prediction_loss_is_mean_squared_error(tiny_config, windows):
    params = init_params(4, tiny_config, seed=0)
    out = forecast(windows, params, tiny_config)
    expected = np.mean((out.mean.value - windows[..., -3:]) ** 2, axis=(-2, -1))
    assert np.allclose(total_loss(windows, params, tiny_config).prediction.value, expected)


def test_window_width_mismatch(tiny_config, windows):
    params = init_params(4, tiny_config, seed=0)
    with pytest.raises(ShapeError):
        forecast(windows[..., 1:], params, tiny_config)


def test_model_config_validates_windows():
    with pytest.raises(ValueError, match="pred_window"):
        ModelConfig(window=5, pred_window=5)


def test_mixhop_layer_is_linear_in_z(rng):
    Z1, Z2 = rng.normal(size=(2, 5, 3))
    A = rng.uniform(size=(5, 5))
    W = rng.normal(size=(3, 3))
    combined = mixhop_layer(2.5 * Z1 - 0.75 * Z2, A, W, beta=0.05).value
    separate = 2.5 * mixhop_layer(Z1, A, W, beta=0.05).value - 0.75 * mixhop_layer(Z2, A, W, beta=0.05).value
    assert np.allclose(combined, separate, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("mode", list(Mode))
def test_channel_permutation_is_equivariant(tiny_config, windows, mode):
    config = tiny_config.model_copy(update={"mode": mode})
    params = init_params(4, config, seed=0)
    perm = np.array([2, 0, 3, 1])
    out = forecast(windows, params, config)
    moved = forecast(windows[:, perm], {**params, "static.xi": params["static.xi"][perm]}, config)
    assert np.allclose(moved.mean.value, out.mean.value[:, perm], rtol=1e-9, atol=1e-12)
    assert np.allclose(moved.graphs.dynamic.value, out.graphs.dynamic.value[..., perm, :][..., perm], rtol=1e-9, atol=1e-12)
    assert np.allclose(moved.graphs.static.value, out.graphs.static.value[perm][:, perm], rtol=1e-9, atol=1e-12)


def test_identical_dynamic_graphs_give_identical_branches(tiny_config, windows):
    params = init_params(4, tiny_config, seed=0)
    d, k = tiny_config.hidden, tiny_config.k
    # every head reads the same output columns
    params["encoder.w2"] = np.tile(params["encoder.w2"][:, :d], (1, k))
    params["encoder.b2"] = np.tile(params["encoder.b2"][:, :d], (1, k))
    out = forecast(windows, params, tiny_config)
    dynamic = out.graphs.dynamic.value
    assert np.allclose(dynamic[:, 0], dynamic[:, 1], rtol=0, atol=1e-14)
    assert np.allclose(out.per_graph.value[:, 0], out.per_graph.value[:, 1], rtol=0, atol=1e-12)


def test_static_only_matches_full_when_the_graphs_coincide(tiny_config, windows, rng):
    config = tiny_config.model_copy(update={"k": 1})
    params = init_params(4, config, seed=0)
    # a zero first layer makes every encoded row equal to b2, and equal rows in xi give the same graph
    row = rng.uniform(0.5, 1.5, size=(1, config.hidden))
    params["encoder.w1"] = np.zeros_like(params["encoder.w1"])
    params["encoder.b2"] = row
    params["static.xi"] = np.repeat(row, 4, axis=0)
    full = forecast(windows, params, config)
    static = forecast(windows, params, config.model_copy(update={"mode": Mode.STATIC_ONLY}))
    assert np.allclose(full.graphs.dynamic.value[:, 0], full.graphs.static.value, rtol=0, atol=1e-14)
    assert full.per_graph.shape == static.per_graph.shape
    assert np.allclose(full.mean.value, static.mean.value, rtol=0, atol=1e-12)
