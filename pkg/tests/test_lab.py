import math

import numpy as np
import pytest

from pmgc.core.errors import ConfigError
from pmgc.core.graph import GraphSet, cohesion_loss
from pmgc.core.models import LabConfig
from pmgc.core.services.lab import (
    CLOSED_FORM_TOLERANCE,
    closed_form_check,
    closed_form_static,
    homogeneous_case_loss,
    homogeneous_graph,
    init_lab_params,
    run_lab,
    uniform_case_loss,
    verify_propositions,
    write_trajectory,
)
from pmgc.core.numeric import Tensor
from pmgc.core.types import LabInit, LabParameterization, LossKind


def test_closed_forms():
    assert uniform_case_loss(1) == 0.0
    assert uniform_case_loss(3) == pytest.approx(3 * math.log(3))
    assert homogeneous_case_loss(3, 0.0) == pytest.approx(uniform_case_loss(3))
    assert homogeneous_case_loss(2, 1.0) == pytest.approx(2 * math.log(1 + math.e))
    assert homogeneous_case_loss(4, 1.0, tau=2.0) > homogeneous_case_loss(4, 0.5, tau=2.0)
    with pytest.raises(ConfigError):
        homogeneous_case_loss(1, 0.5)
    with pytest.raises(ConfigError):
        uniform_case_loss(0)


def test_direct_evaluation_matches_closed_forms():
    checks = closed_form_check((2, 3, 5), (0.0, 0.5, 1.0))
    assert len(checks) == 3 * (1 + 3)
    assert max(c.error for c in checks) < CLOSED_FORM_TOLERANCE


def test_homogeneous_graphs_are_valid_similarity_graphs():
    static = closed_form_static()
    for c in (0.0, 0.5, 1.0, 1.7):
        graph = homogeneous_graph(c)
        assert np.array_equal(graph, graph.T)
        assert graph.min() >= 0.0
        assert graph.max() <= 1.0
        assert np.array_equal(np.diag(graph), np.ones(len(graph)))
        assert np.sum((graph - static) ** 2) == pytest.approx(c * c, abs=1e-12)
    for c in (-0.1, 1.8):
        with pytest.raises(ConfigError):
            homogeneous_graph(c)


def test_homogeneous_loss_exceeds_k_log_k_for_positive_distance():
    for k in range(2, 7):
        for c in (1e-3, 0.1, 0.5, 1.0, 2.0):
            assert homogeneous_case_loss(k, c) > uniform_case_loss(k)
            assert homogeneous_case_loss(k, c, tau=0.5) > uniform_case_loss(k)
        assert homogeneous_case_loss(k, 0.0) == pytest.approx(uniform_case_loss(k), rel=1e-12)
        for c in (0.1, 1.0, 1.7):
            graphs = GraphSet(dynamic=Tensor(np.stack([homogeneous_graph(c)] * k)), static=Tensor(closed_form_static()))
            assert cohesion_loss(graphs, 1.0).item() > uniform_case_loss(k)


def test_uniform_init_starts_at_k_log_k():
    for parameterization in LabParameterization:
        config = LabConfig(k=4, steps=1, init=LabInit.UNIFORM, parameterization=parameterization)
        params = init_lab_params(config)
        assert params["dynamic"].shape[:2] == (1, 4)
        report = run_lab(config)
        assert report.initial_loss == pytest.approx(4 * math.log(4), abs=1e-9)
        assert report.uniform_reference == pytest.approx(4 * math.log(4))
        assert len(report.trajectory) == 2


def test_simple_loss_pulls_graphs_together():
    report = run_lab(LabConfig(loss_kind=LossKind.SIMPLE, steps=200, seed=1))
    assert not report.diverged
    assert report.final_loss < report.initial_loss
    assert report.per_sample[0].loss == pytest.approx(report.final_loss)


def test_contrastive_loss_falls_below_uniform_case():
    report = run_lab(LabConfig(loss_kind=LossKind.FULL, steps=1000, samples=2, seed=2))
    assert not report.diverged
    assert len(report.per_sample) == 2
    assert report.final_loss < report.uniform_reference
    assert report.min_pairwise_distance > 0.0


def test_raw_parameterization_runs(tmp_path):
    report = run_lab(LabConfig(parameterization=LabParameterization.RAW, steps=50, seed=3))
    assert not report.diverged
    assert len(report.trajectory) == 51
    path = tmp_path / "trajectory.csv"
    write_trajectory(report, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "step,loss"
    assert len(lines) == 52
    assert lines[1].startswith("0,")


def test_lab_is_deterministic():
    config = LabConfig(steps=20, seed=5)
    assert run_lab(config) == run_lab(config)


def test_verify_needs_seeds():
    with pytest.raises(ConfigError):
        verify_propositions(LabConfig(steps=1), seeds=[])


@pytest.mark.slow
def test_verify_propositions():
    verification = verify_propositions(LabConfig(), seeds=[0, 1, 2])
    by_name = {c.name: c for c in verification.checks}
    assert set(by_name) == {"Prop1", "Prop2-3", "uniform-start", "closed-form", "simple-loss-diversity"}
    assert verification.passed, [c.detail for c in verification.checks if not c.passed]
    assert by_name["simple-loss-diversity"].expected_failure
    assert not by_name["simple-loss-diversity"].passed
