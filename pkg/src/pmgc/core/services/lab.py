"""
Cohesion lab: optimize the cohesion losses directly over free graph parameters and check the collapse /
no-collapse behaviour against closed forms.

With the simple loss every dynamic graph is pulled onto the static one, so the optimum is collapse. With the
contrastive loss the uniform case (all dynamic graphs equal to the static one) costs k log k and the homogeneous
case (all dynamic graphs equal, at squared distance c^2 from the static one) costs k log(1 + (k - 1) e^(c^2 / tau));
both are beaten by keeping the dynamic graphs apart.
"""

import logging
import math
from collections.abc import Iterable
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel

from pmgc.core import numeric as nx
from pmgc.core.errors import ConfigError, NonFiniteError
from pmgc.core.graph import GraphSet, cohesion_loss, cohesion_loss_simple, generate_graph, graph_distance
from pmgc.core.models import LabConfig, LabReport, LabSample
from pmgc.core.numeric import Tensor
from pmgc.core.optim import AdamState, adam_step
from pmgc.core.types import LabInit, LabParameterization, LossKind, Matrix, ParamStore

logger = logging.getLogger(__name__)

CLOSED_FORM_NODES = 4
CLOSED_FORM_TOLERANCE = 1e-9


class ClosedFormCheck(BaseModel):
    case: str
    k: int
    c: float
    closed_form: float
    direct: float

    @property
    def error(self) -> float:
        return abs(self.closed_form - self.direct)


class Check(BaseModel):
    name: str
    passed: bool
    detail: str
    expected_failure: bool = False  # reported outcome that demonstrates a known limitation


class Verification(BaseModel):
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.expected_failure)


def uniform_case_loss(k: int) -> float:
    """Cohesion loss when every dynamic graph equals the static graph: k log k."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    return k * math.log(k)


def homogeneous_case_loss(k: int, c: float, tau: float = 1.0) -> float:
    """Cohesion loss when all k dynamic graphs coincide at Frobenius distance c from the static graph."""
    if k < 2 or c < 0:
        raise ConfigError(f"need k >= 2 and c >= 0, got k={k}, c={c}")
    return k * math.log1p((k - 1) * math.exp(c * c / tau))


def closed_form_static() -> Matrix:
    """Unit diagonal, 0.5 elsewhere."""
    base = np.full((CLOSED_FORM_NODES, CLOSED_FORM_NODES), 0.5)
    np.fill_diagonal(base, 1.0)
    return base


def homogeneous_graph(c: float) -> Matrix:
    """
    The static graph with every off-diagonal entry lowered by the same amount, at squared distance c^2 from it.

    The result stays symmetric with entries in [0, 1].

    Raises:
        ConfigError: If c is negative or too large to reach inside [0, 1].
    """
    off_diagonal = ~np.eye(CLOSED_FORM_NODES, dtype=bool)
    entries = int(off_diagonal.sum())
    if not 0.0 <= c <= 0.5 * math.sqrt(entries):
        raise ConfigError(f"closed-form distance must lie in [0, {0.5 * math.sqrt(entries):.4f}], got {c}")
    graph = closed_form_static()
    graph[off_diagonal] -= c / math.sqrt(entries)
    return graph


def closed_form_check(ks: Iterable[int], cs: Iterable[float]) -> list[ClosedFormCheck]:
    """Evaluate the contrastive cohesion loss on explicit graphs built for the uniform and homogeneous cases."""
    base = closed_form_static()
    cs = list(cs)
    checks: list[ClosedFormCheck] = []
    for k in ks:
        uniform = GraphSet(dynamic=Tensor(np.stack([base] * k)), static=Tensor(base))
        checks.append(
            ClosedFormCheck(
                case="uniform", k=k, c=0.0, closed_form=uniform_case_loss(k), direct=cohesion_loss(uniform, 1.0).item()
            )
        )
        for c in cs:
            homogeneous = GraphSet(dynamic=Tensor(np.stack([homogeneous_graph(c)] * k)), static=Tensor(base))
            checks.append(
                ClosedFormCheck(
                    case="homogeneous",
                    k=k,
                    c=c,
                    closed_form=homogeneous_case_loss(k, c),
                    direct=cohesion_loss(homogeneous, 1.0).item(),
                )
            )
    return checks


def init_lab_params(config: LabConfig) -> ParamStore:
    rng = np.random.default_rng(config.seed)
    n, s, k = config.n_nodes, config.samples, config.k
    match config.parameterization:
        case LabParameterization.COSINE:
            static = rng.normal(size=(n, config.hidden))
            dynamic = rng.normal(size=(s, k, n, config.hidden))
        case LabParameterization.RAW:
            static = rng.uniform(size=(n, n))
            dynamic = rng.uniform(size=(s, k, n, n))
    if config.init is LabInit.UNIFORM:
        dynamic = np.broadcast_to(static, dynamic.shape).copy()
    return {"dynamic": dynamic, "static": static}


def lab_graphs(params: dict[str, Tensor], parameterization: LabParameterization) -> GraphSet:
    match parameterization:
        case LabParameterization.COSINE:
            return GraphSet(dynamic=generate_graph(params["dynamic"]), static=generate_graph(params["static"]))
        case LabParameterization.RAW:
            return GraphSet(dynamic=_raw_graph(params["dynamic"]), static=_raw_graph(params["static"]))


def _raw_graph(raw: Tensor) -> Tensor:
    return nx.clip((raw + nx.transpose(raw)) * 0.5, 0.0, 1.0)


def lab_loss(graphs: GraphSet, config: LabConfig) -> Tensor:
    """Per-sample loss, shape (samples,)."""
    match config.loss_kind:
        case LossKind.FULL:
            return cohesion_loss(graphs, config.tau)
        case LossKind.SIMPLE:
            return cohesion_loss_simple(graphs)


def run_lab(config: LabConfig) -> LabReport:
    """
    Adam on the sum of per-sample losses. A non-finite loss or gradient stops the run; the report then
    covers the steps completed so far and has `diverged` set.
    """
    params = init_lab_params(config)
    state = AdamState(learning_rate=config.learning_rate)
    trajectory: list[float] = []
    diverged = False
    evaluated = params  # last parameters with a finite loss
    for step in range(config.steps + 1):
        tensors = nx.leaves(params)
        per_sample = lab_loss(lab_graphs(tensors, config.parameterization), config)
        value = float(per_sample.value.mean())
        if not math.isfinite(value):
            logger.warning("lab diverged at step %d", step)
            diverged = True
            break
        trajectory.append(value)
        evaluated = params
        if step == config.steps:
            break
        nx.sum_(per_sample).backward()
        grads = {name: t.grad if t.grad is not None else np.zeros_like(t.value) for name, t in tensors.items()}
        try:
            params, state = adam_step(params, grads, state)
        except NonFiniteError:
            logger.warning("lab gradient became non-finite at step %d", step)
            diverged = True
            break

    samples = _sample_stats(evaluated, config)
    logger.info(
        "lab %s/%s seed %d: loss %.6g -> %.6g",
        config.loss_kind,
        config.parameterization,
        config.seed,
        trajectory[0] if trajectory else math.nan,
        trajectory[-1] if trajectory else math.nan,
    )
    return LabReport(
        config=config,
        trajectory=trajectory,
        max_static_distance=max(s.max_static_distance for s in samples),
        min_pairwise_distance=min(s.min_pairwise_distance for s in samples),
        per_sample=samples,
        uniform_reference=uniform_case_loss(config.k),
        diverged=diverged,
    )


def _sample_stats(params: ParamStore, config: LabConfig) -> list[LabSample]:
    graphs = lab_graphs(nx.leaves(params, requires_grad=False), config.parameterization)
    losses = lab_loss(graphs, config).value
    to_static = graph_distance(graphs.dynamic, graphs.static).value  # (samples, k)
    dynamic = graphs.dynamic.value
    pairwise: Matrix = np.sum((dynamic[:, :, None] - dynamic[:, None, :]) ** 2, axis=(-2, -1))  # (samples, k, k)
    off_diagonal = ~np.eye(config.k, dtype=np.bool_)
    return [
        LabSample(
            loss=float(losses[s]),
            max_static_distance=float(to_static[s].max()),
            min_pairwise_distance=float(pairwise[s][off_diagonal].min()),
        )
        for s in range(config.samples)
    ]


def write_trajectory(report: LabReport, path: Path) -> None:
    frame = pd.DataFrame({"step": np.arange(len(report.trajectory)), "loss": report.trajectory})
    frame.to_csv(path, index=False, lineterminator="\n")


def verify_propositions(
    base: LabConfig,
    seeds: Iterable[int],
    collapse_tolerance: float = 1e-2,
    loss_margin: float = 0.1,
    diversity_floor: float = 0.05,
) -> Verification:
    """
    Run the lab for both loss kinds over the seeds and check:

    - collapse: simple loss ends with every dynamic graph within `collapse_tolerance` (Frobenius) of the static one
    - no collapse: contrastive loss ends below k log k - `loss_margin` with every pair of dynamic graphs
      at squared distance above `diversity_floor`
    - uniform start: contrastive loss at the uniform initialization equals k log k
    - closed forms: direct evaluation matches the uniform and homogeneous closed forms

    The simple loss is also checked against the diversity floor; its failure is the expected collapse.
    """
    seeds = list(seeds)
    if not seeds:
        raise ConfigError("at least one seed is required")
    simple = [run_lab(base.model_copy(update={"loss_kind": LossKind.SIMPLE, "seed": s})) for s in seeds]
    full = [run_lab(base.model_copy(update={"loss_kind": LossKind.FULL, "seed": s})) for s in seeds]
    reference = uniform_case_loss(base.k)

    collapse_norms = [math.sqrt(r.max_static_distance) for r in simple]
    checks = [
        Check(
            name="Prop1",
            passed=all(not r.diverged for r in simple) and max(collapse_norms) < collapse_tolerance,
            detail=f"max |A_i - A_s|_F per seed {_fmt(collapse_norms)} < {collapse_tolerance}",
        ),
        Check(
            name="Prop2-3",
            passed=all(
                not r.diverged and r.final_loss < reference - loss_margin and r.min_pairwise_distance > diversity_floor
                for r in full
            ),
            detail=(
                f"final loss {_fmt([r.final_loss for r in full])} < {reference - loss_margin:.6f}, "
                f"min pairwise distance {_fmt([r.min_pairwise_distance for r in full])} > {diversity_floor}"
            ),
        ),
    ]

    uniform_start = run_lab(base.model_copy(update={"loss_kind": LossKind.FULL, "init": LabInit.UNIFORM, "steps": 1}))
    checks.append(
        Check(
            name="uniform-start",
            passed=abs(uniform_start.initial_loss - reference) < CLOSED_FORM_TOLERANCE,
            detail=f"loss at uniform initialization {uniform_start.initial_loss:.12f}, k log k = {reference:.12f}",
        )
    )

    closed = closed_form_check((2, 3, 5), (0.0, 0.5, 1.0))
    worst = max(closed, key=lambda c: c.error)
    checks.append(
        Check(
            name="closed-form",
            passed=worst.error < CLOSED_FORM_TOLERANCE,
            detail=f"{len(closed)} cases, worst error {worst.error:.3g} ({worst.case}, k={worst.k}, c={worst.c})",
        )
    )

    simple_diversity = [r.min_pairwise_distance for r in simple]
    checks.append(
        Check(
            name="simple-loss-diversity",
            passed=min(simple_diversity) > diversity_floor,
            detail=f"min pairwise distance {_fmt(simple_diversity)}; collapse under the simple loss is expected",
            expected_failure=True,
        )
    )
    return Verification(checks=checks)


def _fmt(values: list[float]) -> str:
    return "[" + ", ".join(f"{v:.4g}" for v in values) + "]"
