import logging
from collections.abc import Callable

import numpy as np
from pydantic import BaseModel, Field

from pmgc.core.errors import NonFiniteError, UserError
from pmgc.core.numeric import Tensor, leaves, record_relu_masks
from pmgc.core.types import Matrix, ParamStore

logger = logging.getLogger(__name__)

type LossFn = Callable[[dict[str, Tensor]], Tensor]


class GradCheckReport(BaseModel):
    """Agreement between tape gradients and central finite differences."""

    max_rel_error: dict[str, float] = Field(description="Max relative error per parameter")
    skipped: dict[str, int] = Field(description="Entries excluded because every retry and resample crossed a relu kink")
    resampled: dict[str, int] = Field(description="Entries compared at a shifted base point after straddling a kink")
    checked: int = Field(description="Number of compared entries")

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)


def grad_check(
    loss_fn: LossFn,
    params: ParamStore,
    step: float = 1e-4,
    atol: float = 1e-6,
    retries: int = 2,
    resamples: int = 3,
    seed: int = 0,
) -> GradCheckReport:
    """
    Compare the tape gradient of `loss_fn` with (loss(p + h) - loss(p - h)) / 2h for every parameter entry.

    The relative error of an entry is |analytic - numeric| / max(|analytic|, |numeric|, atol).
    When the two evaluations see different relu activation patterns the step straddles a kink; the
    entry is retried with h / 10 up to `retries` times. If it still straddles one, the entry is resampled: its base
    point moves by a seeded offset of 2h to 10h and both gradients are compared there, up to `resamples` times.
    Entries that straddle a kink at every resampled point are excluded and counted in `skipped`.

    Raises:
        UserError: If step is not positive.
        NonFiniteError: If any loss evaluation is not finite.
    """
    if step <= 0:
        raise UserError(f"finite difference step must be positive, got {step}")

    analytic = _analytic(loss_fn, params)
    rng = np.random.default_rng(seed)

    errors: dict[str, float] = {}
    skipped: dict[str, int] = {}
    resampled: dict[str, int] = {}
    checked = 0
    for name, value in params.items():
        worst = 0.0
        skipped[name] = resampled[name] = 0
        for index in range(value.size):
            numeric = _central_difference(loss_fn, params, name, index, step, retries)
            a = float(analytic[name].flat[index])
            attempt = 0
            while numeric is None and attempt < resamples:
                attempt += 1
                offset = rng.choice((-1.0, 1.0)) * rng.uniform(2.0 * step, 10.0 * step)
                shifted = _perturbed(params, name, index, offset)
                numeric = _central_difference(loss_fn, shifted, name, index, step, retries)
                if numeric is not None:
                    a = float(_analytic(loss_fn, shifted)[name].flat[index])
                    resampled[name] += 1
            if numeric is None:
                skipped[name] += 1
                continue
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), atol))
            checked += 1
        errors[name] = worst
    if any(resampled.values()) or any(skipped.values()):
        logger.debug(
            "grad check near relu kinks: resampled %d, skipped %d entries",
            sum(resampled.values()),
            sum(skipped.values()),
        )
    return GradCheckReport(max_rel_error=errors, skipped=skipped, resampled=resampled, checked=checked)


def _analytic(loss_fn: LossFn, params: ParamStore) -> dict[str, Matrix]:
    tensors = leaves(params)
    loss = loss_fn(tensors)
    _require_finite_loss(loss.item())
    loss.backward()
    return {name: t.grad if t.grad is not None else np.zeros_like(t.value) for name, t in tensors.items()}


def _central_difference(loss_fn: LossFn, params: ParamStore, name: str, index: int, step: float, retries: int) -> float | None:
    h = step
    for _ in range(retries + 1):
        plus, plus_masks = _evaluate(loss_fn, _perturbed(params, name, index, h))
        minus, minus_masks = _evaluate(loss_fn, _perturbed(params, name, index, -h))
        if _same_masks(plus_masks, minus_masks):
            return (plus - minus) / (2.0 * h)
        h /= 10.0
    return None


def _perturbed(params: ParamStore, name: str, index: int, delta: float) -> ParamStore:
    moved = params[name].copy()
    moved.flat[index] += delta
    return {**params, name: moved}


def _evaluate(loss_fn: LossFn, params: ParamStore) -> tuple[float, list[Matrix]]:
    with record_relu_masks() as masks:
        value = loss_fn(leaves(params, requires_grad=False)).item()
    _require_finite_loss(value)
    return value, masks


def _same_masks(a: list[Matrix], b: list[Matrix]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b, strict=True))


def _require_finite_loss(value: float) -> None:
    if not np.isfinite(value):
        raise NonFiniteError(f"loss is not finite: {value}")
