"""Loss weighting and its hold-then-ramp schedule.

Training starts fully supervised by the vertex terms; after a hold of
``warmup_steps`` the weight mass shifts linearly onto the rendering
group over ``ramp_steps``:

    step < warmup                sigma1' = 0,       sigma4' = sigma4
    warmup <= step < warmup+ramp linear interpolation
    step >= warmup+ramp          sigma1' = sigma1,  sigma4' = 0

sigma2 and sigma3 stay fixed throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..diffcore import Tensor, ops
from ..errors import ContractViolation


@dataclass(frozen=True)
class LossWeights:
    sigma1: float = 1.0
    sigma2: float = 0.2
    sigma3: float = 0.001
    sigma4: float = 1.0
    warmup_steps: int = 40
    ramp_steps: int = 40

    def __post_init__(self):
        if self.warmup_steps < 0 or self.ramp_steps < 0:
            raise ContractViolation("schedule step counts must be nonnegative")


@dataclass
class LossTerms:
    """Computed loss values; leave a field None when its group is off."""

    pixel: Optional[Tensor] = None
    identity: Optional[Tensor] = None
    adversarial: Optional[Tensor] = None
    vertex_coarse: Optional[Tensor] = None
    vertex_detail: Optional[Tensor] = None


def sigmas_at(weights: LossWeights, step: int) -> tuple[float, float, float, float]:
    """Effective (sigma1, sigma2, sigma3, sigma4) at a training step."""
    if step < 0:
        raise ContractViolation(f"step must be nonnegative, got {step}")
    if step < weights.warmup_steps:
        t = 0.0
    elif weights.ramp_steps == 0:
        t = 1.0
    else:
        t = min((step - weights.warmup_steps) / weights.ramp_steps, 1.0)
    return (t * weights.sigma1, weights.sigma2, weights.sigma3,
            (1.0 - t) * weights.sigma4)


def _require(value: Optional[Tensor], name: str) -> Tensor:
    if value is None:
        raise ContractViolation(f"{name} term required by the active schedule")
    return value


def total_loss(terms: LossTerms, weights: LossWeights, step: int) -> Tensor:
    """Weighted sum of the loss groups at a step.

    Groups with a zero weight are skipped entirely, not multiplied by
    zero, so their gradients are exactly absent rather than numerically
    tiny.
    """
    s1, s2, s3, s4 = sigmas_at(weights, step)
    parts = []
    if s1 != 0.0:
        group = _require(terms.pixel, "pixel")
        if s2 != 0.0:
            group = ops.add(group, ops.mul(ops.constant(s2),
                                           _require(terms.identity, "identity")))
        if s3 != 0.0:
            group = ops.add(group, ops.mul(ops.constant(s3),
                                           _require(terms.adversarial, "adversarial")))
        parts.append(ops.mul(ops.constant(s1), group))
    if s4 != 0.0:
        group = ops.add(_require(terms.vertex_coarse, "vertex_coarse"),
                        _require(terms.vertex_detail, "vertex_detail"))
        parts.append(ops.mul(ops.constant(s4), group))
    if not parts:
        return ops.constant(0.0)
    out = parts[0]
    for p in parts[1:]:
        out = ops.add(out, p)
    return out
