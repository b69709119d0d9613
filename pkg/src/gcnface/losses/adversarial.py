"""Wasserstein critic/generator objectives with gradient penalty.

The penalty differentiates the critic's score w.r.t. mixed inputs and
then asks for gradients of that derivative during the optimizer's own
backward pass, so the inner backward runs with ``create_graph=True`` and
its vector-Jacobian products are recorded on the enclosing tape.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..diffcore import Tape, Tensor, backward, ops
from ..errors import ContractViolation

GP_GUARD = 1e-24


def _batch_mean(scores: Sequence[Tensor]) -> Tensor:
    acc = scores[0]
    for s in scores[1:]:
        acc = ops.add(acc, s)
    return ops.mul(acc, ops.constant(1.0 / len(scores)))


def gradient_penalty(critic, mixed: Tensor) -> Tensor:
    """(||d critic / d mixed||_2 - 1)^2 for one interpolated image."""
    with Tape() as inner:
        score = critic(mixed)
    grad = backward(inner, score, create_graph=True).wrt(mixed)
    norm = ops.sqrt(ops.add(ops.sum_(ops.mul(grad, grad)),
                            ops.constant(GP_GUARD)))
    excess = ops.sub(norm, ops.constant(1.0))
    return ops.mul(excess, excess)


def adversarial_loss(
    critic,
    x_real: Sequence[Tensor],
    x_fake: Sequence[Tensor],
    lambda_gp: float = 10.0,
    rng: Optional[np.random.Generator] = None,
) -> tuple[Tensor, Tensor]:
    """Critic and generator losses over a batch of image pairs.

        critic_loss = E[D(fake)] - E[D(real)] + lambda * E[(|grad D| - 1)^2]
        gen_loss    = -E[D(fake)]

    Interpolation points are drawn per pair from ``rng``; the mixed
    images are fresh leaves, so the penalty differentiates the critic
    only.  Pass detached fakes when stepping the critic.
    """
    if len(x_real) == 0 or len(x_real) != len(x_fake):
        raise ContractViolation(
            f"need equal nonzero batches, got {len(x_real)} real / {len(x_fake)} fake"
        )
    if lambda_gp < 0:
        raise ContractViolation(f"lambda_gp must be nonnegative, got {lambda_gp}")
    if rng is None:
        rng = np.random.default_rng(0)

    fake_scores = []
    real_scores = []
    penalties = []
    for real, fake in zip(x_real, x_fake):
        real = ops.as_tensor(real)
        fake = ops.as_tensor(fake)
        if real.shape != fake.shape:
            raise ContractViolation(
                f"image shapes differ: {real.shape} vs {fake.shape}"
            )
        fake_scores.append(critic(fake))
        real_scores.append(critic(real))
        eps = float(rng.uniform())
        mixed = Tensor(eps * real.data + (1.0 - eps) * fake.data,
                       requires_grad=True)
        penalties.append(gradient_penalty(critic, mixed))

    fake_mean = _batch_mean(fake_scores)
    critic_loss = ops.add(
        ops.sub(fake_mean, _batch_mean(real_scores)),
        ops.mul(ops.constant(lambda_gp), _batch_mean(penalties)),
    )
    gen_loss = ops.neg(fake_mean)
    return critic_loss, gen_loss
