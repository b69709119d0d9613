"""Finite-difference verification of recorded gradients."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from ..errors import ContractViolation
from .engine import Tape, Tensor, backward


def grad_check(
    fn: Callable[[Tensor], Tensor],
    point: Tensor,
    step: float = 1e-5,
    max_coords: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Compare recorded gradients against central finite differences.

    ``fn`` must map one tensor to a scalar tensor using recorded
    operations.  Returns the worst relative error

        max_i |analytic_i - fd_i| / max(1, |fd_i|)

    over the checked coordinates.  By default every coordinate of
    ``point`` is checked; ``max_coords`` limits the sweep to a random
    subset for large inputs (seeded via ``rng``).
    """
    if step <= 0:
        raise ContractViolation("grad_check: step must be positive")
    x0 = np.array(point.data, dtype=np.float64)
    leaf = Tensor(x0, requires_grad=True)
    with Tape() as tape:
        y = fn(leaf)
    if y.size != 1:
        raise ContractViolation(f"grad_check: fn returned shape {y.shape}, need scalar")
    analytic = backward(tape, y).wrt(leaf).data.reshape(-1)

    n = x0.size
    coords = np.arange(n)
    if max_coords is not None and n > max_coords:
        gen = rng if rng is not None else np.random.default_rng(0)
        coords = np.sort(gen.choice(n, size=max_coords, replace=False))

    # The finite-difference evaluations use non-differentiable points, so
    # nothing is recorded on outer tapes; fn may still open inner tapes of
    # its own (functions that differentiate internally).
    worst = 0.0
    flat = x0.reshape(-1)
    for i in coords:
        saved = flat[i]
        flat[i] = saved + step
        f_plus = float(fn(Tensor(x0)).data.reshape(()))
        flat[i] = saved - step
        f_minus = float(fn(Tensor(x0)).data.reshape(()))
        flat[i] = saved
        fd = (f_plus - f_minus) / (2.0 * step)
        err = abs(analytic[i] - fd) / max(1.0, abs(fd))
        if err > worst:
            worst = err
    return float(worst)


def grad_check_multi(
    fn: Callable[..., Tensor],
    points: dict[str, Tensor],
    step: float = 1e-5,
    max_coords: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> dict[str, float]:
    """Check a multi-argument scalar function one leaf at a time.

    ``fn`` is called with keyword arguments named after ``points``; all
    but the checked leaf are held fixed.
    """
    results = {}
    for name in points:

        def partial(t, _name=name):
            kwargs = {k: (t if k == _name else v) for k, v in points.items()}
            return fn(**kwargs)

        results[name] = grad_check(
            partial, points[name], step=step, max_coords=max_coords, rng=rng
        )
    return results
