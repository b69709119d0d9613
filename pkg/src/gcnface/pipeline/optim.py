"""First-order adaptive-moment optimizer.

Defaults follow the gradient-penalty GAN training recipe: lr 1e-4,
beta1 = 0, beta2 = 0.9.  Parameters are the flat name -> Tensor dicts the
networks expose; ``step`` swaps each tensor's array for the updated one,
which is the sanctioned way to mutate parameters between tape lifetimes.
"""

from __future__ import annotations

import numpy as np

from ..diffcore import Tensor
from ..errors import ContractViolation


class Adam:
    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-4,
        beta1: float = 0.0,
        beta2: float = 0.9,
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise ContractViolation(f"learning rate must be positive, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ContractViolation(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        """One update.  A parameter absent from ``grads`` is treated as
        having zero gradient (its moments still decay)."""
        unknown = set(grads) - set(self.params)
        if unknown:
            raise ContractViolation(f"gradients for unknown parameters {sorted(unknown)}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(p.data)
            elif g.shape != p.data.shape:
                raise ContractViolation(
                    f"gradient shape {g.shape} != parameter shape "
                    f"{p.data.shape} for {name!r}"
                )
            m = self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data = p.data - self.lr * update

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"t": np.array([float(self.t)])}
        for name in self.params:
            out[f"m.{name}"] = self.m[name]
            out[f"v.{name}"] = self.v[name]
        return out

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        if "t" not in arrays:
            raise ContractViolation("optimizer state missing step counter")
        self.t = int(arrays["t"][0])
        for name in self.params:
            for kind, store in (("m", self.m), ("v", self.v)):
                key = f"{kind}.{name}"
                if key not in arrays:
                    raise ContractViolation(f"optimizer state missing {key!r}")
                arr = np.asarray(arrays[key], dtype=np.float64)
                if arr.shape != store[name].shape:
                    raise ContractViolation(
                        f"optimizer state shape {arr.shape} != "
                        f"{store[name].shape} for {key!r}"
                    )
                store[name] = arr.copy()
