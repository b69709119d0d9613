"""Tape-based reverse-mode automatic differentiation.

All values are float64 numpy arrays wrapped in :class:`Tensor`.  Operations
executed while a :class:`Tape` is active are recorded when any input has
``requires_grad`` set; :func:`backward` then walks the recorded entries in
reverse and accumulates vector-Jacobian products.

Every operation's VJP is itself expressed through recorded primitives, so
calling :func:`backward` with ``create_graph=True`` re-records the gradient
computation on any still-active outer tape.  That single level of nesting is
what the gradient-penalty term of the adversarial loss needs; deeper towers
of derivatives are out of scope.

A Tape belongs to one forward execution.  Recording and then discarding a
tape does not change forward values; recording only appends bookkeeping
entries and never mutates tensor data.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..errors import ContractViolation

_UIDS = itertools.count(1)

# Stack of currently active tapes.  An op executed while several tapes are
# active is recorded on all of them, which is what lets an inner
# gradient-penalty tape coexist with the outer training-step tape.
_TAPE_STACK: list["Tape"] = []
_RECORDING = True


class Tensor:
    """A float64 array plus a differentiability flag.

    Tensor data is treated as immutable while any tape referencing it is
    alive.  Parameter updates swap in a fresh array between training steps,
    after the step's tape has been discarded.
    """

    __slots__ = ("data", "requires_grad", "uid")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.uid = next(_UIDS)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractViolation(
                f"item() needs a single-element tensor, got shape {self.shape}"
            )
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Same data, no gradient tracking."""
        return Tensor(self.data, requires_grad=False)

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=self.requires_grad)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Arithmetic sugar; implementations live in ops.py and are attached at
    # import time to avoid a circular import.
    def __add__(self, other):
        return _OPS_HOOK["add"](self, other)

    def __radd__(self, other):
        return _OPS_HOOK["add"](other, self)

    def __sub__(self, other):
        return _OPS_HOOK["sub"](self, other)

    def __rsub__(self, other):
        return _OPS_HOOK["sub"](other, self)

    def __mul__(self, other):
        return _OPS_HOOK["mul"](self, other)

    def __rmul__(self, other):
        return _OPS_HOOK["mul"](other, self)

    def __truediv__(self, other):
        return _OPS_HOOK["div"](self, other)

    def __rtruediv__(self, other):
        return _OPS_HOOK["div"](other, self)

    def __neg__(self):
        return _OPS_HOOK["neg"](self)

    def __pow__(self, p):
        return _OPS_HOOK["power"](self, p)

    def __matmul__(self, other):
        return _OPS_HOOK["matmul"](self, other)


# Filled in by ops.py at import time.
_OPS_HOOK: dict[str, Callable] = {}


class TapeEntry:
    """One recorded operation: inputs, output, and the VJP closure."""

    __slots__ = ("op", "inputs", "output", "vjp")

    def __init__(self, op: str, inputs: tuple[Tensor, ...], output: Tensor, vjp):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.vjp = vjp


class Tape:
    """Ordered record of operations for one forward execution."""

    def __init__(self):
        self.entries: list[TapeEntry] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        top = _TAPE_STACK.pop()
        if top is not self:
            raise RuntimeError("tape stack corrupted: exited out of order")

    def __len__(self) -> int:
        return len(self.entries)


class no_grad:
    """Context manager that suppresses recording entirely."""

    def __enter__(self):
        global _RECORDING
        self._prev = _RECORDING
        _RECORDING = False
        return self

    def __exit__(self, exc_type, exc, tb):
        global _RECORDING
        _RECORDING = self._prev


def record(op: str, inputs: Sequence[Tensor], output: Tensor, vjp) -> None:
    """Mark ``output`` differentiable and append an entry to active tapes.

    No-op when no input requires gradients.  ``vjp`` maps the output
    cotangent to one cotangent (or None) per input, and must be built from
    recorded primitives so nested differentiation works.
    """
    if not any(t.requires_grad for t in inputs):
        return
    output.requires_grad = True
    if _RECORDING and _TAPE_STACK:
        entry = TapeEntry(op, tuple(inputs), output, vjp)
        for tape in _TAPE_STACK:
            tape.entries.append(entry)


class GradientMap:
    """Result of :func:`backward`: tensor uid -> gradient tensor.

    ``wrt`` returns a zero tensor for any tensor the loss does not reach,
    so callers never need to special-case missing entries.
    """

    def __init__(self, grads: dict[int, Tensor]):
        self._grads = grads

    def wrt(self, t: Tensor) -> Tensor:
        g = self._grads.get(t.uid)
        if g is None:
            return Tensor(np.zeros_like(t.data))
        return g

    def has(self, t: Tensor) -> bool:
        return t.uid in self._grads

    def __len__(self) -> int:
        return len(self._grads)


def backward(tape: Tape, loss: Tensor, create_graph: bool = False) -> GradientMap:
    """Accumulate gradients of a scalar ``loss`` over a recorded tape.

    Entries are walked in reverse recording order, which is a reverse
    topological order of the computation.  With ``create_graph=True`` the
    VJP evaluations are themselves recorded on any tapes still active, so a
    further backward pass can differentiate through this one.
    """
    if loss.data.size != 1:
        raise ContractViolation(
            f"backward needs a scalar loss, got shape {loss.shape}"
        )
    seed = Tensor(np.ones_like(loss.data))
    grads: dict[int, Tensor] = {loss.uid: seed}

    def run():
        add = _OPS_HOOK["add"]
        for entry in reversed(tape.entries):
            g_out = grads.get(entry.output.uid)
            if g_out is None:
                continue
            in_grads = entry.vjp(g_out)
            for t, g in zip(entry.inputs, in_grads):
                if g is None or not t.requires_grad:
                    continue
                acc = grads.get(t.uid)
                grads[t.uid] = g if acc is None else add(acc, g)

    if create_graph:
        run()
    else:
        with no_grad():
            run()
    return GradientMap(grads)
