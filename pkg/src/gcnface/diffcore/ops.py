"""Differentiable operations.

Each operation validates shapes, computes its forward value in numpy, and
registers a VJP closure via :func:`engine.record`.  VJP closures are written
in terms of other operations from this module, never raw numpy, so that a
backward pass run with ``create_graph=True`` is itself differentiable.
Index arrays (gather/scatter maps, pooling argmaxes, clamp masks) are
captured as constants, which matches the piecewise definition of those
functions.

Conventions:
    images          (H, W, C) float64
    conv kernels    (kh, kw, C_in, C_out), odd kernel, stride 1, same padding
    vertex features (n, F)
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ContractViolation, ShapeMismatch, UnsupportedOperation
from .engine import Tensor, record
from .sparse import SparseMatrix


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def constant(x) -> Tensor:
    """Wrap a value as a non-differentiable tensor."""
    return Tensor(np.asarray(x, dtype=np.float64))


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(op, (a.shape, b.shape)) from None


def _sum_to(g: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Reduce a broadcast gradient back to the operand's shape."""
    if g.shape == tuple(shape):
        return g
    return sum_to_shape(g, shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    out = Tensor(a.data + b.data)

    def vjp(g):
        return (_sum_to(g, a.shape), _sum_to(g, b.shape))

    record("add", (a, b), out, vjp)
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    out = Tensor(a.data - b.data)

    def vjp(g):
        return (_sum_to(g, a.shape), _sum_to(neg(g), b.shape))

    record("sub", (a, b), out, vjp)
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    out = Tensor(a.data * b.data)

    def vjp(g):
        return (_sum_to(mul(g, b), a.shape), _sum_to(mul(g, a), b.shape))

    record("mul", (a, b), out, vjp)
    return out


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    out = Tensor(a.data / b.data)

    def vjp(g):
        ga = _sum_to(div(g, b), a.shape)
        gb = _sum_to(neg(div(mul(g, a), mul(b, b))), b.shape)
        return (ga, gb)

    record("div", (a, b), out, vjp)
    return out


def neg(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(-a.data)

    def vjp(g):
        return (neg(g),)

    record("neg", (a,), out, vjp)
    return out


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(int(s) for s in shape)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch("reshape", (a.shape, shape)) from None
    out = Tensor(data)

    def vjp(g):
        return (reshape(g, a.shape),)

    record("reshape", (a,), out, vjp)
    return out


def transpose(a, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(int(x) for x in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ContractViolation(f"transpose: bad axes {axes} for ndim {a.ndim}")
    out = Tensor(np.transpose(a.data, axes))
    inv = tuple(np.argsort(axes))

    def vjp(g):
        return (transpose(g, inv),)

    record("transpose", (a,), out, vjp)
    return out


def flip(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(int(x) for x in axes)
    out = Tensor(np.flip(a.data, axes).copy())

    def vjp(g):
        return (flip(g, axes),)

    record("flip", (a,), out, vjp)
    return out


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(int(s) for s in shape)
    try:
        data = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeMismatch("broadcast_to", (a.shape, shape)) from None
    out = Tensor(data)

    def vjp(g):
        return (_sum_to(g, a.shape),)

    record("broadcast_to", (a,), out, vjp)
    return out


def sum_to_shape(a, shape) -> Tensor:
    """Sum over broadcast axes so the result has the given shape.

    Adjoint of :func:`broadcast_to`; the target must be reachable from
    ``shape`` by numpy broadcasting rules.
    """
    a = as_tensor(a)
    shape = tuple(int(s) for s in shape)
    if np.broadcast_shapes(shape, a.shape) != a.shape:
        raise ShapeMismatch("sum_to_shape", (a.shape, shape))
    data = a.data
    extra = data.ndim - len(shape)
    if extra:
        data = data.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, s in enumerate(shape) if s == 1 and data.shape[i] != 1)
    if keep:
        data = data.sum(axis=keep, keepdims=True)
    out = Tensor(data.reshape(shape))

    def vjp(g):
        return (broadcast_to(g, a.shape),)

    record("sum_to_shape", (a,), out, vjp)
    return out


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ContractViolation("concat of zero tensors")
    nd = parts[0].ndim
    if any(p.ndim != nd for p in parts):
        raise ShapeMismatch("concat", [p.shape for p in parts], "rank differs")
    ax = axis if axis >= 0 else axis + nd
    for i in range(nd):
        if i == ax:
            continue
        if any(p.shape[i] != parts[0].shape[i] for p in parts):
            raise ShapeMismatch("concat", [p.shape for p in parts])
    out = Tensor(np.concatenate([p.data for p in parts], axis=ax))
    sizes = [p.shape[ax] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        grads = []
        for i in range(len(parts)):
            key = [slice(None)] * nd
            key[ax] = slice(int(offsets[i]), int(offsets[i + 1]))
            grads.append(slice_(g, tuple(key)))
        return tuple(grads)

    record("concat", tuple(parts), out, vjp)
    return out


def slice_(a, key) -> Tensor:
    """Basic indexing with a tuple of slices and ints."""
    a = as_tensor(a)
    if not isinstance(key, tuple):
        key = (key,)
    try:
        data = a.data[key]
    except IndexError:
        raise ContractViolation(f"slice: bad key {key} for shape {a.shape}") from None
    # np.array, not ascontiguousarray: the latter promotes 0-d results to
    # 1-d, which desynchronizes the output from the gradient index map.
    out = Tensor(np.array(data))
    # Flat positions of the selected elements, used to scatter the gradient
    # back into a zero tensor of the input's shape.
    idx = np.arange(a.size, dtype=np.int64).reshape(a.shape)[key]

    def vjp(g):
        return (scatter_flat(g, idx, a.shape),)

    record("slice", (a,), out, vjp)
    return out


def gather_flat(a, idx: np.ndarray) -> Tensor:
    """Pick elements of the flattened input; output takes the index shape.

    The index array is a constant: gradients flow to the source only.
    Duplicate indices are allowed.
    """
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= a.size):
        raise ContractViolation("gather_flat: index out of range")
    out = Tensor(a.data.reshape(-1)[idx])

    def vjp(g):
        return (scatter_flat(g, idx, a.shape),)

    record("gather_flat", (a,), out, vjp)
    return out


def scatter_flat(vals, idx: np.ndarray, shape) -> Tensor:
    """Adjoint of :func:`gather_flat`: add values into a zero tensor.

    Duplicate indices accumulate.
    """
    vals = as_tensor(vals)
    idx = np.asarray(idx, dtype=np.int64)
    shape = tuple(int(s) for s in shape)
    if vals.shape != idx.shape:
        raise ShapeMismatch("scatter_flat", (vals.shape, idx.shape))
    total = int(np.prod(shape)) if shape else 1
    if idx.size and (idx.min() < 0 or idx.max() >= total):
        raise ContractViolation("scatter_flat: index out of range")
    flat = np.zeros(total)
    np.add.at(flat, idx.reshape(-1), vals.data.reshape(-1))
    out = Tensor(flat.reshape(shape))

    def vjp(g):
        return (gather_flat(g, idx),)

    record("scatter_flat", (vals,), out, vjp)
    return out


# ---------------------------------------------------------------------------
# reductions


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is not None and not isinstance(axis, tuple):
        axis = (int(axis),)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def vjp(g):
        if axis is None:
            gk = reshape(g, (1,) * a.ndim) if a.ndim else g
        elif not keepdims:
            kshape = list(a.shape)
            for ax in axis:
                kshape[ax] = 1
            gk = reshape(g, kshape)
        else:
            gk = g
        return (broadcast_to(gk, a.shape),)

    record("sum", (a,), out, vjp)
    return out


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (int(axis),)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    if count == 0:
        raise ContractViolation("mean over zero elements")
    return mul(sum_(a, axis=axis, keepdims=keepdims), constant(1.0 / count))


# ---------------------------------------------------------------------------
# nonlinearities


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0))
    # Subgradient 0 at the kink: strict inequality.
    mask = constant((a.data > 0.0).astype(np.float64))

    def vjp(g):
        return (mul(g, mask),)

    record("relu", (a,), out, vjp)
    return out


def bias_relu(a, bias) -> Tensor:
    """max(0, a + bias) with a per-channel learnable bias.

    The bias broadcasts against the trailing channel axis.
    """
    a, bias = as_tensor(a), as_tensor(bias)
    if bias.ndim != 1 or a.shape[-1] != bias.shape[0]:
        raise ShapeMismatch("bias_relu", (a.shape, bias.shape), "per-channel bias")
    return relu(add(a, bias))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.tanh(a.data))

    def vjp(g):
        return (mul(g, sub(constant(1.0), mul(out, out))),)

    record("tanh", (a,), out, vjp)
    return out


def sin(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.sin(a.data))

    def vjp(g):
        return (mul(g, cos(a)),)

    record("sin", (a,), out, vjp)
    return out


def cos(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.cos(a.data))

    def vjp(g):
        return (neg(mul(g, sin(a))),)

    record("cos", (a,), out, vjp)
    return out


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise ContractViolation("sqrt of negative value")
    out = Tensor(np.sqrt(a.data))

    def vjp(g):
        return (div(mul(g, constant(0.5)), out),)

    record("sqrt", (a,), out, vjp)
    return out


def power(a, p: float) -> Tensor:
    """Elementwise a**p for a constant real exponent."""
    a = as_tensor(a)
    p = float(p)
    out = Tensor(a.data**p)

    def vjp(g):
        return (mul(mul(g, constant(p)), power(a, p - 1.0)),)

    record("power", (a,), out, vjp)
    return out


def clamp(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    if not lo <= hi:
        raise ContractViolation(f"clamp: lo {lo} > hi {hi}")
    out = Tensor(np.clip(a.data, lo, hi))
    mask = constant(((a.data >= lo) & (a.data <= hi)).astype(np.float64))

    def vjp(g):
        return (mul(g, mask),)

    record("clamp", (a,), out, vjp)
    return out


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    """Dense product of 1-D or 2-D operands, numpy semantics."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ShapeMismatch("matmul", (a.shape, b.shape), "1-D or 2-D only")
    if a.ndim == 1:
        out2 = matmul(reshape(a, (1, a.shape[0])), b)
        return reshape(out2, out2.shape[1:])
    if b.ndim == 1:
        out2 = matmul(a, reshape(b, (b.shape[0], 1)))
        return reshape(out2, out2.shape[:1])
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch("matmul", (a.shape, b.shape))
    out = Tensor(a.data @ b.data)

    def vjp(g):
        return (matmul(g, transpose(b)), matmul(transpose(a), g))

    record("matmul", (a, b), out, vjp)
    return out


def spmm(s: SparseMatrix, x) -> Tensor:
    """Sparse-dense product; the sparse operand is a constant."""
    if not isinstance(s, SparseMatrix):
        raise ContractViolation("spmm: first operand must be a SparseMatrix")
    x = as_tensor(x)
    if x.ndim not in (1, 2) or x.shape[0] != s.cols:
        raise ShapeMismatch("spmm", (s.shape, x.shape))
    out = Tensor(s.matmul_dense(x.data))

    def vjp(g):
        return (spmm(s.transpose(), g),)

    record("spmm", (x,), out, vjp)
    return out


# ---------------------------------------------------------------------------
# image ops


def _conv_patches(xp: np.ndarray, k: int) -> np.ndarray:
    # (H, W, C, k, k) -> (H*W, k*k*C) with (kh, kw, C) ordering to match
    # the kernel layout.
    win = sliding_window_view(xp, (k, k), axis=(0, 1))
    h, w, c = win.shape[0], win.shape[1], win.shape[2]
    return win.transpose(0, 1, 3, 4, 2).reshape(h * w, k * k * c)


def _check_conv_operands(op, x, w):
    if x.ndim != 3 or w.ndim != 4:
        raise ShapeMismatch(op, (x.shape, w.shape), "need (H,W,C) and (kh,kw,Ci,Co)")
    kh, kw = w.shape[0], w.shape[1]
    if kh != kw or kh % 2 == 0:
        raise ContractViolation(f"{op}: kernel must be square with odd size, got {kh}x{kw}")
    if x.shape[2] != w.shape[2]:
        raise ShapeMismatch(op, (x.shape, w.shape), "channel mismatch")


def conv2d(x, w) -> Tensor:
    """Stride-1, same-padding 2-D convolution (cross-correlation form)."""
    x, w = as_tensor(x), as_tensor(w)
    _check_conv_operands("conv2d", x, w)
    k = w.shape[0]
    p = k // 2
    h, wd, ci = x.shape
    co = w.shape[3]
    xp = np.pad(x.data, ((p, p), (p, p), (0, 0)))
    y = _conv_patches(xp, k) @ w.data.reshape(k * k * ci, co)
    out = Tensor(y.reshape(h, wd, co))

    def vjp(g):
        # Input gradient is a convolution of g with the spatially flipped
        # kernel, channel axes swapped.
        wt = transpose(flip(w, (0, 1)), (0, 1, 3, 2))
        return (conv2d(g, wt), conv2d_weight_grad(x, g, k))

    record("conv2d", (x, w), out, vjp)
    return out


def conv2d_weight_grad(x, g, k: int) -> Tensor:
    """Kernel cotangent of conv2d: correlate input patches with g.

    Bilinear in (x, g), so it has clean VJPs of its own and the gradient
    penalty can differentiate through a backward pass.
    """
    x, g = as_tensor(x), as_tensor(g)
    if x.ndim != 3 or g.ndim != 3 or x.shape[:2] != g.shape[:2]:
        raise ShapeMismatch("conv2d_weight_grad", (x.shape, g.shape))
    k = int(k)
    if k % 2 == 0:
        raise ContractViolation("conv2d_weight_grad: kernel size must be odd")
    p = k // 2
    ci, co = x.shape[2], g.shape[2]
    xp = np.pad(x.data, ((p, p), (p, p), (0, 0)))
    wg = _conv_patches(xp, k).T @ g.data.reshape(-1, co)
    out = Tensor(wg.reshape(k, k, ci, co))

    def vjp(v):
        vt = transpose(flip(v, (0, 1)), (0, 1, 3, 2))
        return (conv2d(g, vt), conv2d(x, v))

    record("conv2d_weight_grad", (x, g), out, vjp)
    return out


def maxpool2d(x) -> Tensor:
    """2x2 max pooling with stride 2.

    Ties pick the first maximal element in (top-left, top-right,
    bottom-left, bottom-right) order.  The selection is a constant of the
    backward pass, so gradients route only to the winners.
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeMismatch("maxpool2d", (x.shape,), "need (H,W,C)")
    h, w, c = x.shape
    if h % 2 or w % 2:
        raise ContractViolation(f"maxpool2d: H and W must be even, got {h}x{w}")
    cand = x.data.reshape(h // 2, 2, w // 2, 2, c).transpose(0, 2, 4, 1, 3)
    cand = cand.reshape(h // 2, w // 2, c, 4)
    choice = np.argmax(cand, axis=3)
    a, b = choice // 2, choice % 2
    gi, gj, gc = np.meshgrid(
        np.arange(h // 2), np.arange(w // 2), np.arange(c), indexing="ij"
    )
    flat_idx = ((2 * gi + a) * w + (2 * gj + b)) * c + gc
    return gather_flat(x, flat_idx)


# ---------------------------------------------------------------------------
# composites


def dot(a, b) -> Tensor:
    return sum_(mul(a, b))


def l2norm(a, guard: float = 0.0) -> Tensor:
    """Euclidean norm of all elements.

    ``guard`` is added under the square root; a tiny positive guard keeps
    the gradient finite (and zero) at the origin without visibly moving
    the value.
    """
    sq = sum_(mul(a, a))
    if guard:
        sq = add(sq, constant(guard))
    return sqrt(sq)


def rownorm(a, guard: float = 0.0) -> Tensor:
    """Euclidean norm of each row of a 2-D tensor, returned as (n,)."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeMismatch("rownorm", (a.shape,), "need 2-D")
    sq = sum_(mul(a, a), axis=1)
    if guard:
        sq = add(sq, constant(guard))
    return sqrt(sq)


# ---------------------------------------------------------------------------
# registry

_REGISTRY = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "matmul": matmul,
    "spmm": spmm,
    "concat": concat,
    "slice": slice_,
    "gather_flat": gather_flat,
    "scatter_flat": scatter_flat,
    "relu": relu,
    "bias_relu": bias_relu,
    "tanh": tanh,
    "sin": sin,
    "cos": cos,
    "sqrt": sqrt,
    "power": power,
    "clamp": clamp,
    "sum": sum_,
    "mean": mean,
    "l2norm": l2norm,
    "reshape": reshape,
    "transpose": transpose,
    "flip": flip,
    "broadcast_to": broadcast_to,
    "sum_to_shape": sum_to_shape,
    "conv2d": conv2d,
    "conv2d_weight_grad": conv2d_weight_grad,
    "maxpool2d": maxpool2d,
}


def forward_op(op_name: str, inputs: Sequence, **params) -> Tensor:
    """Dispatch an operation by registry name.

    Unknown names raise :class:`UnsupportedOperation`; operand validation
    is done by the operation itself.
    """
    fn = _REGISTRY.get(op_name)
    if fn is None:
        raise UnsupportedOperation(
            f"unknown op {op_name!r}; known: {sorted(_REGISTRY)}"
        )
    if op_name == "concat":
        return fn(inputs, **params)
    return fn(*inputs, **params)


def op_names() -> list[str]:
    return sorted(_REGISTRY)


# Attach arithmetic dunders to Tensor.
from .engine import _OPS_HOOK  # noqa: E402

_OPS_HOOK.update({"add": add, "sub": sub, "mul": mul, "div": div, "neg": neg,
                  "power": power, "matmul": matmul})
