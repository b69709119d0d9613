"""Spectral graph-convolutional networks over mesh hierarchies.

Filters are Chebyshev polynomials of the rescaled Laplacian: a layer with
order K computes

    y = sum_k  T_k(L_scaled) x  @ theta_k  + bias,

with the recurrence T_0 x = x, T_1 x = L x, T_k x = 2 L T_{k-1} x - T_{k-2} x.
Per input/output channel pair that is K trainable weights.

Networks:
    Decoder        embedding -> coarsest mesh features -> residual blocks
                   with upsampling -> per-vertex albedo offsets
    Refiner        (coarse texture, image-sampled texture) -> feature field
    Combiner       fuses decoder and refiner outputs into refined albedo
    Discriminator  image -> scalar realism score (conv + max-pool stack)

All parameters are float64 tensors initialized from a seeded generator
with scaled-uniform fan-in limits, and exposed as flat name -> Tensor
dicts for the optimizer and the checkpoint container.
"""

from __future__ import annotations

import numpy as np

from .diffcore import SparseMatrix, Tensor, ops
from .errors import ContractViolation
from .meshgraph import MeshHierarchy
from .meshgraph.laplacian import LaplacianPair

CHEB_ORDER = 6


def cheb_basis(scaled_lap: SparseMatrix, x: Tensor, order: int) -> list[Tensor]:
    """[T_0 x, ..., T_{order-1} x] for the rescaled Laplacian."""
    if order < 1:
        raise ContractViolation(f"order must be >= 1, got {order}")
    x = ops.as_tensor(x)
    if x.ndim != 2 or x.shape[0] != scaled_lap.rows:
        raise ContractViolation(
            f"features {x.shape} incompatible with operator {scaled_lap.shape}"
        )
    out = [x]
    if order > 1:
        out.append(ops.spmm(scaled_lap, x))
    for _ in range(2, order):
        nxt = ops.sub(
            ops.mul(ops.constant(2.0), ops.spmm(scaled_lap, out[-1])), out[-2]
        )
        out.append(nxt)
    return out


def cheb_conv(scaled_lap: SparseMatrix, x: Tensor, theta: Tensor, bias=None) -> Tensor:
    """Chebyshev filter bank: theta is (order, f_in, f_out)."""
    theta = ops.as_tensor(theta)
    if theta.ndim != 3:
        raise ContractViolation(f"theta must be (order, f_in, f_out), got {theta.shape}")
    order, f_in, f_out = theta.shape
    x = ops.as_tensor(x)
    if x.ndim != 2 or x.shape[1] != f_in:
        raise ContractViolation(
            f"features {x.shape} do not match filter input width {f_in}"
        )
    basis = cheb_basis(scaled_lap, x, order)
    y = None
    for k, t_k in enumerate(basis):
        term = ops.matmul(t_k, ops.slice_(theta, (k,)))
        y = term if y is None else ops.add(y, term)
    if bias is not None:
        y = ops.add(y, ops.as_tensor(bias))
    return y


def _uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    # variance 1/fan_in keeps activation scale flat through depth, which
    # matters here: the output head is a tanh, and a compounding gain
    # saturates it at init
    limit = np.sqrt(3.0 / max(fan_in, 1))
    return rng.uniform(-limit, limit, size=shape)


class ChebLayer:
    """One spectral convolution with its trainable filter bank and bias."""

    def __init__(self, rng, order: int, f_in: int, f_out: int, bias: bool = True):
        self.order = order
        self.theta = Tensor(
            _uniform_init(rng, (order, f_in, f_out), order * f_in),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(f_out), requires_grad=True) if bias else None

    def __call__(self, lap: SparseMatrix, x: Tensor) -> Tensor:
        return cheb_conv(lap, x, self.theta, self.bias)

    def parameters(self) -> dict[str, Tensor]:
        out = {"theta": self.theta}
        if self.bias is not None:
            out["bias"] = self.bias
        return out

    def set_parameters(self, mapping: dict[str, Tensor]) -> None:
        self.theta = _take(mapping, "theta")
        if self.bias is not None:
            self.bias = _take(mapping, "bias")


class BiasedRelu:
    """max(0, x + b) with a learnable per-channel bias."""

    def __init__(self, channels: int, init: float = 0.1):
        self.bias = Tensor(np.full(channels, init), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.bias_relu(x, self.bias)

    def parameters(self) -> dict[str, Tensor]:
        return {"act_bias": self.bias}

    def set_parameters(self, mapping: dict[str, Tensor]) -> None:
        self.bias = _take(mapping, "act_bias")


class ResidualBlock:
    """conv -> biased relu -> conv, plus an identity or order-1 shortcut."""

    def __init__(self, rng, order: int, f_in: int, f_out: int):
        self.conv1 = ChebLayer(rng, order, f_in, f_out)
        self.act = BiasedRelu(f_out)
        self.conv2 = ChebLayer(rng, order, f_out, f_out)
        self.shortcut = None
        if f_in != f_out:
            self.shortcut = ChebLayer(rng, 1, f_in, f_out, bias=False)

    def __call__(self, lap: SparseMatrix, x: Tensor) -> Tensor:
        h = self.conv2(lap, self.act(self.conv1(lap, x)))
        sc = x if self.shortcut is None else self.shortcut(lap, x)
        return ops.add(h, sc)

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        _merge(out, "conv1", self.conv1.parameters())
        _merge(out, "act", self.act.parameters())
        _merge(out, "conv2", self.conv2.parameters())
        if self.shortcut is not None:
            _merge(out, "shortcut", self.shortcut.parameters())
        return out

    def set_parameters(self, mapping: dict[str, Tensor]) -> None:
        self.conv1.set_parameters(_extract(mapping, "conv1"))
        self.act.set_parameters(_extract(mapping, "act"))
        self.conv2.set_parameters(_extract(mapping, "conv2"))
        if self.shortcut is not None:
            self.shortcut.set_parameters(_extract(mapping, "shortcut"))


class UpsampleLayer:
    """Sparse interpolation to the finer mesh followed by a convolution."""

    def __init__(self, rng, order: int, f_in: int, f_out: int):
        self.conv = ChebLayer(rng, order, f_in, f_out)

    def __call__(self, up: SparseMatrix, fine_lap: SparseMatrix, x: Tensor) -> Tensor:
        return self.conv(fine_lap, ops.spmm(up, x))

    def parameters(self) -> dict[str, Tensor]:
        return {f"conv.{k}": v for k, v in self.conv.parameters().items()}

    def set_parameters(self, mapping: dict[str, Tensor]) -> None:
        self.conv.set_parameters(_extract(mapping, "conv"))


def _merge(dst: dict, prefix: str, src: dict) -> None:
    for k, v in src.items():
        dst[f"{prefix}.{k}"] = v


def _extract(mapping: dict, prefix: str) -> dict:
    pre = prefix + "."
    out = {k[len(pre):]: v for k, v in mapping.items() if k.startswith(pre)}
    if not out:
        raise ContractViolation(f"no parameters under prefix {prefix!r}")
    return out


def _take(mapping: dict, name: str) -> Tensor:
    try:
        return mapping[name]
    except KeyError:
        raise ContractViolation(f"missing parameter {name!r}") from None


class Decoder:
    """Embedding to per-vertex albedo offsets, coarse to fine.

    A dense layer seeds features on the coarsest mesh; residual blocks run
    at each level with upsampling layers between them; a final convolution
    maps to 3 channels on the full mesh.
    """

    def __init__(
        self,
        hierarchy: MeshHierarchy,
        embed_dim: int = 128,
        channels: tuple[int, ...] = (64, 32, 16, 8),
        order: int = CHEB_ORDER,
        seed: int = 0,
    ):
        if len(channels) != hierarchy.n_levels:
            raise ContractViolation(
                f"{len(channels)} channel widths for {hierarchy.n_levels} levels"
            )
        self.hierarchy = hierarchy
        rng = np.random.default_rng([seed, 1])
        n_coarse = hierarchy.levels[-1].topology.n_vertices
        self.embed_dim = embed_dim
        self.n_coarse = n_coarse
        self.c0 = channels[0]
        self.dense_w = Tensor(
            _uniform_init(rng, (embed_dim, n_coarse * channels[0]), embed_dim),
            requires_grad=True,
        )
        self.dense_b = Tensor(np.zeros(n_coarse * channels[0]), requires_grad=True)
        self.blocks = []
        self.ups = []
        for i, width in enumerate(channels):
            self.blocks.append(ResidualBlock(rng, order, width, width))
            if i + 1 < len(channels):
                self.ups.append(UpsampleLayer(rng, order, width, channels[i + 1]))
        self.final = ChebLayer(rng, order, channels[-1], 3)

    def forward(self, embedding: Tensor) -> Tensor:
        embedding = ops.as_tensor(embedding)
        if embedding.shape != (self.embed_dim,):
            raise ContractViolation(
                f"embedding must be ({self.embed_dim},), got {embedding.shape}"
            )
        levels = self.hierarchy.levels
        samplings = self.hierarchy.samplings
        h = ops.add(ops.matmul(embedding, self.dense_w), self.dense_b)
        h = ops.reshape(h, (self.n_coarse, self.c0))
        # levels[-1] is coarsest; walk back up to the full mesh.
        for i, block in enumerate(self.blocks):
            level = levels[len(levels) - 1 - i]
            h = block(level.lap.scaled, h)
            if i < len(self.ups):
                finer = levels[len(levels) - 2 - i]
                samp = samplings[len(samplings) - 1 - i]
                h = self.ups[i](samp.up, finer.lap.scaled, h)
        return self.final(levels[0].lap.scaled, h)

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        out = {"dense.w": self.dense_w, "dense.b": self.dense_b}
        for i, b in enumerate(self.blocks):
            _merge(out, f"block{i}", b.parameters())
        for i, u in enumerate(self.ups):
            _merge(out, f"up{i}", u.parameters())
        _merge(out, "final", self.final.parameters())
        return out

    def set_parameters(self, mapping: dict[str, Tensor]) -> None:
        self.dense_w = _take(mapping, "dense.w")
        self.dense_b = _take(mapping, "dense.b")
        for i, b in enumerate(self.blocks):
            b.set_parameters(_extract(mapping, f"block{i}"))
        for i, u in enumerate(self.ups):
            u.set_parameters(_extract(mapping, f"up{i}"))
        self.final.set_parameters(_extract(mapping, "final"))


class Refiner:
    """Detail features from the coarse and image-sampled textures.

    Input is their channel concatenation (n, 6); the net dips one level
    down the hierarchy, runs residual blocks, and comes back up.
    """

    def __init__(
        self,
        hierarchy: MeshHierarchy,
        width: int = 16,
        n_blocks: int = 2,
        order: int = CHEB_ORDER,
        seed: int = 0,
    ):
        if hierarchy.n_levels < 2:
            raise ContractViolation("refiner needs at least two hierarchy levels")
        self.hierarchy = hierarchy
        rng = np.random.default_rng([seed, 2])
        self.width = width
        widths = [6] + [width] * n_blocks
        self.blocks = [
            ResidualBlock(rng, order, widths[i], widths[i + 1])
            for i in range(n_blocks)
        ]
        self.up = UpsampleLayer(rng, order, width, width)

    def forward(self, coarse_texture: Tensor, sampled_texture: Tensor) -> Tensor:
        coarse_texture = ops.as_tensor(coarse_texture)
        sampled_texture = ops.as_tensor(sampled_texture)
        n = self.hierarchy.levels[0].topology.n_vertices
        if coarse_texture.shape != (n, 3) or sampled_texture.shape != (n, 3):
            raise ContractViolation(
                f"texture inputs must be ({n}, 3), got "
                f"{coarse_texture.shape} and {sampled_texture.shape}"
            )
        samp = self.hierarchy.samplings[0]
        sub = self.hierarchy.levels[1]
        x = ops.concat([coarse_texture, sampled_texture], axis=1)
        h = ops.spmm(samp.down, x)
        for block in self.blocks:
            h = block(sub.lap.scaled, h)
        return self.up(samp.up, self.hierarchy.levels[0].lap.scaled, h)

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, b in enumerate(self.blocks):
            _merge(out, f"block{i}", b.parameters())
        _merge(out, "up", self.up.parameters())
        return out

    def set_parameters(self, mapping: dict[str, Tensor]) -> None:
        for i, b in enumerate(self.blocks):
            b.set_parameters(_extract(mapping, f"block{i}"))
        self.up.set_parameters(_extract(mapping, "up"))


class Combiner:
    """Fuse decoder albedo and refiner features into the refined albedo.

    One graph convolution over the concatenation, then tanh; the (-1, 1)
    output is mapped to [0, 1] at the render boundary, not here.
    """

    def __init__(
        self,
        lap: LaplacianPair,
        refiner_width: int = 16,
        order: int = CHEB_ORDER,
        seed: int = 0,
    ):
        rng = np.random.default_rng([seed, 3])
        self.lap = lap
        self.conv = ChebLayer(rng, order, 3 + refiner_width, 3)

    def forward(self, decoded: Tensor, refined: Tensor) -> Tensor:
        decoded = ops.as_tensor(decoded)
        refined = ops.as_tensor(refined)
        if decoded.shape[0] != refined.shape[0]:
            raise ContractViolation(
                f"vertex counts differ: {decoded.shape} vs {refined.shape}"
            )
        x = ops.concat([decoded, refined], axis=1)
        return ops.tanh(self.conv(self.lap.scaled, x))

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        return {f"conv.{k}": v for k, v in self.conv.parameters().items()}

    def set_parameters(self, mapping: dict[str, Tensor]) -> None:
        self.conv.set_parameters(_extract(mapping, "conv"))


class Discriminator:
    """Image realism critic: six 3x3 conv + 2x2 max-pool stages, then a
    global spatial mean and a dense layer to one score."""

    N_STAGES = 6

    def __init__(
        self,
        channels: tuple[int, ...] = (8, 16, 16, 16, 16, 16),
        seed: int = 0,
    ):
        if len(channels) != self.N_STAGES:
            raise ContractViolation(f"need {self.N_STAGES} channel widths")
        rng = np.random.default_rng([seed, 4])
        self.channels = channels
        self.kernels = []
        self.acts = []
        f_in = 3
        for width in channels:
            self.kernels.append(
                Tensor(
                    _uniform_init(rng, (3, 3, f_in, width), 9 * f_in),
                    requires_grad=True,
                )
            )
            self.acts.append(BiasedRelu(width))
            f_in = width
        self.dense_w = Tensor(
            _uniform_init(rng, (channels[-1], 1), channels[-1]), requires_grad=True
        )
        self.dense_b = Tensor(np.zeros(1), requires_grad=True)

    def forward(self, image: Tensor) -> Tensor:
        image = ops.as_tensor(image)
        if image.ndim != 3 or image.shape[2] != 3:
            raise ContractViolation(f"image must be (H, W, 3), got {image.shape}")
        h, w = image.shape[0], image.shape[1]
        div = 2**self.N_STAGES
        if h % div or w % div:
            raise ContractViolation(
                f"image sides must be divisible by {div}, got {h}x{w}"
            )
        x = image
        for kernel, act in zip(self.kernels, self.acts):
            x = ops.maxpool2d(act(ops.conv2d(x, kernel)))
        pooled = ops.mean(x, axis=(0, 1))  # (C,)
        score = ops.add(ops.matmul(pooled, self.dense_w), self.dense_b)
        return ops.reshape(score, ())

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, (kernel, act) in enumerate(zip(self.kernels, self.acts)):
            out[f"stage{i}.kernel"] = kernel
            _merge(out, f"stage{i}", act.parameters())
        out["dense.w"] = self.dense_w
        out["dense.b"] = self.dense_b
        return out

    def set_parameters(self, mapping: dict[str, Tensor]) -> None:
        for i, act in enumerate(self.acts):
            self.kernels[i] = _take(mapping, f"stage{i}.kernel")
            act.set_parameters(_extract(mapping, f"stage{i}"))
        self.dense_w = _take(mapping, "dense.w")
        self.dense_b = _take(mapping, "dense.b")
