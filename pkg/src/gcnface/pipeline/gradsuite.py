"""Finite-difference audit of every differentiable component.

Each registered component builds a tiny instance of one differentiable
piece (a layer, a network, the renderer along one input, a loss) and
returns the worst relative error between recorded gradients and central
finite differences.  ``run_gradcheck_suite`` evaluates all of them
against per-component thresholds and reports one row each; a failure is
a report entry, never an exception.

The network components call through the public layer entry points, so a
corrupted backward in any underlying primitive surfaces here as a
threshold violation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .. import gcn
from ..diffcore import Tensor, grad_check, grad_check_multi, ops
from ..errors import ContractViolation
from ..losses import (
    LossTerms,
    LossWeights,
    ToyEmbedder,
    adversarial_loss,
    identity_loss,
    pixel_loss,
    total_loss,
    vertex_loss,
)
from ..meshgraph import build_hierarchy, icosphere
from ..morphable import split_coefficients, synth_model
from ..render import Camera, render_image

# component name -> (threshold, builder); populated via _component below
_REGISTRY: dict[str, tuple[float, callable]] = {}


def _component(name: str, threshold: float):
    def register(fn):
        _REGISTRY[name] = (threshold, fn)
        return fn
    return register


def _tiny_hierarchy():
    verts, topo = icosphere(1)
    return build_hierarchy(verts, topo, n_levels=3, fraction=0.3)


def _worst(results: dict[str, float]) -> float:
    return max(results.values())


@_component("cheb_layer", 1e-5)
def _check_cheb_layer(seed: int) -> float:
    verts, topo = icosphere(0)
    hier = build_hierarchy(verts, topo, n_levels=1)
    lap = hier.levels[0].lap.scaled
    rng = np.random.default_rng([seed, 1])
    layer = gcn.ChebLayer(rng, order=3, f_in=2, f_out=3)
    x = Tensor(rng.standard_normal((12, 2)))

    def fn(theta, bias):
        layer.set_parameters({"theta": theta, "bias": bias})
        return ops.sum_(ops.sin(layer(lap, x)))

    points = {"theta": layer.theta.copy(), "bias": Tensor(rng.standard_normal(3))}
    errs = grad_check_multi(fn, points, rng=np.random.default_rng([seed, 2]))
    errs["input"] = grad_check(
        lambda t: ops.sum_(ops.sin(layer(lap, t))), x,
        rng=np.random.default_rng([seed, 3]),
    )
    return _worst(errs)


@_component("residual_block", 1e-5)
def _check_residual_block(seed: int) -> float:
    verts, topo = icosphere(0)
    hier = build_hierarchy(verts, topo, n_levels=1)
    lap = hier.levels[0].lap.scaled
    rng = np.random.default_rng([seed, 4])
    block = gcn.ResidualBlock(rng, order=3, f_in=2, f_out=4)
    x = Tensor(rng.standard_normal((12, 2)))

    def fn(**kw):
        block.set_parameters(kw)
        return ops.sum_(ops.tanh(block(lap, x)))

    errs = grad_check_multi(
        fn, {k: v.copy() for k, v in block.parameters().items()},
        max_coords=4, rng=np.random.default_rng([seed, 5]),
    )
    return _worst(errs)


def _network_error(net, forward, seed: int, max_coords: int = 4) -> float:
    def fn(**kw):
        net.set_parameters(kw)
        return forward()

    errs = grad_check_multi(
        fn, {k: v.copy() for k, v in net.parameters().items()},
        max_coords=max_coords, rng=np.random.default_rng([seed, 6]),
    )
    return _worst(errs)


@_component("decoder", 1e-4)
def _check_decoder(seed: int) -> float:
    hier = _tiny_hierarchy()
    rng = np.random.default_rng([seed, 7])
    net = gcn.Decoder(hier, embed_dim=10, channels=(6, 5, 4), order=3, seed=seed)
    emb = Tensor(rng.standard_normal(10))
    return _network_error(net, lambda: ops.sum_(ops.tanh(net(emb))), seed)


@_component("refiner", 1e-4)
def _check_refiner(seed: int) -> float:
    hier = _tiny_hierarchy()
    rng = np.random.default_rng([seed, 8])
    net = gcn.Refiner(hier, width=5, n_blocks=1, order=3, seed=seed)
    a = Tensor(rng.uniform(0, 1, (42, 3)))
    b = Tensor(rng.uniform(0, 1, (42, 3)))
    return _network_error(net, lambda: ops.sum_(ops.tanh(net(a, b))), seed)


@_component("combiner", 1e-5)
def _check_combiner(seed: int) -> float:
    hier = _tiny_hierarchy()
    rng = np.random.default_rng([seed, 9])
    net = gcn.Combiner(hier.levels[0].lap, refiner_width=5, order=3, seed=seed)
    dec = Tensor(rng.standard_normal((42, 3)))
    ref = Tensor(rng.standard_normal((42, 5)))
    return _network_error(net, lambda: ops.sum_(net(dec, ref)), seed)


@_component("discriminator", 1e-4)
def _check_discriminator(seed: int) -> float:
    rng = np.random.default_rng([seed, 10])
    net = gcn.Discriminator(channels=(2, 2, 2, 2, 2, 2), seed=seed)
    image = Tensor(rng.uniform(0, 1, (64, 64, 3)))
    err = _network_error(net, lambda: net(image), seed, max_coords=3)
    input_err = grad_check(
        net, image, max_coords=4, rng=np.random.default_rng([seed, 11])
    )
    return max(err, input_err)


def _render_scene(seed: int):
    model = synth_model(seed=5, n=42)
    rng = np.random.default_rng([seed, 12])
    coeffs = split_coefficients(rng.normal(0.0, 0.1, 257))
    shape = (model.mean_shape.reshape(-1)
             + model.identity_basis @ coeffs.identity
             + model.expression_basis @ coeffs.expression).reshape(-1, 3)
    texture = (model.mean_texture.reshape(-1)
               + model.texture_basis @ coeffs.texture).reshape(-1, 3)
    pose = np.array([0.1, -0.15, 0.05, 0.02, -0.01, 4.0])
    lighting = np.zeros(27)
    lighting[0::9] = 3.2
    lighting[1::9] = 0.3
    lighting[4::9] = -0.2
    camera = Camera(40.0, 32, 32)
    return model, shape, texture, pose, lighting, camera


def _interior(result) -> np.ndarray:
    """Pixels whose whole 3x3 neighborhood rasterized, eroded further so
    finite-difference steps cannot flip any pixel's coverage."""
    covered = result.buffers.triangle_id >= 0
    interior = ndimage.binary_erosion(covered, iterations=2)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            interior &= np.roll(np.roll(covered, dr, axis=0), dc, axis=1)
    return interior.astype(np.float64)


def _masked_sum(result, mask: np.ndarray):
    flat = ops.reshape(result.image, (mask.size, 3))
    weights = ops.constant(mask.reshape(-1)[:, None])
    return ops.sum_(ops.mul(flat, weights))


def _render_component(seed: int, leaf: str) -> float:
    model, shape, texture, pose, lighting, camera = _render_scene(seed)
    topo = model.topology
    base = {
        "positions": Tensor(shape),
        "texture": Tensor(texture),
        "pose": Tensor(pose),
        "lighting": Tensor(lighting),
    }
    needs_mask = leaf in ("positions", "pose")
    probe = render_image(base["positions"], base["texture"], base["pose"],
                         base["lighting"], topo, camera)
    mask = _interior(probe) if needs_mask else np.ones((camera.height, camera.width))
    if needs_mask and mask.sum() < 20:
        raise ContractViolation("render audit scene has too few interior pixels")

    def fn(t):
        kwargs = dict(base)
        kwargs[leaf] = t
        result = render_image(kwargs["positions"], kwargs["texture"],
                              kwargs["pose"], kwargs["lighting"], topo, camera)
        return _masked_sum(result, mask)

    return grad_check(fn, base[leaf].copy(), max_coords=8,
                      rng=np.random.default_rng([seed, 13]))


@_component("render_texture", 1e-4)
def _check_render_texture(seed: int) -> float:
    return _render_component(seed, "texture")


@_component("render_lighting", 1e-4)
def _check_render_lighting(seed: int) -> float:
    return _render_component(seed, "lighting")


@_component("render_pose", 1e-4)
def _check_render_pose(seed: int) -> float:
    return _render_component(seed, "pose")


@_component("render_shape", 1e-4)
def _check_render_shape(seed: int) -> float:
    return _render_component(seed, "positions")


@_component("pixel_loss", 1e-5)
def _check_pixel_loss(seed: int) -> float:
    rng = np.random.default_rng([seed, 14])
    x = Tensor(rng.uniform(0, 1, (16, 16, 3)))
    y = Tensor(rng.uniform(0, 1, (16, 16, 3)))
    mask = (rng.uniform(size=(16, 16)) > 0.3).astype(float)
    mask[0, 0] = 1.0
    return grad_check(
        lambda t: pixel_loss(x, t, mask, np.ones((16, 16))), y,
        max_coords=8, rng=np.random.default_rng([seed, 15]),
    )


@_component("identity_loss", 1e-5)
def _check_identity_loss(seed: int) -> float:
    rng = np.random.default_rng([seed, 16])
    embed = ToyEmbedder(16, 16, dim=8, seed=seed)
    x = Tensor(rng.uniform(0, 1, (16, 16, 3)))
    y = Tensor(rng.uniform(0, 1, (16, 16, 3)))
    return grad_check(
        lambda t: identity_loss(x, t, embed), y,
        max_coords=8, rng=np.random.default_rng([seed, 17]),
    )


@_component("vertex_loss", 1e-5)
def _check_vertex_loss(seed: int) -> float:
    rng = np.random.default_rng([seed, 18])
    a = Tensor(rng.standard_normal((6, 3)))
    b = Tensor(rng.standard_normal((6, 3)))
    return grad_check(
        lambda t: vertex_loss(a, t), b,
        rng=np.random.default_rng([seed, 19]),
    )


@_component("adversarial_penalty", 1e-4)
def _check_adversarial_penalty(seed: int) -> float:
    rng = np.random.default_rng([seed, 20])
    reals = [Tensor(rng.uniform(0, 1, (16, 16, 3))) for _ in range(2)]
    fakes = [Tensor(rng.uniform(0, 1, (16, 16, 3))) for _ in range(2)]

    def fn(kernel):
        def critic(img):
            return ops.mean(ops.tanh(ops.conv2d(img, kernel)))
        loss, _ = adversarial_loss(critic, reals, fakes, 10.0,
                                   np.random.default_rng([seed, 21]))
        return loss

    kernel = Tensor(rng.standard_normal((3, 3, 3, 2)) * 0.3)
    return grad_check(fn, kernel, max_coords=6,
                      rng=np.random.default_rng([seed, 22]))


@_component("schedule_total", 1e-5)
def _check_schedule_total(seed: int) -> float:
    rng = np.random.default_rng([seed, 23])
    weights = LossWeights(warmup_steps=0, ramp_steps=4)

    def fn(a, b):
        terms = LossTerms(
            pixel=ops.mean(ops.mul(a, a)),
            identity=ops.mean(ops.sin(a)),
            adversarial=ops.mean(a),
            vertex_coarse=ops.mean(ops.mul(b, b)),
            vertex_detail=ops.mean(ops.tanh(b)),
        )
        return total_loss(terms, weights, step=2)

    points = {
        "a": Tensor(rng.standard_normal(12)),
        "b": Tensor(rng.standard_normal(12)),
    }
    return _worst(grad_check_multi(fn, points,
                                   rng=np.random.default_rng([seed, 24])))


@dataclass(frozen=True)
class SuiteRow:
    component: str
    error: float
    threshold: float
    passed: bool


COMPONENTS = tuple(_REGISTRY)


def run_gradcheck_suite(seed: int = 0, components=None) -> list[SuiteRow]:
    names = COMPONENTS if components is None else tuple(components)
    unknown = set(names) - set(_REGISTRY)
    if unknown:
        raise ContractViolation(f"unknown components {sorted(unknown)}")
    rows = []
    for name in names:
        threshold, fn = _REGISTRY[name]
        error = float(fn(seed))
        rows.append(SuiteRow(
            component=name, error=error, threshold=threshold,
            passed=bool(np.isfinite(error) and error <= threshold),
        ))
    return rows
