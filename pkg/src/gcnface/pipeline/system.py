"""Assembled reconstruction system: model, hierarchy, networks, camera.

The pieces come in two groups.  Frozen: the morphable model, the oracle
coefficients carried by each sample, and the embedding function (a stand-in
for a pretrained face-feature network, seeded from ``model_seed`` so it is
a fixed asset rather than part of the run).  Trainable: the three texture
networks (the generator group) and the critic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffcore import Tensor, no_grad, ops
from ..errors import ConfigError
from ..gcn import Combiner, Decoder, Discriminator, Refiner
from ..losses import ToyEmbedder
from ..meshgraph import MeshHierarchy, MeshTopology, build_hierarchy
from ..morphable import (
    MorphableModel,
    instantiate,
    load_model,
    split_coefficients,
    synth_model,
)
from ..render import Camera, project_vertex_colors, render_image, shade_vertices
from .config import RunConfig
from .dataset import Sample


def resolve_model(config: RunConfig) -> MorphableModel:
    if config.model_path:
        return load_model(config.model_path)
    return synth_model(config.model_seed, n=config.n_vertices)


@dataclass
class System:
    config: RunConfig
    model: MorphableModel
    hierarchy: MeshHierarchy
    camera: Camera
    embedder: ToyEmbedder
    decoder: Decoder
    refiner: Refiner
    combiner: Combiner
    critic: Discriminator

    @property
    def topology(self) -> MeshTopology:
        return self.model.topology

    def generator_parameters(self) -> dict[str, Tensor]:
        out = {}
        for prefix, net in (("decoder", self.decoder),
                            ("refiner", self.refiner),
                            ("combiner", self.combiner)):
            for name, tensor in net.parameters().items():
                out[f"{prefix}.{name}"] = tensor
        return out

    def critic_parameters(self) -> dict[str, Tensor]:
        return dict(self.critic.parameters())

    def load_parameters(self, generator: dict[str, np.ndarray],
                        critic: dict[str, np.ndarray]) -> None:
        """Install checkpointed arrays, verifying names and shapes.

        A vertex-count or architecture mismatch between the checkpoint and
        the configured model shows up here as a configuration error.
        """
        for label, current, stored in (
            ("generator", self.generator_parameters(), generator),
            ("critic", self.critic_parameters(), critic),
        ):
            if set(current) != set(stored):
                missing = sorted(set(current) - set(stored))
                extra = sorted(set(stored) - set(current))
                raise ConfigError(
                    f"checkpoint {label} parameters do not match the model: "
                    f"missing {missing[:4]}, unexpected {extra[:4]}"
                )
            for name, tensor in current.items():
                arr = np.asarray(stored[name], dtype=np.float64)
                if arr.shape != tensor.data.shape:
                    raise ConfigError(
                        f"checkpoint tensor {label}.{name} has shape "
                        f"{arr.shape}, model expects {tensor.data.shape}; "
                        "checkpoint and config describe different models"
                    )
                tensor.data = arr.copy()


def build_system(config: RunConfig,
                 model: MorphableModel | None = None) -> System:
    config.validate()
    if model is None:
        model = resolve_model(config)
    if config.model_path and model.n_vertices != config.n_vertices:
        raise ConfigError(
            f"model file has {model.n_vertices} vertices, config says "
            f"{config.n_vertices}"
        )
    hierarchy = build_hierarchy(
        model.mean_shape, model.topology,
        n_levels=config.hierarchy_levels,
        fraction=config.hierarchy_fraction,
    )
    camera = config.camera()
    return System(
        config=config,
        model=model,
        hierarchy=hierarchy,
        camera=camera,
        embedder=ToyEmbedder(camera.height, camera.width,
                             dim=config.embed_dim, seed=config.model_seed),
        decoder=Decoder(hierarchy, embed_dim=config.embed_dim,
                        channels=config.channels, order=config.cheb_order,
                        seed=config.seed),
        refiner=Refiner(hierarchy, width=config.refiner_width,
                        n_blocks=config.refiner_blocks,
                        order=config.cheb_order, seed=config.seed),
        combiner=Combiner(hierarchy.levels[0].lap,
                          refiner_width=config.refiner_width,
                          order=config.cheb_order, seed=config.seed),
        critic=Discriminator(channels=config.critic_channels,
                             seed=config.seed),
    )


@dataclass
class SampleForward:
    """Everything one sample's refinement pass produces.

    ``fine_albedo`` is on the tape when called inside one; the frozen
    inputs (shape, coarse albedo, projected colors, pose, lighting) are
    constants of the graph.
    """

    shape: Tensor            # (n, 3) geometry from the oracle coefficients
    coarse_albedo: Tensor    # (n, 3) linear-model texture
    projected: np.ndarray    # (n, 3) image colors pulled back to vertices
    valid: np.ndarray        # (n,) bool, where the pull-back is trustworthy
    pose: Tensor             # (6,)
    lighting: Tensor         # (27,)
    fine_albedo: Tensor      # (n, 3) refined texture in [0, 1]


def refine_sample(system: System, sample: Sample) -> SampleForward:
    """Run the texture refinement pass for one sample.

    Record this on a tape to get gradients into the generator networks;
    everything upstream of them is detached by construction.
    """
    parts = split_coefficients(sample.coeffs)
    with no_grad():
        shape, coarse = instantiate(system.model, parts)
        embedding = system.embedder(ops.constant(sample.image))
    projected, valid = project_vertex_colors(
        sample.image, shape.data, parts.pose, system.topology, system.camera
    )
    decoded = system.decoder(embedding)
    refined = system.refiner(coarse, ops.constant(projected))
    fused = system.combiner(decoded, refined)  # tanh range (-1, 1)
    fine = ops.mul(ops.add(fused, ops.constant(1.0)), ops.constant(0.5))
    return SampleForward(
        shape=shape,
        coarse_albedo=coarse,
        projected=projected,
        valid=valid,
        pose=ops.constant(parts.pose),
        lighting=ops.constant(parts.lighting),
        fine_albedo=fine,
    )


def render_albedo(system: System, forward: SampleForward, albedo: Tensor,
                  mode: str = "shaded"):
    """Render one albedo under the sample's frozen pose and lighting."""
    return render_image(
        forward.shape, albedo, forward.pose, forward.lighting,
        system.topology, system.camera, mode=mode,
    )


def masked_image(result_image: Tensor) -> Tensor:
    """Clamp a rendered image into [0, 1] for critic and metric use.

    Background pixels are exact zeros already; rendered values may
    overshoot 1 under bright lighting.
    """
    return ops.clamp(result_image, 0.0, 1.0)


def vertex_shading(system: System, forward: SampleForward) -> Tensor:
    """The refined albedo lit per vertex, masked to the trustworthy rows
    so it is comparable against the projected image colors."""
    lit = shade_vertices(
        forward.fine_albedo, forward.shape, forward.pose, forward.lighting,
        system.topology,
    )
    mask = ops.constant(forward.valid.astype(np.float64)[:, None])
    return ops.mul(lit, mask)
