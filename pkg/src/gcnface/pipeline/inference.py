"""Export a trained reconstruction for one sample.

Outputs, all under the target directory:

    coarse.obj         geometry with the linear-model vertex colors
    refined.obj        same geometry, refined vertex colors
    input.png          the sample's input image
    render_coarse.png  shaded render of the coarse texture
    render_fine.png    shaded render of the refined texture
    albedo_fine.png    refined texture interpolated without lighting
    mask_proj.png      mesh coverage mask of the render
"""

from __future__ import annotations

import os

import numpy as np

from ..diffcore import no_grad
from ..errors import ContractViolation
from ..meshgraph import write_obj
from ..render import save_png
from .checkpoint import load_checkpoint
from .config import RunConfig
from .dataset import SynthDataset
from .system import System, build_system, refine_sample, render_albedo

OUTPUT_NAMES = (
    "coarse.obj", "refined.obj", "input.png", "render_coarse.png",
    "render_fine.png", "albedo_fine.png", "mask_proj.png",
)


def load_system(config: RunConfig, checkpoint_path) -> System:
    """Build the configured system and install checkpoint weights."""
    system = build_system(config)
    ckpt = load_checkpoint(checkpoint_path)
    system.load_parameters(ckpt.generator, ckpt.critic)
    return system


def infer(config: RunConfig, checkpoint_path, dataset: SynthDataset,
          index: int, out_dir, system: System | None = None) -> dict:
    if not 0 <= index < len(dataset):
        raise ContractViolation(
            f"sample index {index} outside dataset of {len(dataset)}"
        )
    if system is None:
        system = load_system(config, checkpoint_path)
    sample = dataset[index]
    os.makedirs(out_dir, exist_ok=True)

    with no_grad():
        fwd = refine_sample(system, sample)
        fine = render_albedo(system, fwd, fwd.fine_albedo)
        coarse = render_albedo(system, fwd, fwd.coarse_albedo)
        albedo_only = render_albedo(system, fwd, fwd.fine_albedo, mode="albedo")

    positions = fwd.shape.data
    topo = system.topology
    paths = {name: os.path.join(out_dir, name) for name in OUTPUT_NAMES}
    write_obj(paths["coarse.obj"], positions, topo.triangles,
              colors=np.clip(fwd.coarse_albedo.data, 0.0, 1.0))
    write_obj(paths["refined.obj"], positions, topo.triangles,
              colors=np.clip(fwd.fine_albedo.data, 0.0, 1.0))
    save_png(paths["input.png"], sample.image)
    save_png(paths["render_coarse.png"], np.clip(coarse.image.data, 0.0, 1.0))
    save_png(paths["render_fine.png"], np.clip(fine.image.data, 0.0, 1.0))
    save_png(paths["albedo_fine.png"], np.clip(albedo_only.image.data, 0.0, 1.0))
    save_png(paths["mask_proj.png"], fine.m_proj)
    return paths
