"""Synthetic face dataset.

Each sample draws random model coefficients, a mild pose in front of the
camera, and ambient-dominant lighting, then renders the ground-truth image
from an albedo that carries a hidden mid-frequency "detail" field on top
of what the linear texture model expresses.  The coarse model therefore
underfits every image by construction, which is the signal the refinement
networks are trained to recover.  The coefficient vector stored with each
sample is the oracle stand-in for a regressor network.

Face masks are all-ones at this scale; occlusion handling is the masks'
job in real data, not here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffcore import no_grad, ops
from ..errors import ContractViolation, FormatError
from ..morphable import (
    COEFF_DIM,
    EXPRESSION_DIM,
    IDENTITY_DIM,
    LIGHTING_DIM,
    TEXTURE_DIM,
    MorphableModel,
    instantiate,
    split_coefficients,
)
from ..render import render_image
from .checkpoint import load_tensors, save_tensors
from .config import RunConfig

# SH band 0 basis constant; a DC lighting coefficient of 1/_Y0 reproduces
# the albedo exactly, so DC values are drawn around brightness/_Y0.
_Y0 = 0.282095

_DETAIL_WAVES = 4


@dataclass(frozen=True)
class Sample:
    """One training example: image, face mask, oracle coefficients, and
    the ground-truth fine albedo the image was rendered from."""

    image: np.ndarray      # (H, W, 3) in [0, 1]
    face_mask: np.ndarray  # (H, W) binary
    coeffs: np.ndarray     # (257,)
    albedo: np.ndarray     # (n, 3) ground truth, diagnostics only


@dataclass(frozen=True)
class SynthDataset:
    samples: tuple[Sample, ...]

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, index: int) -> Sample:
        return self.samples[index]


def _detail_field(rng: np.random.Generator, model: MorphableModel,
                  amplitude: float) -> np.ndarray:
    """Mid-frequency directional waves over the mesh, (n, 3), outside the
    smooth low-frequency span the texture basis was built from."""
    centered = model.mean_shape - model.mean_shape.mean(axis=0)
    unit = centered / np.linalg.norm(centered, axis=1, keepdims=True)
    field = np.zeros(model.n_vertices)
    for _ in range(_DETAIL_WAVES):
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        freq = rng.uniform(5.0, 9.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        field += np.cos(freq * (unit @ direction) + phase)
    field /= max(np.abs(field).max(), 1e-12)
    channel_gain = rng.uniform(0.5, 1.0, size=3)
    return amplitude * field[:, None] * channel_gain[None, :]


def _draw_coefficients(rng: np.random.Generator) -> np.ndarray:
    identity = rng.normal(0.0, 0.3, IDENTITY_DIM)
    expression = rng.normal(0.0, 0.2, EXPRESSION_DIM)
    texture = rng.normal(0.0, 0.3, TEXTURE_DIM)
    pose = np.concatenate([
        rng.normal(0.0, 0.08, 3),            # rotation angles
        rng.normal(0.0, 0.04, 2),            # in-plane shift
        [4.2 + rng.normal(0.0, 0.1)],        # distance from the camera
    ])
    lighting = np.zeros(LIGHTING_DIM)
    for c in range(3):
        lighting[c * 9] = (0.9 + rng.normal(0.0, 0.03)) / _Y0
        lighting[c * 9 + 1:c * 9 + 9] = rng.normal(0.0, 0.12, 8)
    return np.concatenate([identity, expression, texture, pose, lighting])


def synth_dataset(config: RunConfig, count: int,
                  model: MorphableModel | None = None) -> SynthDataset:
    if count < 1:
        raise ContractViolation(f"count must be at least 1, got {count}")
    if model is None:
        from .system import resolve_model
        model = resolve_model(config)
    camera = config.camera()
    topo = model.topology
    samples = []
    for i in range(count):
        rng = np.random.default_rng([config.seed, 40, i])
        coeffs = _draw_coefficients(rng)
        parts = split_coefficients(coeffs)
        with no_grad():
            shape, coarse = instantiate(model, parts)
        fine = np.clip(
            coarse.data + _detail_field(rng, model, config.detail_amplitude),
            0.02, 0.98,
        )
        with no_grad():
            result = render_image(
                shape, ops.constant(fine), ops.constant(parts.pose),
                ops.constant(parts.lighting), topo, camera,
            )
        image = np.clip(result.image.data, 0.0, 1.0)
        samples.append(Sample(
            image=image,
            face_mask=np.ones((camera.height, camera.width)),
            coeffs=coeffs,
            albedo=fine,
        ))
    return SynthDataset(tuple(samples))


def save_dataset(path, dataset: SynthDataset) -> None:
    if len(dataset) == 0:
        raise ContractViolation("refusing to save an empty dataset")
    tensors = {
        "images": np.stack([s.image for s in dataset.samples]),
        "masks": np.stack([s.face_mask for s in dataset.samples]),
        "coeffs": np.stack([s.coeffs for s in dataset.samples]),
        "albedo": np.stack([s.albedo for s in dataset.samples]),
    }
    save_tensors(path, tensors)


def load_dataset(path) -> SynthDataset:
    tensors = load_tensors(path)
    missing = {"images", "masks", "coeffs", "albedo"} - set(tensors)
    if missing:
        raise FormatError(f"{path}: dataset missing arrays {sorted(missing)}")
    images, masks = tensors["images"], tensors["masks"]
    coeffs, albedo = tensors["coeffs"], tensors["albedo"]
    if images.ndim != 4 or images.shape[3] != 3:
        raise FormatError(f"{path}: images must be (count, H, W, 3), got {images.shape}")
    count = images.shape[0]
    if masks.shape != images.shape[:3]:
        raise FormatError(f"{path}: masks shape {masks.shape} does not match images")
    if coeffs.shape != (count, COEFF_DIM):
        raise FormatError(f"{path}: coeffs must be ({count}, {COEFF_DIM}), got {coeffs.shape}")
    if albedo.ndim != 3 or albedo.shape[0] != count or albedo.shape[2] != 3:
        raise FormatError(f"{path}: albedo must be ({count}, n, 3), got {albedo.shape}")
    return SynthDataset(tuple(
        Sample(image=images[i], face_mask=masks[i],
               coeffs=coeffs[i], albedo=albedo[i])
        for i in range(count)
    ))
