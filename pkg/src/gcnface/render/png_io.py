"""8-bit RGB PNG export/import for [0, 1] float images."""

from __future__ import annotations

import numpy as np
from PIL import Image

from ..errors import ContractViolation, FormatError


def save_png(path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = np.repeat(image[:, :, None], 3, axis=2)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ContractViolation(f"image must be (H, W, 3) or (H, W), got {image.shape}")
    data = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def load_png(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            data = np.asarray(rgb, dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read PNG {path}: {exc}") from None
    return data / 255.0
