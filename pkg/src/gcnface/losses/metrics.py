"""Reconstruction quality metrics: L1, PSNR, SSIM, embedding cosine.

Evaluation-side code on plain numpy; nothing here participates in
gradients.  PSNR of identical images is reported as the 99 dB cap
instead of infinity so reports stay serializable.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy import ndimage

from ..diffcore import Tensor
from ..errors import ContractViolation, DegenerateMaskError

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _gaussian_kernel(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA):
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


_KERNEL = _gaussian_kernel()


def _windowed(img: np.ndarray) -> np.ndarray:
    return np.stack(
        [ndimage.convolve(img[:, :, c], _KERNEL, mode="nearest")
         for c in range(img.shape[2])], axis=2)


def _ssim_map(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    mu_x = _windowed(x)
    mu_y = _windowed(y)
    xx = _windowed(x * x) - mu_x**2
    yy = _windowed(y * y) - mu_y**2
    xy = _windowed(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
    return num / den


def image_metrics(
    x: np.ndarray,
    y: np.ndarray,
    mask: Optional[np.ndarray] = None,
    embed=None,
) -> dict:
    """l1 / psnr / ssim over the masked region, plus embedding cosine.

    ``mask`` is an (H, W) binary region (None = whole image).  The SSIM
    window shrinks the usable region by its 5-pixel margin.  ``embed``
    adds a "cosine" entry computed on the full images when provided.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 3 or x.shape[2] != 3:
        raise ContractViolation(f"images must share (H, W, 3): {x.shape} vs {y.shape}")
    h, w = x.shape[:2]
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ContractViolation(f"images must be at least {SSIM_WINDOW} pixels a side")
    if mask is None:
        mask = np.ones((h, w))
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (h, w):
        raise ContractViolation(f"mask shape {mask.shape} != image {(h, w)}")
    if not np.isin(mask, (0.0, 1.0)).all():
        raise ContractViolation("mask must be binary")
    sel = mask.astype(bool)
    if not sel.any():
        raise DegenerateMaskError("metric mask is empty")

    diff = x - y
    l1 = float(np.abs(diff[sel]).mean())
    mse = float((diff[sel] ** 2).mean())
    if mse == 0.0:
        psnr = PSNR_CAP
    else:
        psnr = min(10.0 * np.log10(1.0 / mse), PSNR_CAP)

    margin = (SSIM_WINDOW - 1) // 2
    ssim_sel = np.zeros_like(sel)
    ssim_sel[margin:h - margin, margin:w - margin] = sel[margin:h - margin,
                                                         margin:w - margin]
    if not ssim_sel.any():
        ssim_sel = sel  # tiny masks: fall back to the full selection
    ssim = float(_ssim_map(x, y)[ssim_sel].mean())

    out = {"l1": l1, "psnr": float(psnr), "ssim": ssim}
    if embed is not None:
        fx = embed(Tensor(x)).data
        fy = embed(Tensor(y)).data
        denom = np.linalg.norm(fx) * np.linalg.norm(fy)
        if denom == 0.0:
            raise ContractViolation("cosine metric needs nonzero embeddings")
        out["cosine"] = float(fx @ fy / denom)
    return out
