"""Training objectives, the adversarial machinery, and image metrics."""

from .adversarial import adversarial_loss
from .metrics import image_metrics
from .schedule import LossTerms, LossWeights, sigmas_at, total_loss
from .terms import ToyEmbedder, identity_loss, pixel_loss, vertex_loss

__all__ = [
    "LossTerms",
    "LossWeights",
    "ToyEmbedder",
    "adversarial_loss",
    "identity_loss",
    "image_metrics",
    "pixel_loss",
    "sigmas_at",
    "total_loss",
    "vertex_loss",
]
