"""Coarse-to-fine 3D face reconstruction with graph-convolutional texture refinement.

Subpackages:
    diffcore   reverse-mode autodiff over float64 numpy arrays
    meshgraph  triangle-mesh topology, graph Laplacians, mesh hierarchies
    morphable  linear shape/texture model and its binary container format
    gcn        spectral graph-convolutional networks (decoder, refiner,
               combiner, image discriminator)
    render     differentiable deferred-shading rasterizer
    losses     training losses and image metrics
    pipeline   configs, synthetic data, training loop, CLI
"""

__version__ = "0.1.0"
