"""Normalized graph Laplacians and their spectral rescaling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffcore import SparseMatrix
from ..errors import ContractViolation, ConvergenceError
from .topology import MeshTopology, build_adjacency


def normalized_laplacian(adjacency: SparseMatrix) -> SparseMatrix:
    """I - D^{-1/2} A D^{-1/2} for a symmetric binary adjacency.

    Isolated vertices (degree zero) keep a diagonal entry of 1, which is
    the limit convention d^{-1/2} = 0.  The spectrum lies in [0, 2].
    """
    n = adjacency.rows
    if adjacency.rows != adjacency.cols:
        raise ContractViolation("adjacency must be square")
    deg = np.zeros(n)
    np.add.at(deg, adjacency.row_idx, adjacency.values)
    with np.errstate(divide="ignore"):
        dinv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1e-300)), 0.0)
    off_vals = -adjacency.values * dinv_sqrt[adjacency.row_idx] * dinv_sqrt[adjacency.col_idx]
    diag = np.arange(n)
    rows = np.concatenate([diag, adjacency.row_idx])
    cols = np.concatenate([diag, adjacency.col_idx])
    vals = np.concatenate([np.ones(n), off_vals])
    return SparseMatrix(n, n, rows, cols, vals)


def max_eigenvalue(
    matrix: SparseMatrix,
    tol: float = 1e-10,
    max_iter: int = 10000,
    seed: int = 0,
) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Convergence requires both a small Rayleigh-quotient change and a small
    residual ||Mv - rho v||.  A seeded random start vector avoids landing
    in an invariant subspace.  Hitting the iteration cap raises
    :class:`ConvergenceError` carrying the last estimate.
    """
    if matrix.rows != matrix.cols:
        raise ContractViolation("max_eigenvalue needs a square matrix")
    n = matrix.rows
    if n == 0:
        raise ContractViolation("empty matrix")
    csr = matrix.csr()
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    rho_prev = 0.0
    for it in range(1, max_iter + 1):
        w = csr @ v
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0  # matrix annihilates the iterate: spectrum is {0}
        rho = float(v @ w)
        residual = np.linalg.norm(w - rho * v)
        v = w / norm_w
        scale = max(abs(rho), 1e-30)
        if it > 1 and abs(rho - rho_prev) <= tol * scale and residual <= np.sqrt(tol) * scale:
            return rho
        rho_prev = rho
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations",
        estimate=rho_prev,
        iterations=max_iter,
    )


def scaled_laplacian(laplacian: SparseMatrix, lambda_max: float) -> SparseMatrix:
    """2 L / lambda_max - I, mapping the spectrum into [-1, 1]."""
    if lambda_max <= 0:
        raise ContractViolation(f"lambda_max must be positive, got {lambda_max}")
    n = laplacian.rows
    scale = 2.0 / lambda_max
    dense_diag = np.zeros(n)
    vals = laplacian.values * scale
    on_diag = laplacian.row_idx == laplacian.col_idx
    dense_diag[laplacian.row_idx[on_diag]] = vals[on_diag]
    dense_diag -= 1.0
    off = ~on_diag
    diag_idx = np.arange(n)
    rows = np.concatenate([diag_idx, laplacian.row_idx[off]])
    cols = np.concatenate([diag_idx, laplacian.col_idx[off]])
    values = np.concatenate([dense_diag, vals[off]])
    keep = values != 0.0
    # Keep explicit diagonal entries even when zero so the matrix shape and
    # stencil stay predictable.
    keep[:n] = True
    return SparseMatrix(n, n, rows[keep], cols[keep], values[keep])


@dataclass(frozen=True)
class LaplacianPair:
    """Normalized Laplacian plus its rescaled form and the scale used."""

    laplacian: SparseMatrix
    scaled: SparseMatrix
    lambda_max: float


# Relative headroom added to the power-iteration estimate.  The iteration
# approaches the top eigenvalue from below, so a bare estimate can leave the
# rescaled spectrum a hair above 1; the margin keeps it inside [-1, 1] at
# the cost of compressing filters by one part in a million.
LAMBDA_MARGIN = 1e-6


def laplacian_pair(
    topology: MeshTopology,
    lambda_max_mode: str = "power",
    tol: float = 1e-10,
    max_iter: int = 10000,
) -> LaplacianPair:
    """Build the (L, scaled L) pair for a mesh.

    ``lambda_max_mode`` selects how the spectral radius is obtained:
    "power" runs power iteration and inflates the estimate by a small
    safety margin; "fixed2" uses the universal upper bound 2.0.
    """
    lap = normalized_laplacian(build_adjacency(topology))
    if lambda_max_mode == "fixed2":
        lam = 2.0
    elif lambda_max_mode == "power":
        # L has unit diagonal, so lambda_max >= 1 and the margin keeps the
        # scale strictly positive.
        lam = max_eigenvalue(lap, tol=tol, max_iter=max_iter) * (1.0 + LAMBDA_MARGIN)
    else:
        raise ContractViolation(f"unknown lambda_max_mode {lambda_max_mode!r}")
    return LaplacianPair(laplacian=lap, scaled=scaled_laplacian(lap, lam), lambda_max=lam)
