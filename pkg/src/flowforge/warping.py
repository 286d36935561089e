"""Backward warping, canonical coordinate grids and Fourier coordinate embeddings.

Warping convention: flow is target-indexed and the output at pixel ``p``
samples the input at ``p - flow(p)``.  Samples that fall outside the frame are
returned as 0 and flagged invalid; nothing is inpainted.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, DomainError, IndexingMismatchError
from .grid import FlowField, Indexing, as_image, bilinear_sample, check_same_shape

DEFAULT_FREQUENCIES = 8


def canonical_grid(width: int, height: int) -> np.ndarray:
    """Align-corners identity grid of shape ``(H, W, 2)`` with values in ``[-1, 1]``."""
    if width < 2 or height < 2:
        raise DimensionError(f"canonical grid needs width, height >= 2, got {width}x{height}")
    xs = 2.0 * np.arange(width) / (width - 1) - 1.0
    ys = 2.0 * np.arange(height) / (height - 1) - 1.0
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx, gy], axis=-1)


def fourier_embed(grid, n_freqs: int = DEFAULT_FREQUENCIES) -> np.ndarray:
    """Sinusoidal embedding with frequencies ``2**k * pi`` for ``k < n_freqs``.

    Channel layout (``4 * n_freqs`` total): sines for x at every k, sines for y
    at every k, then cosines in the same order.
    """
    if n_freqs < 1:
        raise DomainError(f"need at least one frequency, got {n_freqs}")
    grid = np.asarray(grid, dtype=np.float64)
    freqs = (2.0 ** np.arange(n_freqs)) * np.pi
    # (..., 2, L) -> (..., 2L) ordered as coord-major, frequency-minor.
    phase = (grid[..., :, None] * freqs).reshape(grid.shape[:-1] + (2 * n_freqs,))
    return np.concatenate([np.sin(phase), np.cos(phase)], axis=-1)


def _require_target(flow: FlowField):
    if flow.indexing != Indexing.TARGET:
        raise IndexingMismatchError("backward warping expects a target-indexed flow field")


def _sample_positions(flow: FlowField):
    ys, xs = np.mgrid[0 : flow.height, 0 : flow.width]
    return xs - flow.u, ys - flow.v


def backward_warp(raster, flow: FlowField, flow_valid=None):
    """Warp any ``(H, W, C)`` raster by a target-indexed flow.

    Returns:
        ``(warped, valid)``; ``valid`` is False where the sample position left
        the frame, where the flow is non-finite, or where ``flow_valid`` is False.
    """
    _require_target(flow)
    raster = as_image(raster)
    check_same_shape(raster, flow.data, names=("raster", "flow"))
    sx, sy = _sample_positions(flow)
    out, valid = bilinear_sample(raster, sx, sy)
    if flow_valid is not None:
        valid = valid & np.asarray(flow_valid, dtype=bool)
        out[~valid] = 0.0
    return out, valid


def backward_warp_image(image, flow: FlowField, flow_valid=None):
    """``I'(p) = I(p - F(p))``; invalid pixels are 0."""
    return backward_warp(image, flow, flow_valid)


def warp_embedding(embedding, flow: FlowField, flow_valid=None):
    """Warp a coordinate embedding (or any feature map) into the target view."""
    return backward_warp(embedding, flow, flow_valid)


def warp_coordinates(grid, flow: FlowField):
    """Warp raw normalized coordinates instead of their embedding.

    Feeding the result to :func:`fourier_embed` gives the re-embed-after-warp
    variant of :func:`warp_embedding`.
    """
    return backward_warp(grid, flow)


def target_embedding(width, height, flow: FlowField, n_freqs=DEFAULT_FREQUENCIES, reembed=False):
    """Canonical embedding for the source view and its flow-warped counterpart.

    Returns:
        ``(source_embedding, target_embedding, target_valid)``.
    """
    grid = canonical_grid(width, height)
    source = fourier_embed(grid, n_freqs)
    if reembed:
        warped, valid = warp_coordinates(grid, flow)
        target = np.where(valid[..., None], fourier_embed(warped, n_freqs), 0.0)
    else:
        target, valid = warp_embedding(source, flow)
    return source, target, valid
