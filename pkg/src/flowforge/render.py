"""Geometric next-frame rendering plus the fusion and attention operators.

The learned generator is replaced by a deterministic pipeline: the source
frame is resampled through the forward correspondence grid, disocclusion holes
are filled from the nearest rendered pixel, and the two candidates are blended
with a sigmoid-gated convolution.  Attention and fusion take their parameters
as plain arrays; nothing here is trained.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import expit

from .errors import DimensionError, DomainError, FormatError
from .grid import as_image, bilinear_sample, check_same_shape, clip_intensity
from .synthesis import CoordinateSpace, CorrespondenceGrid, denormalize_correspondence


@dataclass(frozen=True)
class RenderedFrame:
    image: np.ndarray
    hole_mask: np.ndarray  # True where a pixel was rendered


def render_next_frame(image, corr: CorrespondenceGrid) -> RenderedFrame:
    """Sample ``image`` at each valid target pixel's source coordinate; the rest are holes."""
    image = as_image(image)
    if corr.coordinate_space != CoordinateSpace.PIXEL:
        corr = denormalize_correspondence(corr)
    check_same_shape(image, corr.data, names=("image", "correspondence"))
    valid = corr.valid
    h, w = corr.shape
    # A stored coordinate lies within half a pixel of a real source pixel, so
    # clamping only extends the border instead of inventing content.
    sx = np.clip(np.where(valid, corr.data[..., 0], 0.0), 0, w - 1)
    sy = np.clip(np.where(valid, corr.data[..., 1], 0.0), 0, h - 1)
    out, inside = bilinear_sample(image, sx, sy)
    rendered = valid & inside
    out[~rendered] = 0.0
    return RenderedFrame(clip_intensity(out), rendered)


def nearest_valid_index(valid) -> np.ndarray:
    """For every pixel, the linear index of the nearest valid pixel.

    Distance is Euclidean on the pixel lattice; equidistant candidates resolve
    to the smaller linear index.  Valid pixels map to themselves.
    """
    valid = np.asarray(valid, dtype=bool)
    h, w = valid.shape
    flat_valid = np.flatnonzero(valid.ravel())
    if flat_valid.size == 0:
        raise DomainError("cannot fill holes: frame has no valid pixel")
    result = np.arange(h * w)
    holes = np.flatnonzero(~valid.ravel())
    if holes.size == 0:
        return result.reshape(h, w)

    vy, vx = np.divmod(flat_valid, w)
    tree = cKDTree(np.column_stack([vx, vy]))
    hy, hx = np.divmod(holes, w)
    queries = np.column_stack([hx, hy])

    chosen = np.empty(holes.size, dtype=np.int64)
    pending = np.arange(holes.size)
    k = 8
    while pending.size:
        kk = min(k, flat_valid.size)
        _, nbr = tree.query(queries[pending], k=kk)
        nbr = nbr.reshape(pending.size, kk)
        cand = flat_valid[nbr]
        # Exact integer squared distances; the tree's float ordering is only a prefilter.
        d2 = (vx[nbr] - hx[pending, None]) ** 2 + (vy[nbr] - hy[pending, None]) ** 2
        best = d2.min(axis=1)
        tied = d2 == best[:, None]
        # If the farthest returned neighbour still ties, a tied candidate may be missing.
        unresolved = tied[:, -1] & (kk < flat_valid.size)
        pick = np.where(tied, cand, np.iinfo(np.int64).max).min(axis=1)
        done = ~unresolved
        chosen[pending[done]] = pick[done]
        pending = pending[unresolved]
        k *= 4
    result[holes] = chosen
    return result.reshape(h, w)


def fill_holes_nearest(frame: RenderedFrame) -> np.ndarray:
    """Give every hole the value of its nearest rendered pixel."""
    image = as_image(frame.image)
    h, w, c = image.shape
    src = nearest_valid_index(frame.hole_mask)
    return image.reshape(-1, c)[src.ravel()].reshape(h, w, c)


# --------------------------------------------------------------------------
# Adaptive fusion
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FusionParams:
    """Weights of the single-output convolution gating the fusion.

    ``kernel`` has shape ``(k, k, C_in)``; the layout on disk is the kernel in
    row-major order followed by the bias.
    """

    kernel: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        kernel = np.asarray(self.kernel, dtype=np.float64)
        if kernel.ndim == 4 and kernel.shape[3] == 1:
            kernel = kernel[..., 0]
        if kernel.ndim != 3 or kernel.shape[0] != kernel.shape[1] or kernel.shape[0] % 2 == 0:
            raise DimensionError(f"kernel must be (k, k, C_in) with odd k, got {kernel.shape}")
        if not np.all(np.isfinite(kernel)) or not np.isfinite(self.bias):
            raise DomainError("fusion weights must be finite")
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def kernel_size(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[2]

    @classmethod
    def zeros(cls, in_channels, kernel_size=3, bias=0.0) -> "FusionParams":
        return cls(np.zeros((kernel_size, kernel_size, in_channels)), bias)

    @classmethod
    def mask_gate(cls, image_channels=3, kernel_size=3, gain=40.0) -> "FusionParams":
        """Gate that trusts the warped frame where the mask is set and the generated one elsewhere."""
        in_ch = 2 * image_channels + 1
        kernel = np.zeros((kernel_size, kernel_size, in_ch))
        kernel[kernel_size // 2, kernel_size // 2, -1] = gain
        return cls(kernel, -gain / 2)

    @classmethod
    def load(cls, path, kernel_size, in_channels) -> "FusionParams":
        """Read weights from ``.txt`` (whitespace separated) or raw little-endian float32 binary."""
        path = Path(path)
        n = kernel_size * kernel_size * in_channels + 1
        if path.suffix in (".txt", ".csv"):
            try:
                values = np.array(path.read_text().replace(",", " ").split(), dtype=np.float64)
            except ValueError as exc:
                raise FormatError(f"{path}: non-numeric weight") from exc
        else:
            raw = path.read_bytes()
            if len(raw) % 4:
                raise FormatError(f"{path}: binary weight file size is not a multiple of 4")
            values = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        if values.size != n:
            raise FormatError(f"{path}: expected {n} weights, found {values.size}")
        return cls(values[:-1].reshape(kernel_size, kernel_size, in_channels), values[-1])

    def save(self, path) -> None:
        path = Path(path)
        values = np.append(self.kernel.ravel(), self.bias)
        if path.suffix in (".txt", ".csv"):
            path.write_text(" ".join(repr(float(v)) for v in values) + "\n")
        else:
            path.write_bytes(values.astype("<f4").tobytes())


def conv2d_same(x, kernel) -> np.ndarray:
    """Zero-padded, stride-1 cross-correlation of ``(H, W, C)`` with ``(k, k, C)`` to one channel."""
    x = as_image(x)
    k = kernel.shape[0]
    r = k // 2
    h, w, _ = x.shape
    padded = np.pad(x, ((r, r), (r, r), (0, 0)))
    out = np.zeros((h, w))
    for dy in range(k):
        for dx in range(k):
            out += padded[dy : dy + h, dx : dx + w] @ kernel[dy, dx]
    return out


def fusion_weights(i_gen, i_warp, mask, params: FusionParams) -> np.ndarray:
    """Per-pixel blend weight ``sigmoid(conv(concat(i_gen, i_warp, mask)) + bias)``, shape ``(H, W, 1)``."""
    i_gen = as_image(i_gen)
    i_warp = as_image(i_warp)
    mask = np.asarray(mask, dtype=np.float64)
    check_same_shape(i_gen, i_warp, mask, names=("i_gen", "i_warp", "mask"))
    stacked = np.concatenate([i_gen, i_warp, mask.reshape(mask.shape[:2] + (1,))], axis=-1)
    if stacked.shape[2] != params.in_channels:
        raise DimensionError(
            f"fusion kernel expects {params.in_channels} input channels, got {stacked.shape[2]}"
        )
    return expit(conv2d_same(stacked, params.kernel) + params.bias)[..., None]


def fuse(i_gen, i_warp, weights) -> np.ndarray:
    """``w * i_warp + (1 - w) * i_gen``."""
    i_gen = as_image(i_gen)
    i_warp = as_image(i_warp)
    w = as_image(weights)
    check_same_shape(i_gen, i_warp, w, names=("i_gen", "i_warp", "weights"))
    if np.any(~((w >= 0) & (w <= 1))):
        raise DomainError("fusion weights must lie in [0, 1]")
    return w * i_warp + (1.0 - w) * i_gen


# --------------------------------------------------------------------------
# Cross-view attention
# --------------------------------------------------------------------------


def softmax_rows(scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def attend(q, k, v, scale=None, return_weights=False):
    """Scaled dot-product attention over token matrices ``q (N, d)``, ``k (M, d)``, ``v (M, d_v)``."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if scale is None:
        scale = 1.0 / np.sqrt(k.shape[1])
    weights = softmax_rows((q @ k.T) * scale)
    out = weights @ v
    if return_weights:
        return out, weights
    return out


def cross_view_attention(a_t, a_t1, scale=None, projections=None, return_weights=False):
    """Single-head attention with queries from the target view and keys/values from both views.

    Args:
        a_t: Reference-view features ``(H, W, d)``.
        a_t1: Target-view features ``(H, W, d)``.
        scale: Score multiplier; defaults to ``1 / sqrt(d)`` of the key width.
        projections: Optional ``(W_q, W_k, W_v)`` matrices applied to the raw
            tokens before attention.
        return_weights: Also return the ``(N, 2N)`` attention matrix.

    Returns:
        Output features ``(H, W, d_v)`` and, optionally, the weights.
    """
    a_t = np.asarray(a_t, dtype=np.float64)
    a_t1 = np.asarray(a_t1, dtype=np.float64)
    if a_t.shape != a_t1.shape or a_t.ndim != 3:
        raise DimensionError(f"attention inputs must share an (H, W, d) shape, got {a_t.shape} vs {a_t1.shape}")
    h, w, d = a_t.shape
    q = a_t1.reshape(-1, d)
    kv = np.concatenate([a_t.reshape(-1, d), q], axis=0)
    k = v = kv
    if projections is not None:
        w_q, w_k, w_v = (np.asarray(m, dtype=np.float64) for m in projections)
        q, k, v = q @ w_q, kv @ w_k, kv @ w_v
    out, weights = attend(q, k, v, scale, return_weights=True)
    out = out.reshape(h, w, v.shape[1])
    if return_weights:
        return out, weights
    return out
