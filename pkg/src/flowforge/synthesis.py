"""Artificial optical flow from a depth map and a virtual camera motion.

Every source pixel with valid depth is lifted to 3-D, moved into the target
camera and re-projected.  Re-projections are splatted to their nearest target
pixel and collisions are resolved with a z-buffer (smaller transformed depth
wins, ties go to the smaller source linear index).  The winning record yields
a target-indexed flow vector and the matching sub-pixel source coordinate:

    flow(q) = p' - s          (displacement of the winning source pixel s)
    corr(q) = q - flow(q)

so ``flow(q) = q - corr(q)`` holds exactly on the target grid.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .camera import Intrinsics, SE3Pose, back_project, project, transform_point
from .errors import DimensionError, DomainError
from .grid import DepthMap, FlowField, Indexing

MASK64 = (1 << 64) - 1
DROPOUT_SALT = 0xD1B54A32D192ED03


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def stream_seed(seed: int, sample_index: int) -> int:
    """Per-sample RNG seed: ``splitmix64((splitmix64(seed) + index) mod 2**64)``."""
    return splitmix64((splitmix64(seed & MASK64) + sample_index) & MASK64)


def sample_rng(seed: int, sample_index: int, salt: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(stream_seed(seed ^ salt, sample_index)))


@dataclass(frozen=True)
class MotionConfig:
    translation_range: tuple[float, float] = (0.8, 1.2)
    axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    allow_negative: bool = True
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.translation_range
        if not 0 <= lo <= hi:
            raise DomainError(f"translation_range must satisfy 0 <= min <= max, got {self.translation_range}")
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-9:
            raise DomainError(f"motion axis must have unit norm, got {self.axis}")


def draw_translation(cfg: MotionConfig, sample_index: int) -> np.ndarray:
    """Signed camera displacement (world frame, meters) for one sample."""
    rng = sample_rng(cfg.seed, sample_index)
    lo, hi = cfg.translation_range
    magnitude = rng.uniform(lo, hi)
    sign = 1.0
    if cfg.allow_negative and rng.integers(0, 2) == 0:
        sign = -1.0
    return sign * magnitude * np.asarray(cfg.axis, dtype=np.float64) + 0.0


def sample_camera_motion(cfg: MotionConfig, sample_index: int) -> SE3Pose:
    """View matrix of the virtual target camera; the source camera sits at the world origin."""
    return SE3Pose.from_camera_position(draw_translation(cfg, sample_index))


class CoordinateSpace(str, enum.Enum):
    PIXEL = "pixel"
    NORMALIZED = "normalized"


@dataclass(frozen=True)
class CorrespondenceGrid:
    """Per target pixel, the real-valued source coordinate it was rendered from.

    Invalid entries hold NaN and must not be read as coordinates.
    """

    data: np.ndarray
    valid: np.ndarray
    coordinate_space: CoordinateSpace = CoordinateSpace.PIXEL

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]


def _pixel_grid(h, w):
    ys, xs = np.mgrid[0:h, 0:w]
    return xs.astype(np.float64), ys.astype(np.float64)


def source_displacements(depth: DepthMap, intr: Intrinsics, v_rel: SE3Pose):
    """Per source pixel displacement ``(du, dv)`` and transformed depth.

    The displacement is the difference between the target projection and the
    source pixel's own re-projection, which makes it exactly zero under the
    identity transform.

    Returns:
        ``(du, dv, z_target, ok)`` arrays of shape ``(H, W)``; ``ok`` marks
        pixels with valid depth that land in front of the target camera.
    """
    h, w = depth.shape
    if (intr.height, intr.width) != (h, w):
        raise DimensionError(f"intrinsics are {intr.width}x{intr.height} but depth is {w}x{h}")
    xs, ys = _pixel_grid(h, w)
    valid = depth.valid
    d = np.where(valid, depth.data, 1.0)
    points = back_project(xs, ys, d, intr)
    u_s, v_s, _, _ = project(points, intr)
    moved = transform_point(v_rel, points)
    u_t, v_t, z_t, front = project(moved, intr)
    ok = valid & front
    with np.errstate(invalid="ignore"):
        du = np.where(ok, u_t - u_s, np.nan)
        dv = np.where(ok, v_t - v_s, np.nan)
    return du, dv, z_t, ok


def splat_nearest(xs, ys, du, dv, keys, ok, h, w) -> np.ndarray:
    """Nearest-pixel splat of source records onto an ``h x w`` target grid.

    Each record lands on ``floor(x + du + 0.5), floor(y + dv + 0.5)``; records
    landing outside the grid are dropped.  Per target pixel the record with the
    lexicographically smallest ``keys`` wins (first key most significant), with
    the source linear index as final tie-break.

    Returns:
        ``(h, w)`` array holding the winning source linear index, -1 where
        nothing landed.
    """
    with np.errstate(invalid="ignore"):
        qx = np.floor(xs + du + 0.5)
        qy = np.floor(ys + dv + 0.5)
        inside = ok & (qx >= 0) & (qx <= w - 1) & (qy >= 0) & (qy <= h - 1)
    src = np.flatnonzero(inside.ravel())
    tgt = (qy.ravel()[src] * w + qx.ravel()[src]).astype(np.int64)
    # np.lexsort treats the last key as primary.
    sort_keys = [src] + [np.asarray(k).ravel()[src] for k in reversed(keys)] + [tgt]
    order = np.lexsort(sort_keys)
    tgt_sorted = tgt[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = tgt_sorted[1:] != tgt_sorted[:-1]
    winner = np.full(h * w, -1, dtype=np.int64)
    winner[tgt_sorted[first]] = src[order][first]
    return winner.reshape(h, w)


def synthesize_flow(depth: DepthMap, intr: Intrinsics, v_rel: SE3Pose):
    """Target-indexed flow, forward correspondence grid and validity mask.

    Target pixels receiving no re-projection (disocclusions, content that
    entered from outside the frame) are invalid: flow 0, correspondence NaN.
    """
    h, w = depth.shape
    du, dv, z_t, ok = source_displacements(depth, intr, v_rel)
    xs, ys = _pixel_grid(h, w)
    winner = splat_nearest(xs, ys, du, dv, [z_t], ok, h, w)

    valid = winner >= 0
    idx = winner[valid]
    flow = np.zeros((h, w, 2))
    flow[valid, 0] = du.ravel()[idx]
    flow[valid, 1] = dv.ravel()[idx]

    qx, qy = _pixel_grid(h, w)
    corr = np.full((h, w, 2), np.nan)
    corr[valid, 0] = qx[valid] - flow[valid, 0]
    corr[valid, 1] = qy[valid] - flow[valid, 1]
    return (
        FlowField(flow, Indexing.TARGET),
        CorrespondenceGrid(corr, valid.copy(), CoordinateSpace.PIXEL),
        valid,
    )


def source_indexed_flow(depth: DepthMap, intr: Intrinsics, v_rel: SE3Pose):
    """Flow stored at source pixels: ``projected - p_t`` wherever the projection stays in frame."""
    h, w = depth.shape
    du, dv, _, ok = source_displacements(depth, intr, v_rel)
    xs, ys = _pixel_grid(h, w)
    with np.errstate(invalid="ignore"):
        qx = np.floor(xs + du + 0.5)
        qy = np.floor(ys + dv + 0.5)
        valid = ok & (qx >= 0) & (qx <= w - 1) & (qy >= 0) & (qy <= h - 1)
    flow = np.zeros((h, w, 2))
    flow[valid, 0] = du[valid]
    flow[valid, 1] = dv[valid]
    return FlowField(flow, Indexing.SOURCE), valid


class ReindexNoOpWarning(UserWarning):
    pass


def reindex_flow(flow: FlowField, valid, to: Indexing):
    """Move a flow field between the source and target pixel grids.

    Each valid vector is carried to the nearest pixel of the other grid.
    Collisions keep the record whose exact landing point is closest to the
    pixel centre, then the smaller flow magnitude, then the smaller origin
    linear index.  Pixels that receive nothing become invalid.

    Requesting the indexing the field already has returns it unchanged and
    emits :class:`ReindexNoOpWarning`.
    """
    to = Indexing(to)
    valid = np.asarray(valid, dtype=bool)
    if flow.indexing == to:
        warnings.warn(f"flow is already {to.value}-indexed", ReindexNoOpWarning, stacklevel=2)
        return flow, valid.copy()
    h, w = flow.shape
    xs, ys = _pixel_grid(h, w)
    # Target -> source walks backwards along the vector.
    sign = -1.0 if to == Indexing.SOURCE else 1.0
    du = sign * flow.u
    dv = sign * flow.v
    ok = valid & np.isfinite(du) & np.isfinite(dv)
    with np.errstate(invalid="ignore"):
        lx = xs + du
        ly = ys + dv
        dist = (lx - np.floor(lx + 0.5)) ** 2 + (ly - np.floor(ly + 0.5)) ** 2
    winner = splat_nearest(xs, ys, du, dv, [dist, flow.magnitude()], ok, h, w)
    new_valid = winner >= 0
    out = np.zeros((h, w, 2))
    out[new_valid] = flow.data.reshape(-1, 2)[winner[new_valid]]
    return FlowField(out, to), new_valid


def drop_flow_points(valid, rate: float, rng) -> np.ndarray:
    """Invalidate each valid pixel independently with probability ``rate``.

    ``rng`` is a ``numpy.random.Generator`` or an integer seed.
    """
    if not 0 <= rate <= 1:
        raise DomainError(f"dropout rate must lie in [0, 1], got {rate}")
    valid = np.asarray(valid, dtype=bool)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.Generator(np.random.PCG64(int(rng)))
    drop = rng.random(valid.shape) < rate
    return valid & ~drop


def normalize_correspondence(grid: CorrespondenceGrid) -> CorrespondenceGrid:
    """Pixel coordinates to the align-corners ``[-1, 1]`` convention."""
    if grid.coordinate_space != CoordinateSpace.PIXEL:
        raise DomainError("grid is already normalized")
    h, w = grid.shape
    if w < 2 or h < 2:
        raise DimensionError(f"cannot normalize a {w}x{h} grid (need both sides >= 2)")
    out = np.empty_like(grid.data)
    out[..., 0] = 2.0 * grid.data[..., 0] / (w - 1) - 1.0
    out[..., 1] = 2.0 * grid.data[..., 1] / (h - 1) - 1.0
    return CorrespondenceGrid(out, grid.valid.copy(), CoordinateSpace.NORMALIZED)


def denormalize_correspondence(grid: CorrespondenceGrid) -> CorrespondenceGrid:
    if grid.coordinate_space != CoordinateSpace.NORMALIZED:
        raise DomainError("grid is already in pixel units")
    h, w = grid.shape
    if w < 2 or h < 2:
        raise DimensionError(f"cannot denormalize a {w}x{h} grid (need both sides >= 2)")
    out = np.empty_like(grid.data)
    out[..., 0] = (grid.data[..., 0] + 1.0) * (w - 1) / 2.0
    out[..., 1] = (grid.data[..., 1] + 1.0) * (h - 1) / 2.0
    return CorrespondenceGrid(out, grid.valid.copy(), CoordinateSpace.PIXEL)
