"""Raster containers and the resampling kernels every other module leans on.

Conventions used throughout the package:

* Images are ``float64`` arrays of shape ``(H, W, C)`` on the [0, 255] scale.
* Pixel ``(x, y)`` addresses column ``x`` and row ``y``; pixel centres sit on
  integer coordinates, so the valid sampling domain is ``[0, W-1] x [0, H-1]``.
* Masks are boolean ``(H, W)`` arrays, ``True`` meaning valid.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError, HeaderError, MagicError, TruncatedFileError

DEFAULT_MAX_DEPTH = 80.0


class Indexing(str, enum.Enum):
    """Which frame's pixel grid a flow vector is stored on."""

    SOURCE = "source"
    TARGET = "target"


@dataclass(frozen=True)
class FlowField:
    """Dense ``(H, W, 2)`` displacement field in pixels, ``[..., 0] = u`` (x) and ``[..., 1] = v`` (y)."""

    data: np.ndarray
    indexing: Indexing = Indexing.TARGET

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 2:
            raise DimensionError(f"flow must have shape (H, W, 2), got {data.shape}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "indexing", Indexing(self.indexing))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    @property
    def u(self) -> np.ndarray:
        return self.data[..., 0]

    @property
    def v(self) -> np.ndarray:
        return self.data[..., 1]

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.data[..., 0], self.data[..., 1])

    @classmethod
    def zeros(cls, height, width, indexing=Indexing.TARGET):
        return cls(np.zeros((height, width, 2)), indexing)


@dataclass(frozen=True)
class DepthMap:
    """Metric depth in meters; pixels with ``data <= 0`` carry no depth."""

    data: np.ndarray
    max_depth: float = DEFAULT_MAX_DEPTH

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.size == 0:
            raise DimensionError(f"depth must be a non-empty (H, W) array, got {data.shape}")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, raw, max_depth=DEFAULT_MAX_DEPTH) -> "DepthMap":
        """Sanitise raw depth: clamp above ``max_depth``, mark non-positive or non-finite pixels invalid."""
        raw = np.asarray(raw, dtype=np.float64)
        if raw.ndim == 3 and raw.shape[2] == 1:
            raw = raw[..., 0]
        data = np.where(np.isfinite(raw) & (raw > 0), raw, 0.0)
        data = np.minimum(data, max_depth)
        return cls(data, max_depth)

    @property
    def valid(self) -> np.ndarray:
        return self.data > 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def as_image(data) -> np.ndarray:
    """Return ``data`` as a float64 ``(H, W, C)`` array, promoting grayscale to one channel."""
    img = np.asarray(data, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    if img.ndim != 3 or img.shape[0] == 0 or img.shape[1] == 0:
        raise DimensionError(f"image must be (H, W) or (H, W, C) and non-empty, got {img.shape}")
    return img


def clip_intensity(image: np.ndarray) -> np.ndarray:
    return np.clip(image, 0.0, 255.0)


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.rint(clip_intensity(image)).astype(np.uint8)


def check_same_shape(*arrays, names=None):
    shapes = [np.shape(a)[:2] for a in arrays]
    if len(set(shapes)) > 1:
        label = ", ".join(names) if names else "inputs"
        raise DimensionError(f"spatial shapes of {label} disagree: {shapes}")


# --------------------------------------------------------------------------
# Interpolation
# --------------------------------------------------------------------------


def bilinear_sample(raster, x, y):
    """Sample ``raster`` at real-valued ``(x, y)`` with the 4-neighbour bilinear kernel.

    Args:
        raster: ``(H, W)`` or ``(H, W, C)`` array.
        x, y: Scalars or arrays of identical shape holding column/row coordinates.

    Returns:
        ``(values, in_bounds)``. ``values`` has shape ``x.shape + (C,)``; samples
        outside ``[0, W-1] x [0, H-1]`` (or at non-finite coordinates) are 0 and
        flagged ``False`` in ``in_bounds``.
    """
    raster = as_image(raster)
    h, w, c = raster.shape
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    scalar = x.ndim == 0 and y.ndim == 0
    x, y = np.broadcast_arrays(np.atleast_1d(x), np.atleast_1d(y))

    with np.errstate(invalid="ignore"):
        inside = (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    xs = np.where(inside, x, 0.0)
    ys = np.where(inside, y, 0.0)

    x0 = np.minimum(np.floor(xs).astype(np.int64), max(w - 2, 0))
    y0 = np.minimum(np.floor(ys).astype(np.int64), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = (xs - x0)[..., None]
    ay = (ys - y0)[..., None]

    out = (
        (1.0 - ax) * (1.0 - ay) * raster[y0, x0]
        + ax * (1.0 - ay) * raster[y0, x1]
        + (1.0 - ax) * ay * raster[y1, x0]
        + ax * ay * raster[y1, x1]
    )
    out = np.where(inside[..., None], out, 0.0)
    if scalar:
        return out[0], bool(inside[0])
    return out, inside


def _resize_coords(n_in: int, n_out: int) -> np.ndarray:
    # Half-pixel-centre mapping, clamped to the source extent.
    scale = n_in / n_out
    return np.clip((np.arange(n_out) + 0.5) * scale - 0.5, 0.0, n_in - 1.0)


def resize_bilinear(raster: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    raster = as_image(raster)
    h, w, _ = raster.shape
    if (h, w) == (out_h, out_w):
        return raster.copy()
    xs = _resize_coords(w, out_w)
    ys = _resize_coords(h, out_h)
    gx, gy = np.meshgrid(xs, ys)
    values, _ = bilinear_sample(raster, gx, gy)
    return values


def _crop_box(h: int, w: int) -> tuple[int, int, int]:
    side = min(h, w)
    return (h - side) // 2, (w - side) // 2, side


def center_crop_resize(image, target: int) -> np.ndarray:
    """Centre-crop ``image`` to its shorter side, then bilinearly resize to ``target x target``."""
    if target < 1:
        raise DimensionError(f"target size must be >= 1, got {target}")
    img = as_image(image)
    y0, x0, side = _crop_box(*img.shape[:2])
    crop = img[y0 : y0 + side, x0 : x0 + side]
    return resize_bilinear(crop, target, target)


def center_crop_resize_depth(depth: DepthMap, target: int) -> DepthMap:
    """Depth variant: any output pixel touching an invalid source pixel becomes invalid."""
    if target < 1:
        raise DimensionError(f"target size must be >= 1, got {target}")
    h, w = depth.shape
    y0, x0, side = _crop_box(h, w)
    crop = depth.data[y0 : y0 + side, x0 : x0 + side]
    if side == target:
        return DepthMap(crop.copy(), depth.max_depth)
    values = resize_bilinear(crop, target, target)[..., 0]
    # A neighbourhood is clean iff its invalid-indicator interpolates to exactly 0.
    dirty = resize_bilinear((crop <= 0).astype(np.float64), target, target)[..., 0] > 0
    return DepthMap(np.where(dirty, 0.0, values), depth.max_depth)


def center_crop_resize_flow(flow: FlowField, target: int) -> FlowField:
    """Flow variant: components are resampled, then ``u``/``v`` scaled by the x/y resize factors."""
    if target < 1:
        raise DimensionError(f"target size must be >= 1, got {target}")
    y0, x0, side = _crop_box(flow.height, flow.width)
    crop = flow.data[y0 : y0 + side, x0 : x0 + side]
    out = resize_bilinear(crop, target, target)
    scale = target / side
    out[..., 0] *= scale
    out[..., 1] *= scale
    return FlowField(out, flow.indexing)


def resize_flow(flow: FlowField, out_h: int, out_w: int) -> FlowField:
    """Resize a flow field to an arbitrary shape, rescaling each component by its axis factor."""
    out = resize_bilinear(flow.data, out_h, out_w)
    out[..., 0] *= out_w / flow.width
    out[..., 1] *= out_h / flow.height
    return FlowField(out, flow.indexing)


# --------------------------------------------------------------------------
# Ingest: PNG and PFM
# --------------------------------------------------------------------------


def read_image(path) -> np.ndarray:
    """Read an 8-bit gray or RGB PNG/JPEG into a float ``(H, W, C)`` array (RGB channel order)."""
    import cv2

    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    try:
        raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    except cv2.error as exc:
        raise FormatError(f"cannot decode image {path}: {exc}") from exc
    if raw is None:
        raise FormatError(f"cannot decode image {path}")
    if raw.dtype != np.uint8:
        raise FormatError(f"{path}: expected an 8-bit image, got {raw.dtype}")
    if raw.ndim == 3:
        if raw.shape[2] == 4:
            raw = raw[..., :3]
        raw = raw[..., ::-1]
    return as_image(raw)


def write_image(path, image) -> None:
    """Write ``image`` as an 8-bit PNG after clipping to [0, 255] and rounding."""
    import cv2

    img = to_uint8(as_image(image))
    if img.shape[2] == 3:
        img = img[..., ::-1]
    elif img.shape[2] == 1:
        img = img[..., 0]
    if not cv2.imwrite(str(path), np.ascontiguousarray(img)):
        raise OSError(f"failed to write {path}")


def read_pfm(path) -> np.ndarray:
    """Read a PFM file; the sign of the scale line selects endianness (negative = little-endian)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    lines = []
    pos = 0
    for _ in range(3):
        end = blob.find(b"\n", pos)
        if end < 0:
            raise TruncatedFileError(f"{path}: incomplete PFM header")
        lines.append(blob[pos:end].strip())
        pos = end + 1
    if lines[0] == b"PF":
        channels = 3
    elif lines[0] == b"Pf":
        channels = 1
    else:
        raise MagicError(f"{path}: not a PFM file")
    try:
        width, height = (int(t) for t in lines[1].split())
        scale = float(lines[2])
    except ValueError as exc:
        raise HeaderError(f"{path}: malformed PFM header") from exc
    if width <= 0 or height <= 0 or width * height > 1 << 28 or scale == 0:
        raise HeaderError(f"{path}: bad PFM dimensions {width}x{height} / scale {scale}")
    dtype = "<f4" if scale < 0 else ">f4"
    count = width * height * channels
    if len(blob) - pos < 4 * count:
        raise TruncatedFileError(f"{path}: PFM payload truncated")
    data = np.frombuffer(blob, dtype=dtype, count=count, offset=pos)
    data = data.reshape(height, width, channels)[::-1].astype(np.float64)
    return data[..., 0] if channels == 1 else data


def write_pfm(path, data) -> None:
    data = np.asarray(data, dtype="<f4")
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[..., 0]
    header = b"PF\n" if data.ndim == 3 else b"Pf\n"
    h, w = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(f"{w} {h}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(np.ascontiguousarray(data[::-1]).tobytes())


def read_depth(path, max_depth=DEFAULT_MAX_DEPTH, png_scale=256.0) -> DepthMap:
    """Load a depth map from ``.pfm``, ``.npy`` or 16-bit ``.png`` (``value / png_scale`` meters)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        raw = read_pfm(path)
    elif suffix == ".npy":
        try:
            raw = np.load(path, allow_pickle=False)
        except (ValueError, OSError, EOFError) as exc:
            raise FormatError(f"{path}: unreadable npy: {exc}") from exc
    elif suffix == ".png":
        import cv2

        raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
        if raw is None:
            raise FormatError(f"cannot decode depth png {path}")
        if raw.ndim != 2:
            raise FormatError(f"{path}: depth png must be single channel")
        raw = raw.astype(np.float64) / png_scale
    else:
        raise FormatError(f"{path}: unsupported depth format {suffix!r}")
    if raw.ndim == 3:
        raw = raw[..., 0]
    return DepthMap.from_array(raw, max_depth)
