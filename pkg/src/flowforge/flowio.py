"""Readers and writers for flow interchange formats, flow colouring and triplet folders.

Byte layouts:

``.flo`` (Middlebury)
    float32 ``202021.25`` ("PIEH"), int32 width, int32 height, then row-major
    interleaved float32 ``(u, v)``; everything little-endian.
KITTI flow PNG
    16-bit, 3 channels ``(u, v, valid)`` with ``stored = round(64 * flow + 2**15)``.
``.npy``
    NPY v1.0, ``<f4``, C order, shape ``(H, W, 2)``.
"""

from __future__ import annotations

import ast
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BitDepthError,
    DimensionError,
    FormatError,
    HeaderError,
    MagicError,
    MissingMemberError,
    RangeOverflowError,
    TruncatedFileError,
    UnknownFormatError,
)
from .grid import FlowField, Indexing, as_image, read_image, write_image

FLO_MAGIC = 202021.25
FLO_MAGIC_BYTES = b"PIEH"
FLO_MAX_PIXELS = 1 << 28
KITTI_OFFSET = 2**15
KITTI_SCALE = 64.0
KITTI_LIMIT = 512.0
NPY_MAGIC = b"\x93NUMPY"
NPY_FLOAT_DESCRS = ("<f4", ">f4", "<f8", ">f8")
PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


# --------------------------------------------------------------------------
# Middlebury .flo
# --------------------------------------------------------------------------


def encode_flo(flow) -> bytes:
    data = flow.data if isinstance(flow, FlowField) else np.asarray(flow)
    if not np.all(np.isfinite(data)):
        raise RangeOverflowError("cannot store non-finite flow in .flo")
    h, w = data.shape[:2]
    return FLO_MAGIC_BYTES + struct.pack("<ii", w, h) + np.ascontiguousarray(data, dtype="<f4").tobytes()


def decode_flo(blob: bytes, indexing=Indexing.TARGET) -> FlowField:
    if len(blob) < 12:
        raise TruncatedFileError(f"flo header needs 12 bytes, got {len(blob)}")
    if blob[:4] != FLO_MAGIC_BYTES:
        raise MagicError(f"bad flo magic {blob[:4]!r}")
    w, h = struct.unpack("<ii", blob[4:12])
    if w <= 0 or h <= 0 or w * h > FLO_MAX_PIXELS:
        raise HeaderError(f"implausible flo dimensions {w}x{h}")
    n = 2 * w * h
    if len(blob) - 12 < 4 * n:
        raise TruncatedFileError(f"flo payload holds {len(blob) - 12} bytes, expected {4 * n}")
    data = np.frombuffer(blob, dtype="<f4", count=n, offset=12).reshape(h, w, 2)
    return FlowField(data.astype(np.float64), indexing)


def write_flo(path, flow) -> None:
    Path(path).write_bytes(encode_flo(flow))


def read_flo(path, indexing=Indexing.TARGET) -> FlowField:
    return decode_flo(Path(path).read_bytes(), indexing)


# --------------------------------------------------------------------------
# KITTI 16-bit PNG
# --------------------------------------------------------------------------


def kitti_encode(flow, valid=None) -> np.ndarray:
    """Quantise to the ``(H, W, 3)`` uint16 KITTI layout (RGB order: u, v, valid)."""
    data = flow.data if isinstance(flow, FlowField) else np.asarray(flow, dtype=np.float64)
    h, w = data.shape[:2]
    valid = np.ones((h, w), bool) if valid is None else np.asarray(valid, dtype=bool)
    vals = data[valid]
    if vals.size and (not np.all(np.isfinite(vals)) or np.abs(vals).max() >= KITTI_LIMIT):
        raise RangeOverflowError(f"KITTI PNG stores |u|, |v| < {KITTI_LIMIT:g} only")
    clean = np.where(valid[..., None] & np.isfinite(data), data, 0.0)
    stored = np.clip(np.rint(clean * KITTI_SCALE + KITTI_OFFSET), 0, 2**16 - 1).astype(np.uint16)
    return np.dstack([stored, valid.astype(np.uint16)])


def kitti_decode(raw: np.ndarray, indexing=Indexing.SOURCE):
    flow = (raw[..., :2].astype(np.float64) - KITTI_OFFSET) / KITTI_SCALE
    return FlowField(flow, indexing), raw[..., 2] > 0


def write_kitti_png(path, flow, valid=None) -> None:
    import cv2

    encoded = kitti_encode(flow, valid)
    if not cv2.imwrite(str(path), np.ascontiguousarray(encoded[..., ::-1])):
        raise OSError(f"failed to write {path}")


def read_kitti_png(path, indexing=Indexing.SOURCE):
    import cv2

    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    with open(path, "rb") as fh:
        if fh.read(8) != PNG_MAGIC:
            raise MagicError(f"{path} is not a PNG file")
    try:
        raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    except cv2.error as exc:
        raise FormatError(f"cannot decode PNG {path}: {exc}") from exc
    if raw is None:
        raise FormatError(f"cannot decode PNG {path}")
    if raw.dtype != np.uint16 or raw.ndim != 3 or raw.shape[2] != 3:
        raise BitDepthError(f"{path}: KITTI flow needs a 16-bit 3-channel PNG, got {raw.dtype} {raw.shape}")
    return kitti_decode(raw[..., ::-1], indexing)


# --------------------------------------------------------------------------
# NPY
# --------------------------------------------------------------------------


def write_npy_flow(path, flow, normalized=False) -> None:
    """Save flow (or a correspondence grid) as an NPY v1.0 ``<f4`` array.

    With ``normalized`` the components are rescaled to align-corners
    ``[-1, 1]`` units, i.e. ``u * 2 / (W - 1)`` and ``v * 2 / (H - 1)``.
    """
    data = flow.data if hasattr(flow, "data") else np.asarray(flow)
    data = np.array(data, dtype=np.float64)
    if normalized:
        h, w = data.shape[:2]
        if w < 2 or h < 2:
            raise DimensionError("normalized units need both sides >= 2")
        data[..., 0] *= 2.0 / (w - 1)
        data[..., 1] *= 2.0 / (h - 1)
    with open(path, "wb") as fh:
        np.lib.format.write_array(fh, np.ascontiguousarray(data, dtype="<f4"), version=(1, 0), allow_pickle=False)


def read_npy_flow(path, indexing=Indexing.TARGET) -> FlowField:
    """Read an ``(H, W, 2)`` float NPY file, validating the header before touching the payload."""
    blob = Path(path).read_bytes()
    header = parse_npy_header(blob)
    descr = header.get("descr")
    shape = header.get("shape")
    if header.get("fortran_order") not in (False,) or descr not in NPY_FLOAT_DESCRS:
        raise HeaderError(f"{path}: unsupported NPY layout {header}")
    if not (isinstance(shape, tuple) and len(shape) == 3 and shape[2] == 2 and all(isinstance(n, int) and n > 0 for n in shape)):
        raise HeaderError(f"{path}: expected shape (H, W, 2), got {shape!r}")
    if shape[0] * shape[1] > FLO_MAX_PIXELS:
        raise HeaderError(f"{path}: implausible shape {shape}")
    dtype = np.dtype(descr)
    count = shape[0] * shape[1] * 2
    if len(blob) - header["offset"] < count * dtype.itemsize:
        raise TruncatedFileError(f"{path}: NPY payload truncated")
    data = np.frombuffer(blob, dtype=dtype, count=count, offset=header["offset"]).reshape(shape)
    return FlowField(data.astype(np.float64), indexing)


# --------------------------------------------------------------------------
# Colour wheel
# --------------------------------------------------------------------------


def make_color_wheel() -> np.ndarray:
    """Middlebury colour wheel, 55 RGB entries in [0, 255]."""
    ry, yg, gc, cb, bm, mr = 15, 6, 4, 11, 13, 6
    wheel = np.zeros((ry + yg + gc + cb + bm + mr, 3))
    col = 0
    wheel[col : col + ry, 0] = 255
    wheel[col : col + ry, 1] = np.floor(255 * np.arange(ry) / ry)
    col += ry
    wheel[col : col + yg, 0] = 255 - np.floor(255 * np.arange(yg) / yg)
    wheel[col : col + yg, 1] = 255
    col += yg
    wheel[col : col + gc, 1] = 255
    wheel[col : col + gc, 2] = np.floor(255 * np.arange(gc) / gc)
    col += gc
    wheel[col : col + cb, 1] = 255 - np.floor(255 * np.arange(cb) / cb)
    wheel[col : col + cb, 2] = 255
    col += cb
    wheel[col : col + bm, 2] = 255
    wheel[col : col + bm, 0] = np.floor(255 * np.arange(bm) / bm)
    col += bm
    wheel[col : col + mr, 2] = 255 - np.floor(255 * np.arange(mr) / mr)
    wheel[col : col + mr, 0] = 255
    return wheel


COLOR_WHEEL = make_color_wheel()


def wheel_position(u, v) -> np.ndarray:
    """Fractional colour-wheel index in ``[0, 54]`` for flow direction ``(u, v)``."""
    angle = np.arctan2(-np.asarray(v, dtype=np.float64), -np.asarray(u, dtype=np.float64)) / np.pi
    return (angle + 1) / 2 * (len(COLOR_WHEEL) - 1)


def robust_max_magnitude(flow, valid=None, percentile=99.0) -> float:
    data = flow.data if isinstance(flow, FlowField) else np.asarray(flow)
    mag = np.hypot(data[..., 0], data[..., 1])
    if valid is not None:
        mag = mag[np.asarray(valid, dtype=bool)]
    mag = mag[np.isfinite(mag)]
    if mag.size == 0:
        return 0.0
    return float(np.percentile(mag, percentile))


def flow_to_color(flow, max_magnitude=None, valid=None) -> np.ndarray:
    """Colour-code flow: hue from direction, saturation from ``|flow| / max_magnitude``.

    Zero flow maps to white; vectors longer than ``max_magnitude`` are darkened
    as in the Middlebury reference code.  Without ``max_magnitude`` the robust
    99th percentile of the magnitudes is used.  Pixels outside ``valid`` are black.
    """
    data = flow.data if isinstance(flow, FlowField) else np.asarray(flow, dtype=np.float64)
    u = np.nan_to_num(data[..., 0])
    v = np.nan_to_num(data[..., 1])
    if max_magnitude is None:
        max_magnitude = robust_max_magnitude(data, valid)
    rad = np.hypot(u, v) / max(max_magnitude, np.finfo(float).eps)

    fk = wheel_position(u, v)
    k0 = np.floor(fk).astype(int)
    k1 = (k0 + 1) % len(COLOR_WHEEL)
    f = (fk - k0)[..., None]
    col = ((1 - f) * COLOR_WHEEL[k0] + f * COLOR_WHEEL[k1]) / 255.0
    inside = (rad <= 1)[..., None]
    r = rad[..., None]
    col = np.where(inside, 1 - r * (1 - col), col * 0.75)
    out = 255.0 * col
    if valid is not None:
        out[~np.asarray(valid, dtype=bool)] = 0.0
    return out


# --------------------------------------------------------------------------
# Format sniffing
# --------------------------------------------------------------------------


def sniff_format(path) -> str:
    """Return one of ``flo``, ``kitti``, ``npy``, ``png``, ``pfm`` or ``triplet``."""
    path = Path(path)
    if path.is_dir():
        if (path / "meta.txt").is_file():
            return "triplet"
        raise UnknownFormatError(f"{path} is a directory without meta.txt")
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head[:4] == FLO_MAGIC_BYTES:
        return "flo"
    if head[:6] == NPY_MAGIC:
        return "npy"
    if head[:2] in (b"PF", b"Pf"):
        return "pfm"
    if head == PNG_MAGIC:
        # 16-bit 3-channel PNGs are KITTI flow; bit depth lives at byte 24, colour type at 25.
        with open(path, "rb") as fh:
            ihdr = fh.read(26)
        if len(ihdr) == 26 and ihdr[24] == 16 and ihdr[25] == 2:
            return "kitti"
        return "png"
    raise UnknownFormatError(f"cannot identify format of {path}")


def read_flow(path, indexing=None):
    """Read any supported flow file.

    Returns:
        ``(flow, valid)``; formats without validity get an all-True mask.
    """
    kind = sniff_format(path)
    if kind == "flo":
        flow = read_flo(path, indexing or Indexing.TARGET)
    elif kind == "npy":
        flow = read_npy_flow(path, indexing or Indexing.TARGET)
    elif kind == "kitti":
        return read_kitti_png(path, indexing or Indexing.SOURCE)
    else:
        raise UnknownFormatError(f"{path} is not a flow file ({kind})")
    return flow, np.ones(flow.shape, dtype=bool)


# --------------------------------------------------------------------------
# Masks and triplets
# --------------------------------------------------------------------------


def write_mask(path, mask) -> None:
    write_image(path, np.asarray(mask, dtype=bool).astype(np.float64) * 255.0)


def read_mask(path) -> np.ndarray:
    img = read_image(path)
    return img[..., 0] > 127


def write_meta(path, meta: dict) -> None:
    lines = [f"{k}={_fmt(v)}" for k, v in meta.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(_fmt(float(x)) for x in value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def read_meta(path) -> dict:
    meta = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise HeaderError(f"{path}:{n}: expected key=value, got {line!r}")
        meta[key.strip()] = value.strip()
    return meta


@dataclass
class TripletRecord:
    frame_t: np.ndarray
    flow: FlowField
    frame_t1: np.ndarray
    mask: np.ndarray
    metadata: dict = field(default_factory=dict)
    geometric_mask: np.ndarray | None = None

    def __post_init__(self):
        self.frame_t = as_image(self.frame_t)
        self.frame_t1 = as_image(self.frame_t1)
        shapes = {self.frame_t.shape[:2], self.frame_t1.shape[:2], self.flow.shape, np.shape(self.mask)}
        if self.geometric_mask is not None:
            shapes.add(np.shape(self.geometric_mask))
        if len(shapes) != 1:
            raise DimensionError(f"triplet members disagree in size: {sorted(shapes)}")
        tag = self.metadata.get("indexing")
        if tag is not None and Indexing(_value(tag)) != self.flow.indexing:
            raise HeaderError(f"metadata indexing {tag!r} does not match flow ({self.flow.indexing.value})")
        self.metadata["indexing"] = self.flow.indexing.value


def _value(tag):
    return tag.value if hasattr(tag, "value") else tag


TRIPLET_MEMBERS = ("frame_t.png", "frame_t1.png", "flow.flo", "mask.png", "meta.txt")


def write_triplet(directory, record: TripletRecord, export_npy=False, export_kitti=False, normalized_npy=False) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_image(d / "frame_t.png", record.frame_t)
    write_image(d / "frame_t1.png", record.frame_t1)
    write_flo(d / "flow.flo", record.flow)
    write_mask(d / "mask.png", record.mask)
    if record.geometric_mask is not None:
        write_mask(d / "geometric_mask.png", record.geometric_mask)
    if export_npy:
        write_npy_flow(d / "flow.npy", record.flow, normalized=normalized_npy)
    if export_kitti:
        write_kitti_png(d / "flow_kitti.png", record.flow, record.mask)
    write_meta(d / "meta.txt", record.metadata)


def read_triplet(directory) -> TripletRecord:
    d = Path(directory)
    for name in TRIPLET_MEMBERS:
        if not (d / name).is_file():
            raise MissingMemberError(f"{d} lacks {name}")
    meta = read_meta(d / "meta.txt")
    try:
        indexing = Indexing(meta.get("indexing", "target"))
    except ValueError as exc:
        raise HeaderError(f"{d}: unknown indexing tag {meta.get('indexing')!r}") from exc
    geo = d / "geometric_mask.png"
    return TripletRecord(
        frame_t=read_image(d / "frame_t.png"),
        flow=read_flo(d / "flow.flo", indexing),
        frame_t1=read_image(d / "frame_t1.png"),
        mask=read_mask(d / "mask.png"),
        metadata=meta,
        geometric_mask=read_mask(geo) if geo.is_file() else None,
    )


def parse_npy_header(blob: bytes) -> dict:
    """Parse the NPY preamble; adds ``offset`` (start of the payload) to the header dict."""
    if blob[:6] != NPY_MAGIC:
        raise MagicError("not an NPY file")
    if len(blob) < 10:
        raise TruncatedFileError("NPY header truncated")
    major = blob[6]
    if major == 1:
        (hlen,) = struct.unpack("<H", blob[8:10])
        start = 10
    elif major in (2, 3) and len(blob) >= 12:
        (hlen,) = struct.unpack("<I", blob[8:12])
        start = 12
    else:
        raise HeaderError(f"unsupported NPY version {major}.{blob[7]}")
    if len(blob) < start + hlen:
        raise TruncatedFileError("NPY header truncated")
    try:
        header = ast.literal_eval(blob[start : start + hlen].decode("latin1"))
    except (ValueError, TypeError, SyntaxError, MemoryError, RecursionError) as exc:
        raise HeaderError(f"malformed NPY header: {exc}") from exc
    if not isinstance(header, dict):
        raise HeaderError("NPY header is not a dict")
    header["offset"] = start + hlen
    return header
