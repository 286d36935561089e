"""Pinhole intrinsics, rigid view matrices, projection and back-projection.

Camera axes: x right, y down, z forward (image rows grow with y).  View
matrices map world coordinates into camera coordinates, so a camera moved by
``+c`` in the world carries translation ``-c`` in its view matrix.

All point functions broadcast over numpy arrays; the per-element arithmetic is
written out explicitly (no BLAS) so scalar and vectorised evaluations agree
bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

ORTHO_TOL = 1e-9

# Vertical fields of view used for the two target datasets.
FOVY_KITTI = 29.2
FOVY_SINTEL = 26.5


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise DomainError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise DomainError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise DomainError(f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @classmethod
    def from_text(cls, text: str, width=None, height=None) -> "Intrinsics":
        """Parse ``key=value`` lines (``fx``, ``fy``, ``cx``, ``cy``, optionally ``width``/``height``)."""
        values = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise DomainError(f"malformed intrinsics line {line!r}")
            values[key.strip()] = val.strip()
        missing = {"fx", "fy", "cx", "cy"} - values.keys()
        if missing:
            raise DomainError(f"intrinsics block lacks {sorted(missing)}")
        width = int(values.get("width", width or 0))
        height = int(values.get("height", height or 0))
        return cls(
            float(values["fx"]),
            float(values["fy"]),
            float(values["cx"]),
            float(values["cy"]),
            width,
            height,
        )


def intrinsics_from_fovy(fovy: float, width: int, height: int) -> Intrinsics:
    """Square-pixel intrinsics from a vertical field of view in degrees."""
    if not 0 < fovy < 180:
        raise DomainError(f"fovy must lie in (0, 180) degrees, got {fovy}")
    fy = (height / 2) / math.tan(math.radians(fovy) / 2)
    return Intrinsics(fy, fy, width / 2, height / 2, width, height)


@dataclass(frozen=True)
class SE3Pose:
    """Rigid 4x4 world-to-camera transform."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (4, 4) or not np.all(np.isfinite(m)):
            raise DomainError("pose must be a finite 4x4 matrix")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise DomainError(f"pose last row must be (0, 0, 0, 1), got {m[3]}")
        r = m[:3, :3]
        if np.max(np.abs(r @ r.T - np.eye(3))) > ORTHO_TOL:
            raise DomainError("rotation block is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ORTHO_TOL:
            raise DomainError("rotation block must have determinant +1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "SE3Pose":
        return cls(np.eye(4))

    @classmethod
    def from_rt(cls, rotation, translation) -> "SE3Pose":
        m = np.eye(4)
        m[:3, :3] = rotation
        m[:3, 3] = translation
        return cls(m)

    @classmethod
    def from_camera_position(cls, position, rotation=None) -> "SE3Pose":
        """View matrix of a camera centred at ``position`` (world frame) with camera-to-world ``rotation``."""
        r_cw = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
        r = r_cw.T
        return cls.from_rt(r, -(r @ np.asarray(position, dtype=np.float64)))

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:3, 3]

    @property
    def camera_position(self) -> np.ndarray:
        return -(self.rotation.T @ self.translation)

    def inverse(self) -> "SE3Pose":
        r_t = self.rotation.T
        return SE3Pose.from_rt(r_t, -(r_t @ self.translation))

    def __matmul__(self, other: "SE3Pose") -> "SE3Pose":
        return SE3Pose(self.matrix @ other.matrix)

    def is_identity(self) -> bool:
        return np.array_equal(self.matrix, np.eye(4))


def relative_transform(v_t: SE3Pose, v_t1: SE3Pose) -> SE3Pose:
    """Transform taking source-camera coordinates to target-camera coordinates."""
    return v_t1 @ v_t.inverse()


def transform_point(pose: SE3Pose, points) -> np.ndarray:
    """Apply ``pose`` to points of shape ``(..., 3)``."""
    p = np.asarray(points, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    m = pose.matrix
    out = np.empty(np.broadcast(x, y, z).shape + (3,))
    for i in range(3):
        out[..., i] = m[i, 0] * x + m[i, 1] * y + m[i, 2] * z + m[i, 3]
    return out


def back_project(u, v, depth, intr: Intrinsics) -> np.ndarray:
    """Lift pixel ``(u, v)`` at metric ``depth`` to a camera-frame point ``(..., 3)``."""
    d = np.asarray(depth, dtype=np.float64)
    if np.any(~(d > 0)):
        raise DomainError("back-projection requires depth > 0")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    x = (u - intr.cx) * d / intr.fx
    y = (v - intr.cy) * d / intr.fy
    return np.stack(np.broadcast_arrays(x, y, d), axis=-1)


def project(points, intr: Intrinsics):
    """Project camera-frame points onto the image plane.

    Returns:
        ``(u, v, depth, ok)``. Points with ``z <= 0`` are non-projectable:
        ``ok`` is False and ``u``/``v`` are NaN there.
    """
    p = np.asarray(points, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    ok = z > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(ok, intr.fx * x / z + intr.cx, np.nan)
        v = np.where(ok, intr.fy * y / z + intr.cy, np.nan)
    if p.ndim == 1:
        return float(u), float(v), float(z), bool(ok)
    return u, v, z, ok
