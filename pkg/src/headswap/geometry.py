"""Pose parameterization, ellipsoid head model and scaled-orthographic camera.

Conventions shared by every other module:

* model space: x right, y up, z toward the camera;
* ``rx`` is pitch, ``ry`` yaw, ``rz`` roll, all in degrees;
* rotations compose as ``R = Rz(rz) @ Rx(rx) @ Ry(ry)`` (yaw applied first);
* projection is scaled orthographic, image ``v`` grows downward::

      u = cx + s * (R p)_x + tx
      v = cy - s * (R p)_y + ty
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask, InvalidArgument

STATE_FIELDS = ("tx", "ty", "tx_dot", "ty_dot", "s", "rx", "ry", "rz", "ry_dot", "alpha")
TX, TY, TX_DOT, TY_DOT, S, RX, RY, RZ, RY_DOT, ALPHA = range(10)
ANGLE_FIELDS = ("rx", "ry", "rz")


def wrap_angle(a):
    """Wrap degrees into [-180, 180). Works on scalars and arrays."""
    if np.ndim(a):
        return (np.asarray(a, dtype=float) + 180.0) % 360.0 - 180.0
    return (float(a) + 180.0) % 360.0 - 180.0


@dataclass(frozen=True)
class PoseState:
    """Ten-component head state: translation and its velocity, scale,
    three rotations, yaw velocity and a global illumination gain."""

    tx: float = 0.0
    ty: float = 0.0
    tx_dot: float = 0.0
    ty_dot: float = 0.0
    s: float = 1.0
    rx: float = 0.0
    ry: float = 0.0
    rz: float = 0.0
    ry_dot: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        values = self.as_array()
        if not np.all(np.isfinite(values)):
            raise InvalidArgument(f"non-finite pose component in {self}")
        if self.s <= 0 or self.alpha <= 0:
            raise InvalidArgument(f"scale and illumination must be positive, got s={self.s}, alpha={self.alpha}")
        for name in ANGLE_FIELDS:
            a = getattr(self, name)
            if not -180.0 <= a < 180.0:
                raise InvalidArgument(f"{name}={a} outside [-180, 180)")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in STATE_FIELDS], dtype=float)

    @classmethod
    def from_array(cls, values) -> "PoseState":
        values = [float(v) for v in values]
        if len(values) != len(STATE_FIELDS):
            raise InvalidArgument(f"expected {len(STATE_FIELDS)} values, got {len(values)}")
        return cls(*values)

    def replace(self, **changes) -> "PoseState":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class EllipsoidModel:
    """Rigid ellipsoid standing in for the head.

    ``texture_res`` is the number of texture pixels per model unit used when a
    planar (frontal) texture is wrapped onto the surface.
    """

    ax: float = 50.0
    ay: float = 65.0
    az: float = 50.0
    texture_res: float = 1.0

    def __post_init__(self):
        if min(self.ax, self.ay, self.az) <= 0 or self.texture_res <= 0:
            raise InvalidArgument("ellipsoid semi-axes and texture resolution must be positive")

    @property
    def axes(self) -> np.ndarray:
        return np.array([self.ax, self.ay, self.az], dtype=float)


@dataclass(frozen=True)
class CameraModel:
    width: int
    height: int
    cx: float
    cy: float

    def __post_init__(self):
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidArgument(f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height}")

    @classmethod
    def centered(cls, width: int, height: int) -> "CameraModel":
        return cls(int(width), int(height), float(width // 2), float(height // 2))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


def rotation_matrices(rx, ry, rz) -> np.ndarray:
    """Vectorized ``Rz @ Rx @ Ry`` for arrays of angles (degrees); returns (..., 3, 3)."""
    rx, ry, rz = (np.radians(np.asarray(a, dtype=float)) for a in (rx, ry, rz))
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    # Expanded product of Rz(rz) @ Rx(rx) @ Ry(ry).
    r = np.empty(np.broadcast(rx, ry, rz).shape + (3, 3))
    r[..., 0, 0] = cz * cy - sz * sx * sy
    r[..., 0, 1] = -sz * cx
    r[..., 0, 2] = cz * sy + sz * sx * cy
    r[..., 1, 0] = sz * cy + cz * sx * sy
    r[..., 1, 1] = cz * cx
    r[..., 1, 2] = sz * sy - cz * sx * cy
    r[..., 2, 0] = -cx * sy
    r[..., 2, 1] = sx
    r[..., 2, 2] = cx * cy
    return r


def rotation_matrix(rx: float, ry: float, rz: float) -> np.ndarray:
    """3x3 rotation ``Rz(rz) @ Rx(rx) @ Ry(ry)`` for angles in degrees."""
    return rotation_matrices(rx, ry, rz)


def pose_rotation(pose: PoseState) -> np.ndarray:
    return rotation_matrix(pose.rx, pose.ry, pose.rz)


def project_points(points, pose: PoseState, cam: CameraModel) -> np.ndarray:
    """Project (M, 3) model points to (M, 2) continuous pixel coordinates."""
    q = np.asarray(points, dtype=float) @ pose_rotation(pose).T
    u = cam.cx + pose.s * q[..., 0] + pose.tx
    v = cam.cy - pose.s * q[..., 1] + pose.ty
    return np.stack([u, v], axis=-1)


def project_point(p, pose: PoseState, cam: CameraModel) -> tuple[float, float]:
    u, v = project_points(np.asarray(p, dtype=float)[None, :], pose, cam)[0]
    return float(u), float(v)


def surface_normals(points, model: EllipsoidModel) -> np.ndarray:
    """Outward unit normals at ellipsoid surface points (..., 3)."""
    n = np.asarray(points, dtype=float) / model.axes**2
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def visible(p, pose: PoseState, model: EllipsoidModel) -> bool:
    """True iff the rotated outward normal at surface point ``p`` faces the camera."""
    n = surface_normals(np.asarray(p, dtype=float), model)
    return bool((pose_rotation(pose) @ n)[2] > 0)


def silhouette_bbox(model: EllipsoidModel, pose: PoseState, cam: CameraModel) -> tuple[float, float, float, float]:
    """Exact (u_min, v_min, u_max, v_max) extent of the projected outline."""
    r = pose_rotation(pose)
    # The outline of {q : q^T M q = 1} has half-widths sqrt((M^-1)_ii).
    cov = r @ np.diag(model.axes**2) @ r.T
    hu = pose.s * math.sqrt(cov[0, 0])
    hv = pose.s * math.sqrt(cov[1, 1])
    uc, vc = cam.cx + pose.tx, cam.cy + pose.ty
    return uc - hu, vc - hv, uc + hu, vc + hv


def raycast(model: EllipsoidModel, pose: PoseState, cam: CameraModel, pad: int = 1):
    """Intersect every pixel's viewing ray with the posed ellipsoid.

    Returns ``(mask, points)`` where ``mask`` is a boolean (H, W) image of
    pixels hit by the ellipsoid and ``points`` is an (H, W, 3) array holding the
    camera-nearest model-space surface point for those pixels (NaN elsewhere).
    Only the analytic bounding box is examined.
    """
    h, w = cam.height, cam.width
    mask = np.zeros((h, w), dtype=bool)
    points = np.full((h, w, 3), np.nan)
    u0, v0, u1, v1 = silhouette_bbox(model, pose, cam)
    c0, c1 = max(int(math.floor(u0)) - pad, 0), min(int(math.ceil(u1)) + pad, w - 1)
    r0, r1 = max(int(math.floor(v0)) - pad, 0), min(int(math.ceil(v1)) + pad, h - 1)
    if c0 > c1 or r0 > r1:
        return mask, points

    r = pose_rotation(pose)
    m = r @ np.diag(1.0 / model.axes**2) @ r.T
    vv, uu = np.mgrid[r0 : r1 + 1, c0 : c1 + 1].astype(float)
    a = (uu - cam.cx - pose.tx) / pose.s
    b = (cam.cy + pose.ty - vv) / pose.s
    half_b = m[0, 2] * a + m[1, 2] * b
    c = m[0, 0] * a * a + 2.0 * m[0, 1] * a * b + m[1, 1] * b * b - 1.0
    disc = half_b * half_b - m[2, 2] * c
    hit = disc >= 0
    z = (-half_b + np.sqrt(np.where(hit, disc, 0.0))) / m[2, 2]
    q = np.stack([a, b, z], axis=-1)
    p = q @ r  # R^T q, row-vector form
    p[~hit] = np.nan
    mask[r0 : r1 + 1, c0 : c1 + 1] = hit
    points[r0 : r1 + 1, c0 : c1 + 1] = p
    return mask, points


def silhouette_mask(model: EllipsoidModel, pose: PoseState, cam: CameraModel) -> np.ndarray:
    """Binary (H, W) uint8 mask of pixels inside the projected ellipsoid outline."""
    mask, _ = raycast(model, pose, cam)
    if not mask.any():
        raise EmptyMask(f"ellipsoid at {pose} projects outside the {cam.width}x{cam.height} image")
    return mask.astype(np.uint8)


def sample_bilinear(image: np.ndarray, u, v) -> np.ndarray:
    """Bilinearly sample ``image`` at continuous (u, v).

    Coordinates must satisfy ``0 <= u <= W-1`` and ``0 <= v <= H-1``; callers
    are responsible for discarding out-of-frame samples. Works for gray (H, W)
    and multi-channel (H, W, C) images.
    """
    h, w = image.shape[:2]
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    i0 = np.clip(np.floor(v).astype(np.intp), 0, max(h - 2, 0))
    j0 = np.clip(np.floor(u).astype(np.intp), 0, max(w - 2, 0))
    fy = v - i0
    fx = u - j0
    i1 = np.minimum(i0 + 1, h - 1)
    j1 = np.minimum(j0 + 1, w - 1)
    if image.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = image[i0, j0] * (1.0 - fx) + image[i0, j1] * fx
    bottom = image[i1, j0] * (1.0 - fx) + image[i1, j1] * fx
    return top * (1.0 - fy) + bottom * fy


def in_frame(u, v, width: int, height: int):
    return (u >= 0) & (u <= width - 1) & (v >= 0) & (v <= height - 1)
