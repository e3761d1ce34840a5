"""Coordinate frames, rigid transforms, and pinhole projection.

Conventions used across the package:

- All Cartesian frames are right-handed.  The radar Cartesian frame has
  x forward, y left, z up.
- Spherical triples are ``[range_m, azimuth_rad, elevation_rad]`` with
  azimuth measured from +x toward +y and elevation from the xy-plane
  toward +z.
- Pixel coordinates are 0-based and continuous, with pixel (0, 0)
  centered at (0.0, 0.0); u grows rightward along columns, v downward
  along rows.  A point is in-image iff its nearest pixel exists, i.e.
  u in [-0.5, width - 0.5) and v in [-0.5, height - 0.5).
- Angles are radians everywhere; degrees appear only at I/O boundaries.

Point sets are plain float64 numpy arrays with the coordinate triple on
the last axis.  Transforms named ``a_from_b`` map frame-b points into
frame a.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, InvalidIntrinsics, NonRigidTransform, ZeroVector

# Camera-frame depth below this is treated as behind the camera; avoids
# division blow-up without excluding any physical point.
MIN_CAMERA_DEPTH = 1e-9

ROTATION_TOL = 1e-9


def spherical_to_cartesian(sph):
    """Map ``[r, theta, phi]`` triples to ``[x, y, z]``.

    Accepts a single triple or any array with the triple on the last axis.
    """
    sph = np.asarray(sph, dtype=np.float64)
    r = sph[..., 0]
    cos_phi = np.cos(sph[..., 2])
    return np.stack(
        [
            r * cos_phi * np.cos(sph[..., 1]),
            r * cos_phi * np.sin(sph[..., 1]),
            r * np.sin(sph[..., 2]),
        ],
        axis=-1,
    )


def cartesian_to_spherical(xyz):
    """Map ``[x, y, z]`` to ``[r, theta, phi]``; raises ZeroVector on r = 0."""
    xyz = np.asarray(xyz, dtype=np.float64)
    r = np.linalg.norm(xyz, axis=-1)
    if np.any(r == 0.0):
        raise ZeroVector("cannot convert zero-norm point to spherical")
    theta = np.arctan2(xyz[..., 1], xyz[..., 0])
    phi = np.arcsin(np.clip(xyz[..., 2] / r, -1.0, 1.0))
    return np.stack([r, theta, phi], axis=-1)


def _check_rotation(rotation, tol):
    err = np.abs(rotation.T @ rotation - np.eye(3)).max()
    det = np.linalg.det(rotation)
    return err, abs(det - 1.0)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation; ``apply`` maps source-frame points to target."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=np.float64)
        trans = np.array(self.translation, dtype=np.float64).reshape(3)
        if rot.shape != (3, 3):
            raise NonRigidTransform(f"rotation must be 3x3, got {rot.shape}")
        ortho_err, det_err = _check_rotation(rot, ROTATION_TOL)
        if ortho_err > ROTATION_TOL or det_err > ROTATION_TOL:
            raise NonRigidTransform(
                f"rotation invalid: |R^T R - I|={ortho_err:.3e}, |det-1|={det_err:.3e}"
            )
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(matrix) -> "RigidTransform":
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise NonRigidTransform(f"homogeneous matrix must be 4x4, got {m.shape}")
        return RigidTransform(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points):
        """Transform one point (3,) or a stack (..., 3)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        rot_t = self.rotation.T
        return RigidTransform(rot_t, -rot_t @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Returns the transform equivalent to applying ``other`` then ``self``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics (no distortion model)."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidIntrinsics(f"focal lengths must be positive: fx={self.fx}, fy={self.fy}")

    @staticmethod
    def from_matrix(k) -> "CameraIntrinsics":
        k = np.asarray(k, dtype=np.float64)
        if k.shape != (3, 3):
            raise InvalidIntrinsics(f"K must be 3x3, got {k.shape}")
        return CameraIntrinsics(fx=k[0, 0], fy=k[1, 1], cx=k[0, 2], cy=k[1, 2])

    def as_matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


def project_to_image(intrinsics: CameraIntrinsics, cam_from_radar: RigidTransform, point):
    """Project one radar-frame point through the pinhole model.

    Returns continuous pixel coordinates (u, v).  Raises BehindCamera when
    the camera-frame depth is <= MIN_CAMERA_DEPTH; the caller drops the
    signal rather than recovering.
    """
    p_cam = cam_from_radar.apply(np.asarray(point, dtype=np.float64))
    z = p_cam[2]
    if z <= MIN_CAMERA_DEPTH:
        raise BehindCamera(f"camera-frame depth {z:.3e} <= {MIN_CAMERA_DEPTH}")
    u = intrinsics.fx * p_cam[0] / z + intrinsics.cx
    v = intrinsics.fy * p_cam[1] / z + intrinsics.cy
    return u, v


def project_points(intrinsics: CameraIntrinsics, cam_from_radar: RigidTransform, points):
    """Vectorized projection of (n, 3) radar-frame points.

    Returns (uv, depth) where uv is (n, 2); rows with depth <=
    MIN_CAMERA_DEPTH hold NaN coordinates instead of raising, so callers
    can mask and count drops.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    p_cam = cam_from_radar.apply(pts)
    z = p_cam[:, 2]
    in_front = z > MIN_CAMERA_DEPTH
    safe_z = np.where(in_front, z, 1.0)
    uv = np.stack(
        [
            intrinsics.fx * p_cam[:, 0] / safe_z + intrinsics.cx,
            intrinsics.fy * p_cam[:, 1] / safe_z + intrinsics.cy,
        ],
        axis=1,
    )
    uv[~in_front] = np.nan
    return uv, z


def in_image(uv, width: int, height: int):
    """Boolean mask for pixels whose nearest integer pixel exists."""
    uv = np.asarray(uv, dtype=np.float64)
    u, v = uv[..., 0], uv[..., 1]
    return (
        (u >= -0.5) & (u < width - 0.5) & (v >= -0.5) & (v < height - 0.5)
        & np.isfinite(u) & np.isfinite(v)
    )


def back_project_ray(intrinsics: CameraIntrinsics, radar_rot_from_cam, u, v):
    """Direction of the camera ray through (u, v), expressed in the radar frame.

    The result is the unnormalized vector R_radar_from_cam @ K^-1 [u, v, 1];
    it is anchored at the camera origin.  Re-projecting camera_origin +
    s * direction recovers (u, v) for any s > 0.
    """
    rot = np.asarray(radar_rot_from_cam, dtype=np.float64)
    d_cam = np.array(
        [(u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, 1.0]
    )
    return rot @ d_cam


def back_project_rays(intrinsics: CameraIntrinsics, radar_rot_from_cam, uv):
    """Vectorized back-projection of (n, 2) pixels to (n, 3) directions."""
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    rot = np.asarray(radar_rot_from_cam, dtype=np.float64)
    d_cam = np.stack(
        [
            (uv[:, 0] - intrinsics.cx) / intrinsics.fx,
            (uv[:, 1] - intrinsics.cy) / intrinsics.fy,
            np.ones(len(uv)),
        ],
        axis=1,
    )
    return d_cam @ rot.T
