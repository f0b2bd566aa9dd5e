"""Pinhole camera model, rigid transforms and differentiable inverse warping.

Conventions: camera frame x right, y down, z forward; pixel (u, v) has its
origin at the top-left and pixel centres at integer coordinates. Images are
(H, W, C) and depth maps (H, W), both row-major.
"""
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError
from .tensor import Tensor, as_tensor

Z_EPS = 1e-12
_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    u0: float
    v0: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ContractError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self):
        return np.array([[self.fx, 0.0, self.u0], [0.0, self.fy, self.v0], [0.0, 0.0, 1.0]])

    def rays(self, H, W):
        """Unit-depth rays K^-1 [u, v, 1] for every pixel, row-major (H*W, 3)."""
        v, u = np.mgrid[0:H, 0:W].astype(np.float64)
        x = (u.ravel() - self.u0) / self.fx
        y = (v.ravel() - self.v0) / self.fy
        return np.stack([x, y, np.ones_like(x)], axis=1)


class RigidTransform:
    """SE(3) element acting as ``R @ p + t``."""

    def __init__(self, rotation=None, translation=None):
        R = np.eye(3) if rotation is None else np.array(rotation, dtype=np.float64).reshape(3, 3)
        t = np.zeros(3) if translation is None else np.array(translation, dtype=np.float64).reshape(3)
        if np.max(np.abs(R.T @ R - np.eye(3))) > _ORTHO_TOL:
            raise ContractError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise ContractError("rotation determinant is not +1")
        R.flags.writeable = False
        t.flags.writeable = False
        self.rotation = R
        self.translation = t

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_translation(cls, t):
        return cls(None, t)

    @classmethod
    def from_axis_angle(cls, axis, angle, translation=None):
        axis = np.asarray(axis, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
        R = np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)
        return cls(R, translation)

    @property
    def matrix(self):
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def compose(self, other):
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self):
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def apply(self, points):
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def __matmul__(self, other):
        return self.compose(other)

    def __repr__(self):
        return f"RigidTransform(R={self.rotation.tolist()}, t={self.translation.tolist()})"


def relative_pose(cam_to_world_ref, cam_to_world_src):
    """Transform taking reference-camera points into the source camera frame."""
    return cam_to_world_src.inverse().compose(cam_to_world_ref)


def backproject(depth, K, mask=None):
    """Lift valid pixels to camera-frame points P = D(p) K^-1 p~.

    Returns an (n, 3) tensor, pixels in row-major order; differentiable
    w.r.t. ``depth``.
    """
    depth = as_tensor(depth)
    if depth.ndim != 2:
        raise ContractError(f"depth must be (H, W), got {depth.shape}")
    H, W = depth.shape
    valid = np.ones((H, W), bool) if mask is None else np.asarray(mask, dtype=bool)
    if valid.shape != (H, W):
        raise ContractError(f"mask shape {valid.shape} does not match depth {depth.shape}")
    bad = valid & ~(depth.data > 0)
    if bad.any():
        v, u = np.argwhere(bad)[0]
        raise ContractError(f"non-positive depth {depth.data[v, u]} at pixel (u={u}, v={v})")
    flat_idx = np.flatnonzero(valid.ravel())
    rays = K.rays(H, W)[flat_idx]
    d = T.reshape(depth, (H * W,))[flat_idx]
    return T.reshape(d, (-1, 1)) * rays


def project(points, K):
    """Project (n, 3) points: returns ``(pixels (n, 2), depths (n,), valid)``.

    Points with Z <= 1e-12 (behind or on the camera plane) are flagged
    invalid; their pixel values are computed with a guarded divisor and
    are meaningless.
    """
    points = as_tensor(points)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ContractError(f"points must be (n, 3), got {points.shape}")
    Z = points[:, 2]
    valid = Z.data > Z_EPS
    Zs = T.where(valid, Z, 1.0)
    u = points[:, 0] / Zs * K.fx + K.u0
    v = points[:, 1] / Zs * K.fy + K.v0
    return T.stack([u, v], axis=1), Z, valid


def transform_points(points, transform):
    """Apply ``R p + t`` to every row of an (n, 3) cloud."""
    points = as_tensor(points)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ContractError(f"points must be (n, 3), got {points.shape}")
    return points @ transform.rotation.T + transform.translation


def warp_image(src, depth_ref, T_ref_to_src, K, depth_mask=None):
    """Reconstruct the reference view by sampling ``src`` (H, W, C).

    Each reference pixel is backprojected with ``depth_ref``, moved into
    the source camera and sampled bilinearly there. Returns
    ``(warped (H, W, C), valid (H, W))``; out-of-image or behind-camera
    samples are clamped for the value and marked invalid.
    """
    src, depth_ref = as_tensor(src), as_tensor(depth_ref)
    if src.ndim == 2:
        src = T.reshape(src, src.shape + (1,))
    if src.ndim != 3 or depth_ref.shape != src.shape[:2]:
        raise ContractError(f"src {src.shape} and depth {depth_ref.shape} must share H, W")
    H, W, C = src.shape
    dmask = np.ones((H, W), bool) if depth_mask is None else np.asarray(depth_mask, bool)
    depth_ok = dmask & (depth_ref.data > 0)
    safe_depth = T.where(depth_ok, depth_ref, 1.0)
    pts = backproject(safe_depth, K)
    pix, _, front = project(transform_points(pts, T_ref_to_src), K)
    x, y = pix[:, 0], pix[:, 1]
    tol = 1e-9
    inside = (x.data >= -tol) & (x.data <= W - 1 + tol) & (y.data >= -tol) & (y.data <= H - 1 + tol)
    valid = (front & inside).reshape(H, W) & depth_ok
    warped = T.reshape(T.bilinear_sample(src, x, y), (H, W, C))
    return warped, valid
