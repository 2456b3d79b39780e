"""Rotation and pinhole-camera primitives shared across the package."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def normalize_quat(q: np.ndarray) -> np.ndarray:
    """Return q / ||q|| along the last axis. Raises on zero-norm quaternions."""
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise ValueError("zero-norm quaternion")
    return q / n


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Convert unit quaternions (w, x, y, z) to rotation matrices.

    Parameters
    ----------
    q : (..., 4) array, assumed normalized.

    Returns
    -------
    (..., 3, 3) array of rotation matrices.
    """
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3), dtype=q.dtype)
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def rotmat_to_quat(R: np.ndarray) -> np.ndarray:
    """Convert a single 3x3 rotation matrix to a unit quaternion (w, x, y, z), w >= 0."""
    m00, m01, m02 = R[0]
    m10, m11, m12 = R[1]
    m20, m21, m22 = R[2]
    tr = m00 + m11 + m22
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = np.array([0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s])
    elif m00 > m11 and m00 > m22:
        s = np.sqrt(1.0 + m00 - m11 - m22) * 2
        q = np.array([(m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s])
    elif m11 > m22:
        s = np.sqrt(1.0 + m11 - m00 - m22) * 2
        q = np.array([(m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s])
    else:
        s = np.sqrt(1.0 + m22 - m00 - m11) * 2
        q = np.array([(m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s])
    if q[0] < 0:
        q = -q
    return normalize_quat(q)


# Partial derivatives of quat_to_rotmat with respect to the (already normalized)
# quaternion components, needed by the analytic backward pass.
def quat_rotmat_jacobian(q: np.ndarray) -> np.ndarray:
    """Return dR/dq for normalized quaternions.

    Parameters
    ----------
    q : (N, 4) normalized quaternions (w, x, y, z).

    Returns
    -------
    (N, 4, 3, 3) array: entry [n, k] is dR_n / dq_k.
    """
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    zeros = np.zeros_like(w)
    n = q.shape[0]
    J = np.empty((n, 4, 3, 3), dtype=q.dtype)
    # dR/dw
    J[:, 0] = np.stack(
        [zeros, -2 * z, 2 * y, 2 * z, zeros, -2 * x, -2 * y, 2 * x, zeros], axis=-1
    ).reshape(n, 3, 3)
    # dR/dx
    J[:, 1] = np.stack(
        [zeros, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x], axis=-1
    ).reshape(n, 3, 3)
    # dR/dy
    J[:, 2] = np.stack(
        [-4 * y, 2 * x, 2 * w, 2 * x, zeros, 2 * z, -2 * w, 2 * z, -4 * y], axis=-1
    ).reshape(n, 3, 3)
    # dR/dz
    J[:, 3] = np.stack(
        [-4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, zeros], axis=-1
    ).reshape(n, 3, 3)
    return J


@dataclass
class CameraView:
    """A posed pinhole camera. The pose maps world points to camera space,
    x_cam = R @ x_world + t, with +z looking forward and pixel centers at
    integer coordinates (u right, v down)."""

    cam_id: int
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    qvec: np.ndarray  # (4,) world-to-camera rotation, (w, x, y, z)
    tvec: np.ndarray  # (3,) world-to-camera translation
    _R: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.qvec = np.asarray(self.qvec, dtype=np.float64)
        self.tvec = np.asarray(self.tvec, dtype=np.float64)
        self.validate()

    def validate(self) -> None:
        if self.qvec.shape != (4,) or self.tvec.shape != (3,):
            raise ValueError(f"camera {self.cam_id}: malformed pose")
        if abs(np.linalg.norm(self.qvec) - 1.0) > 1e-6:
            raise ValueError(f"camera {self.cam_id}: quaternion is not unit-norm")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"camera {self.cam_id}: non-positive focal length")
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"camera {self.cam_id}: non-positive image size")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError(f"camera {self.cam_id}: principal point outside image")

    @property
    def R(self) -> np.ndarray:
        if self._R is None:
            self._R = quat_to_rotmat(normalize_quat(self.qvec))
        return self._R

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates, -R^T t."""
        return -self.R.T @ self.tvec

    def world_to_cam(self, pts: np.ndarray) -> np.ndarray:
        return pts @ self.R.T + self.tvec

    def project(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project world points to pixel coordinates.

        Returns (uv, depth) where uv is (N, 2) and depth the camera-space z.
        Points at or behind the camera produce non-positive depth; callers
        must mask on it before trusting uv.
        """
        pc = self.world_to_cam(np.atleast_2d(pts))
        z = pc[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * pc[:, 0] / z + self.cx
            v = self.fy * pc[:, 1] / z + self.cy
        return np.stack([u, v], axis=-1), z


def look_at_camera(
    cam_id: int,
    position: np.ndarray,
    target: np.ndarray,
    fx: float,
    fy: float,
    width: int,
    height: int,
    up_hint: np.ndarray | None = None,
) -> CameraView:
    """Build a CameraView at `position` whose optical axis points at `target`."""
    position = np.asarray(position, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fwd = target - position
    fwd = fwd / np.linalg.norm(fwd)
    up = np.array([0.0, 0.0, 1.0]) if up_hint is None else np.asarray(up_hint, float)
    if abs(np.dot(fwd, up)) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)  # completes a right-handed (right, down, fwd) frame
    R = np.stack([right, down, fwd], axis=0)
    t = -R @ position
    return CameraView(
        cam_id=cam_id,
        fx=fx,
        fy=fy,
        cx=(width - 1) / 2.0,
        cy=(height - 1) / 2.0,
        width=width,
        height=height,
        qvec=rotmat_to_quat(R),
        tvec=t,
    )
