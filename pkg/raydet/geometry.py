# Copyright 2026 The raydet Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Coordinate systems, pinhole projection and rigid transforms.

Frames used throughout raydet:

* ego: x forward, y left, z up, origin on the ground below the rig.
* camera: x right, y down, z along the optical axis.
* polar: azimuth ``theta`` counterclockwise from ego +x in [0, 2pi),
  horizontal ``depth`` from the ego origin and ego ``z``.

Cameras store ``ego_from_camera`` (camera-to-ego); projection inverts it.
"""

import logging
import math
from typing import NamedTuple, Sequence, Tuple

import numpy as np

from raydet.guard import InvariantViolation, check

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
ORTHONORMAL_TOL = 1e-9


class PolarPoint(NamedTuple):
    """Point in ego polar coordinates."""

    theta: float
    depth: float
    z: float


class CartesianPoint(NamedTuple):
    """Point in ego Cartesian coordinates (meters)."""

    x: float
    y: float
    z: float


class ImagePoint(NamedTuple):
    """Continuous pixel location and whether it lies inside the image."""

    u: float
    v: float
    valid: bool


def _check_finite(values: Sequence[float], what: str) -> None:
    if not all(math.isfinite(v) for v in values):
        raise InvariantViolation(f"{what} is finite", repr(tuple(values)))


def _check_rigid(matrix: np.ndarray, what: str) -> None:
    check(matrix.shape == (4, 4), f"{what} is 4x4", str(matrix.shape))
    check(bool(np.all(np.isfinite(matrix))), f"{what} is finite")
    rot = matrix[:3, :3]
    err = np.abs(rot.T @ rot - np.eye(3)).max()
    check(
        err <= ORTHONORMAL_TOL,
        f"{what} rotation orthonormal within 1e-9",
        f"max error {err:.3e}",
    )
    check(
        np.allclose(matrix[3], [0.0, 0.0, 0.0, 1.0]),
        f"{what} last row is (0, 0, 0, 1)",
    )


def invert_rigid(matrix: np.ndarray) -> np.ndarray:
    """Invert a 4x4 rigid transform without a general matrix inverse."""
    rot = matrix[:3, :3]
    inv = np.eye(4)
    inv[:3, :3] = rot.T
    inv[:3, 3] = -rot.T @ matrix[:3, 3]
    return inv


def rigid_transform(yaw: float, translation: Sequence[float]) -> np.ndarray:
    """4x4 transform rotating by `yaw` about +z then translating."""
    c, s = math.cos(yaw), math.sin(yaw)
    matrix = np.eye(4)
    matrix[:2, :2] = [[c, -s], [s, c]]
    matrix[:3, 3] = translation
    return matrix


class Camera:
    """Pinhole camera with zero skew and no distortion.

    :param intrinsics: 3x3 matrix (fx, fy, cx, cy)
    :param ego_from_camera: 4x4 rigid camera-to-ego transform
    :param width: image width in pixels
    :param height: image height in pixels
    """

    def __init__(
        self,
        intrinsics: Sequence[Sequence[float]],
        ego_from_camera: Sequence[Sequence[float]],
        width: int,
        height: int,
    ) -> None:
        """Run constructor."""
        self.intrinsics = np.asarray(intrinsics, dtype=np.float64)
        self.ego_from_camera = np.asarray(ego_from_camera, dtype=np.float64)
        self.width = int(width)
        self.height = int(height)
        self.validate()
        self.camera_from_ego = invert_rigid(self.ego_from_camera)

    def validate(self) -> None:
        """Check the camera invariants."""
        k = self.intrinsics
        check(k.shape == (3, 3), "intrinsics are 3x3", str(k.shape))
        check(bool(np.all(np.isfinite(k))), "intrinsics are finite")
        check(k[0, 0] > 0 and k[1, 1] > 0, "fx > 0 and fy > 0")
        check(k[0, 1] == 0.0, "zero skew")
        check(
            np.array_equal(k[2], [0.0, 0.0, 1.0]),
            "intrinsics last row is (0, 0, 1)",
        )
        check(
            self.width >= 1 and self.height >= 1,
            "width, height >= 1",
            f"{self.width}x{self.height}",
        )
        _check_rigid(self.ego_from_camera, "ego_from_camera")

    @property
    def fx(self) -> float:
        """Focal length along u."""
        return float(self.intrinsics[0, 0])

    @property
    def fy(self) -> float:
        """Focal length along v."""
        return float(self.intrinsics[1, 1])

    @property
    def cx(self) -> float:
        """Principal point u."""
        return float(self.intrinsics[0, 2])

    @property
    def cy(self) -> float:
        """Principal point v."""
        return float(self.intrinsics[1, 2])

    @property
    def position(self) -> np.ndarray:
        """Camera center in the ego frame."""
        return self.ego_from_camera[:3, 3].copy()

    @classmethod
    def looking_along(
        cls,
        yaw: float,
        position: Sequence[float],
        focal: float,
        width: int,
        height: int,
    ) -> "Camera":
        """Level camera whose optical axis points along ego azimuth `yaw`."""
        c, s = math.cos(yaw), math.sin(yaw)
        ego_from_camera = np.eye(4)
        # columns: camera x (right), y (down), z (forward) in ego
        ego_from_camera[:3, 0] = [s, -c, 0.0]
        ego_from_camera[:3, 1] = [0.0, 0.0, -1.0]
        ego_from_camera[:3, 2] = [c, s, 0.0]
        ego_from_camera[:3, 3] = position
        intrinsics = [
            [focal, 0.0, width / 2.0],
            [0.0, focal, height / 2.0],
            [0.0, 0.0, 1.0],
        ]
        return cls(intrinsics, ego_from_camera, width, height)

    def to_dict(self) -> dict:
        """Scene-file record for the camera."""
        return {
            "intrinsics": [float(v) for v in self.intrinsics.ravel()],
            "ego_from_camera": [
                float(v) for v in self.ego_from_camera.ravel()
            ],
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "Camera":
        """Build a camera from its scene-file record."""
        return cls(
            np.asarray(record["intrinsics"], dtype=np.float64).reshape(3, 3),
            np.asarray(record["ego_from_camera"], dtype=np.float64).reshape(
                4, 4
            ),
            record["width"],
            record["height"],
        )


class EgoPose:
    """Pose of the ego vehicle in the world at a timestamp."""

    def __init__(
        self, timestamp: float, world_from_ego: Sequence[Sequence[float]]
    ) -> None:
        """Run constructor."""
        self.timestamp = float(timestamp)
        self.world_from_ego = np.asarray(world_from_ego, dtype=np.float64)
        _check_rigid(self.world_from_ego, "world_from_ego")

    def to_dict(self) -> dict:
        """Scene-file record for the pose."""
        return {
            "timestamp": self.timestamp,
            "world_from_ego": [float(v) for v in self.world_from_ego.ravel()],
        }

    @classmethod
    def from_dict(cls, record: dict) -> "EgoPose":
        """Build a pose from its scene-file record."""
        return cls(
            record["timestamp"],
            np.asarray(record["world_from_ego"], dtype=np.float64).reshape(
                4, 4
            ),
        )


def polar_to_cartesian(p: PolarPoint) -> CartesianPoint:
    """Convert an ego polar point to Cartesian coordinates."""
    _check_finite(p, "polar point")
    return CartesianPoint(
        p.depth * math.cos(p.theta), p.depth * math.sin(p.theta), p.z
    )


def wrap_angle(theta: float) -> float:
    """Wrap an angle into [0, 2pi)."""
    wrapped = theta % TWO_PI
    # theta slightly below zero rounds up to exactly 2pi
    if wrapped >= TWO_PI:
        wrapped = 0.0
    return wrapped


def cartesian_to_polar(p: CartesianPoint) -> PolarPoint:
    """Convert an ego Cartesian point to polar coordinates.

    The origin (x = y = 0) has no azimuth and maps to theta = 0.
    """
    _check_finite(p, "cartesian point")
    if p.x == 0.0 and p.y == 0.0:
        return PolarPoint(0.0, 0.0, p.z)
    theta = wrap_angle(math.atan2(p.y, p.x))
    return PolarPoint(theta, math.hypot(p.x, p.y), p.z)


def polar_to_cartesian_array(
    theta: np.ndarray, depth: np.ndarray, z: np.ndarray
) -> np.ndarray:
    """Vectorized polar_to_cartesian; returns an (..., 3) array."""
    theta, depth, z = np.broadcast_arrays(theta, depth, z)
    return np.stack(
        [depth * np.cos(theta), depth * np.sin(theta), z.astype(np.float64)],
        axis=-1,
    )


def transform_points(matrix: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a 4x4 rigid transform to an (..., 3) array of points."""
    points = np.asarray(points, dtype=np.float64)
    return points @ matrix[:3, :3].T + matrix[:3, 3]


def project_points(
    cam: Camera, points: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project (N, 3) ego points into the camera.

    :returns: (uv (N, 2), valid (N,), camera-frame depth z_c (N,))
    """
    pc = transform_points(cam.camera_from_ego, np.reshape(points, (-1, 3)))
    zc = pc[:, 2]
    in_front = zc > 0.0
    safe_z = np.where(in_front, zc, 1.0)
    u = cam.fx * pc[:, 0] / safe_z + cam.cx
    v = cam.fy * pc[:, 1] / safe_z + cam.cy
    valid = (
        in_front
        & (u >= 0.0)
        & (u < cam.width)
        & (v >= 0.0)
        & (v < cam.height)
    )
    return np.stack([u, v], axis=-1), valid, zc


def project_point(cam: Camera, p: CartesianPoint) -> ImagePoint:
    """Project one ego point; behind-camera points are invalid."""
    uv, valid, zc = project_points(cam, np.asarray([p], dtype=np.float64))
    if zc[0] <= 0.0:
        return ImagePoint(math.nan, math.nan, False)
    return ImagePoint(float(uv[0, 0]), float(uv[0, 1]), bool(valid[0]))


def back_project(
    cam: Camera, u: np.ndarray, v: np.ndarray, depth: np.ndarray
) -> np.ndarray:
    """Ego points at camera-frame depth `depth` seen at pixels (u, v)."""
    u, v, depth = np.broadcast_arrays(
        np.asarray(u, dtype=np.float64),
        np.asarray(v, dtype=np.float64),
        np.asarray(depth, dtype=np.float64),
    )
    pc = np.stack(
        [(u - cam.cx) / cam.fx * depth, (v - cam.cy) / cam.fy * depth, depth],
        axis=-1,
    )
    return transform_points(cam.ego_from_camera, pc)


def warp_point(
    p: CartesianPoint, velocity: Tuple[float, float], dt: float
) -> CartesianPoint:
    """Move a point under constant velocity for `dt` seconds."""
    _check_finite((*p, *velocity, dt), "warp input")
    return CartesianPoint(p.x + velocity[0] * dt, p.y + velocity[1] * dt, p.z)


def warp_points(
    points: np.ndarray, velocity: Tuple[float, float], dt: float
) -> np.ndarray:
    """Vectorized warp_point over an (..., 3) array."""
    _check_finite((*velocity, dt), "warp input")
    shift = np.asarray([velocity[0] * dt, velocity[1] * dt, 0.0])
    return np.asarray(points, dtype=np.float64) + shift


def ego_transform(
    source: EgoPose, target: EgoPose, p: CartesianPoint
) -> CartesianPoint:
    """Re-express a point from the `source` ego frame in the `target` one."""
    matrix = invert_rigid(target.world_from_ego) @ source.world_from_ego
    x, y, z = transform_points(matrix, np.asarray(p, dtype=np.float64))
    return CartesianPoint(float(x), float(y), float(z))


def relative_transform(source: EgoPose, target: EgoPose) -> np.ndarray:
    """4x4 transform taking `source` ego coordinates to `target` ones."""
    return invert_rigid(target.world_from_ego) @ source.world_from_ego


def camera_in_reference(
    cam: Camera, pose: EgoPose, reference: EgoPose
) -> Camera:
    """Camera of frame `pose` expressed in the `reference` ego frame."""
    ego_from_camera = relative_transform(pose, reference) @ cam.ego_from_camera
    return Camera(cam.intrinsics, ego_from_camera, cam.width, cam.height)
