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

"""Synthetic surround-view scenes with oracle depth, ids and 2D boxes.

Objects are boxes on the ground around a six-camera rig. Each view is
rendered at feature resolution: the screen-space convex hull of a box's
corners is filled with the camera depth of the box center (nearest depth
wins), and the same hull marks the object's one-hot id channel.
"""

import logging
import math
import os
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.spatial

from raydet import geometry, tensor_io
from raydet.depth_bins import DepthBinSpec, depth_to_bins
from raydet.guard import (
    MalformedInputError,
    SceneGenerationError,
    check,
)
from raydet.lift_splat import DepthDistribution, ImageFeatureMap
from raydet.matching import GroundTruth
from raydet.query_init import Box2D

logger = logging.getLogger(__name__)

# (w, l, h) priors in meters
CATEGORY_SIZES = {
    "car": (2.0, 4.5, 1.7),
    "pedestrian": (0.7, 0.7, 1.7),
}

MIN_CORNER_DEPTH = 0.1
HULL_TOL = 1e-9

SCENE_FILE = "scene.json"
DEPTH_FILE = "depth" + tensor_io.TENSOR_SUFFIX
ID_FEATURES_FILE = "id_features" + tensor_io.TENSOR_SUFFIX


class SceneConfig(NamedTuple):
    """Knobs of the synthetic scene generator."""

    num_cars: int = 6
    num_pedestrians: int = 4
    min_range: float = 6.0
    max_range: float = 35.0
    max_car_speed: float = 10.0
    max_pedestrian_speed: float = 1.5
    separation_margin: float = 0.5
    max_retries: int = 100
    num_frames: int = 1
    frame_interval: float = 0.5
    ego_speed: float = 0.0
    num_cameras: int = 6
    image_width: int = 800
    image_height: int = 450
    focal: float = 560.0
    camera_height: float = 1.5
    stride: int = 16

    def validate(self) -> None:
        """Check the generator settings."""
        check(
            self.num_cars >= 0 and self.num_pedestrians >= 0,
            "object counts >= 0",
        )
        check(
            0.0 <= self.min_range <= self.max_range,
            "0 <= min range <= max range",
            f"{self.min_range}, {self.max_range}",
        )
        check(self.max_retries >= 1, "placement retries >= 1")
        check(self.num_frames >= 1, "T >= 1", str(self.num_frames))
        check(self.frame_interval > 0.0, "frame interval > 0")
        check(self.num_cameras >= 1, "at least one camera")
        check(self.stride >= 1, "stride >= 1")
        check(
            self.image_width >= self.stride
            and self.image_height >= self.stride,
            "image holds at least one feature cell",
        )

    @property
    def feature_shape(self) -> Tuple[int, int]:
        """(rows, cols) of a feature-resolution view."""
        return (
            self.image_height // self.stride,
            self.image_width // self.stride,
        )


def reference_rig(
    config: SceneConfig = SceneConfig(),
) -> List[geometry.Camera]:
    """Level cameras at yaw k * 360 / V degrees, on the ego z axis."""
    step = geometry.TWO_PI / config.num_cameras
    return [
        geometry.Camera.looking_along(
            k * step,
            (0.0, 0.0, config.camera_height),
            config.focal,
            config.image_width,
            config.image_height,
        )
        for k in range(config.num_cameras)
    ]


def box_corners(
    center: Sequence[float], size: Sequence[float], yaw: float
) -> np.ndarray:
    """(8, 3) corners of a box; x of the box frame is the heading."""
    w, l, h = size  # noqa: E741
    xs = np.asarray([1, 1, 1, 1, -1, -1, -1, -1]) * l / 2.0
    ys = np.asarray([1, 1, -1, -1, 1, 1, -1, -1]) * w / 2.0
    zs = np.asarray([1, -1, 1, -1, 1, -1, 1, -1]) * h / 2.0
    c, s = math.cos(yaw), math.sin(yaw)
    return np.stack(
        [
            center[0] + c * xs - s * ys,
            center[1] + s * xs + c * ys,
            center[2] + zs,
        ],
        axis=-1,
    )


def bounding_radius(size: Sequence[float]) -> float:
    """Radius of the BEV footprint's circumcircle."""
    return 0.5 * math.hypot(size[0], size[1])


class Scene:
    """A generated (or loaded) scene.

    :param depth: (T, V, rows, cols) box-center camera depth, 0 where empty
    :param id_features: (T, V, rows, cols, C) one-hot object ids
    """

    def __init__(
        self,
        seed: int,
        timestamps: Sequence[float],
        cameras: Sequence[geometry.Camera],
        poses: Sequence[geometry.EgoPose],
        objects: Sequence[GroundTruth],
        boxes2d: Sequence[Box2D],
        stride: int,
        depth: Optional[np.ndarray] = None,
        id_features: Optional[np.ndarray] = None,
    ) -> None:
        """Run constructor."""
        self.seed = int(seed)
        self.timestamps = [float(ts) for ts in timestamps]
        self.cameras = list(cameras)
        self.poses = list(poses)
        self.objects = list(objects)
        self.boxes2d = list(boxes2d)
        self.stride = int(stride)
        self.depth = depth
        self.id_features = id_features
        check(len(self.poses) == len(self.timestamps), "a pose per frame")
        for gt in self.objects:
            gt.validate()

    @property
    def num_frames(self) -> int:
        """T."""
        return len(self.timestamps)

    @property
    def num_channels(self) -> int:
        """Channels of the id-feature maps."""
        return max(len(self.objects), 1)

    @property
    def reference_pose(self) -> geometry.EgoPose:
        """Ego pose of the reference frame."""
        return self.poses[0]

    def feature_maps(self, frame: int = 0) -> List[ImageFeatureMap]:
        """Id-feature map of every view in a frame."""
        return [
            ImageFeatureMap(self.id_features[frame, v], self.stride, view=v)
            for v in range(len(self.cameras))
        ]

    def depth_distributions(
        self, bins: DepthBinSpec, frame: int = 0
    ) -> List[DepthDistribution]:
        """One-hot oracle depth distribution of every view in a frame."""
        return [
            oracle_depth_distribution(self.depth[frame, v], bins)
            for v in range(len(self.cameras))
        ]

    def cameras_in_reference(self, frame: int) -> List[geometry.Camera]:
        """The rig of `frame` expressed in the reference ego frame."""
        return [
            geometry.camera_in_reference(
                cam, self.poses[frame], self.reference_pose
            )
            for cam in self.cameras
        ]

    def to_dict(self) -> dict:
        """scene.json document."""
        return {
            "seed": self.seed,
            "timestamps": self.timestamps,
            "feature_stride": self.stride,
            "cameras": [cam.to_dict() for cam in self.cameras],
            "poses": [pose.to_dict() for pose in self.poses],
            "objects": [gt.to_dict() for gt in self.objects],
            "boxes2d": [box.to_dict() for box in self.boxes2d],
        }

    @classmethod
    def from_dict(cls, record: dict) -> "Scene":
        """Build a scene (without maps) from its scene.json document."""
        try:
            timestamps = record["timestamps"]
            poses = record.get("poses")
            if poses is None:
                poses = [
                    geometry.EgoPose(ts, np.eye(4)).to_dict()
                    for ts in timestamps
                ]
            return cls(
                record["seed"],
                timestamps,
                [geometry.Camera.from_dict(c) for c in record["cameras"]],
                [geometry.EgoPose.from_dict(p) for p in poses],
                [GroundTruth.from_dict(o) for o in record["objects"]],
                [Box2D.from_dict(b) for b in record.get("boxes2d", [])],
                record.get("feature_stride", SceneConfig().stride),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedInputError(f"bad scene document: {e}")


def _place_objects(
    rng: np.random.Generator, config: SceneConfig
) -> List[GroundTruth]:
    plan = [("car", config.max_car_speed)] * config.num_cars
    plan += [("pedestrian", config.max_pedestrian_speed)] * (
        config.num_pedestrians
    )
    placed: List[GroundTruth] = []
    for category, max_speed in plan:
        size = CATEGORY_SIZES[category]
        radius = bounding_radius(size)
        for _ in range(config.max_retries):
            distance = rng.uniform(config.min_range, config.max_range)
            azimuth = rng.uniform(0.0, geometry.TWO_PI)
            yaw = rng.uniform(0.0, geometry.TWO_PI)
            speed = rng.uniform(0.0, max_speed)
            x = distance * math.cos(azimuth)
            y = distance * math.sin(azimuth)
            clear = all(
                math.hypot(x - o.center[0], y - o.center[1])
                >= radius + bounding_radius(o.size) + config.separation_margin
                for o in placed
            )
            if clear:
                placed.append(
                    GroundTruth(
                        (x, y, size[2] / 2.0),
                        size,
                        yaw,
                        (speed * math.cos(yaw), speed * math.sin(yaw)),
                        category,
                    )
                )
                break
        else:
            raise SceneGenerationError(
                "objects placed without BEV overlap",
                f"no room for {category} #{len(placed)} after "
                f"{config.max_retries} tries",
            )
    return placed


def _ego_poses(config: SceneConfig) -> List[geometry.EgoPose]:
    poses = []
    for t in range(config.num_frames):
        ts = 0.0 - t * config.frame_interval
        offset = (config.ego_speed * ts, 0.0, 0.0)
        pose = geometry.rigid_transform(0.0, offset)
        poses.append(geometry.EgoPose(ts, pose))
    return poses


def _object_corners_in_ego(
    gt: GroundTruth, pose: geometry.EgoPose, reference: geometry.EgoPose
) -> np.ndarray:
    """Corners of an object at `pose`'s time in that frame's ego frame."""
    dt = pose.timestamp - reference.timestamp
    corners = box_corners(gt.center, gt.size, gt.yaw)
    corners = geometry.warp_points(corners, gt.velocity, dt)
    return geometry.transform_points(
        geometry.relative_transform(reference, pose), corners
    )


def _object_center_in_ego(
    gt: GroundTruth, pose: geometry.EgoPose, reference: geometry.EgoPose
) -> np.ndarray:
    dt = pose.timestamp - reference.timestamp
    center = geometry.warp_points(np.asarray(gt.center), gt.velocity, dt)
    return geometry.transform_points(
        geometry.relative_transform(reference, pose), center
    )


def _screen_hull(
    cam: geometry.Camera, corners: np.ndarray
) -> Optional[np.ndarray]:
    """Pixel coordinates of the corners in front of the camera, or None."""
    pc = geometry.transform_points(cam.camera_from_ego, corners)
    front = pc[:, 2] > MIN_CORNER_DEPTH
    if front.sum() < 3:
        return None
    pc = pc[front]
    u = cam.fx * pc[:, 0] / pc[:, 2] + cam.cx
    v = cam.fy * pc[:, 1] / pc[:, 2] + cam.cy
    return np.stack([u, v], axis=-1)


def _cells_in_hull(
    pixels: np.ndarray, centers: np.ndarray
) -> Optional[np.ndarray]:
    """Mask of feature-cell centers inside the convex hull of `pixels`."""
    try:
        hull = scipy.spatial.ConvexHull(pixels)
    except scipy.spatial.QhullError:
        return None
    normals = hull.equations[:, :2]
    offsets = hull.equations[:, 2]
    inside = centers @ normals.T + offsets <= HULL_TOL
    return np.all(inside, axis=-1)


def render_view(
    cam: geometry.Camera,
    objects: Sequence[GroundTruth],
    pose: geometry.EgoPose,
    reference: geometry.EgoPose,
    stride: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Depth (rows, cols) and one-hot ids (rows, cols, C) of one view."""
    rows, cols = cam.height // stride, cam.width // stride
    channels = max(len(objects), 1)
    u = (np.arange(cols) + 0.5) * stride
    v = (np.arange(rows) + 0.5) * stride
    uu, vv = np.meshgrid(u, v)
    centers = np.stack([uu.ravel(), vv.ravel()], axis=-1)
    depth = np.full(rows * cols, np.inf)
    owner = np.full(rows * cols, -1)
    for index, gt in enumerate(objects):
        corners = _object_corners_in_ego(gt, pose, reference)
        center = _object_center_in_ego(gt, pose, reference)
        zc = geometry.transform_points(cam.camera_from_ego, center)[2]
        if zc <= MIN_CORNER_DEPTH:
            continue
        pixels = _screen_hull(cam, corners)
        if pixels is None:
            continue
        mask = _cells_in_hull(pixels, centers)
        if mask is None:
            continue
        nearer = mask & (zc < depth)
        depth[nearer] = zc
        owner[nearer] = index
    ids = np.zeros((rows * cols, channels))
    hit = owner >= 0
    ids[np.flatnonzero(hit), owner[hit]] = 1.0
    depth[~hit] = 0.0
    return depth.reshape(rows, cols), ids.reshape(rows, cols, channels)


def oracle_boxes(
    cams: Sequence[geometry.Camera], objects: Sequence[GroundTruth]
) -> List[Box2D]:
    """Tight 2D boxes of every object in every view, clipped to the image."""
    boxes = []
    identity = geometry.EgoPose(0.0, np.eye(4))
    for view, cam in enumerate(cams):
        for gt in objects:
            corners = _object_corners_in_ego(gt, identity, identity)
            pixels = _screen_hull(cam, corners)
            if pixels is None:
                continue
            lo = pixels.min(axis=0)
            hi = pixels.max(axis=0)
            if np.any(hi - lo <= 0.0):
                logger.warning(
                    "Dropping degenerate %s box in view %d", gt.category, view
                )
                continue
            x1 = max(float(lo[0]), 0.0)
            y1 = max(float(lo[1]), 0.0)
            x2 = min(float(hi[0]), float(cam.width))
            y2 = min(float(hi[1]), float(cam.height))
            if x1 >= x2 or y1 >= y2:
                continue
            boxes.append(Box2D(view, x1, y1, x2, y2, gt.category, 1.0))
    return boxes


def render(
    cams: Sequence[geometry.Camera],
    objects: Sequence[GroundTruth],
    poses: Sequence[geometry.EgoPose],
    stride: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Depth (T, V, rows, cols) and ids (T, V, rows, cols, C) of all frames."""
    depth_frames, id_frames = [], []
    for pose in poses:
        views = [
            render_view(cam, objects, pose, poses[0], stride) for cam in cams
        ]
        depth_frames.append(np.stack([d for d, _ in views]))
        id_frames.append(np.stack([i for _, i in views]))
    return np.stack(depth_frames), np.stack(id_frames)


def generate_scene(seed: int, config: SceneConfig = SceneConfig()) -> Scene:
    """Deterministic scene for `seed`."""
    config.validate()
    rng = np.random.default_rng(seed)
    cams = reference_rig(config)
    objects = _place_objects(rng, config)
    poses = _ego_poses(config)
    depth, ids = render(cams, objects, poses, config.stride)
    boxes = oracle_boxes(cams, objects)
    logger.debug(
        "Generated scene %d: %d objects, %d 2D boxes, %d frames",
        seed,
        len(objects),
        len(boxes),
        len(poses),
    )
    return Scene(
        seed,
        [pose.timestamp for pose in poses],
        cams,
        poses,
        objects,
        boxes,
        config.stride,
        depth,
        ids,
    )


def oracle_depth_distribution(
    depth: np.ndarray, bins: DepthBinSpec
) -> DepthDistribution:
    """One-hot distribution at each rendered depth's bin; empty elsewhere."""
    rows, cols = depth.shape
    probs = np.zeros((rows, cols, bins.num_bins))
    valid = depth > 0.0
    indices = depth_to_bins(bins, depth[valid])
    r, c = np.nonzero(valid)
    probs[r, c, indices] = 1.0
    return DepthDistribution(probs)


def save_scene(scene: Scene, out_dir: str) -> Dict[str, str]:
    """Write scene.json and the rendered maps; returns the written paths."""
    paths = {
        "scene": os.path.join(out_dir, SCENE_FILE),
        "depth": os.path.join(out_dir, DEPTH_FILE),
        "id_features": os.path.join(out_dir, ID_FEATURES_FILE),
    }
    tensor_io.write_json(paths["scene"], scene.to_dict())
    tensor_io.write_tensor(paths["depth"], scene.depth)
    tensor_io.write_tensor(paths["id_features"], scene.id_features)
    return paths


def load_scene(path: str, with_maps: bool = True) -> Scene:
    """Read a scene.json and, when asked, its sibling map tensors."""
    scene = Scene.from_dict(tensor_io.read_json(path))
    if with_maps:
        base = os.path.dirname(path)
        scene.depth = tensor_io.read_tensor(os.path.join(base, DEPTH_FILE))
        scene.id_features = tensor_io.read_tensor(
            os.path.join(base, ID_FEATURES_FILE)
        )
        expected = (scene.num_frames, len(scene.cameras))
        if scene.depth.shape[:2] != expected:
            raise MalformedInputError(
                f"depth maps are {scene.depth.shape}, expected T x V = "
                f"{expected}",
                path,
            )
        if scene.id_features.shape[:4] != scene.depth.shape:
            raise MalformedInputError(
                "id features do not match the depth maps", path
            )
    return scene
