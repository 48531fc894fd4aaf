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

"""Ray points, sampling points and weighted feature sampling.

Each query spreads K adaptive ray points over its ray segment, warps them to
every frame with its own velocity and surrounds each with P offsets in its
box frame, giving N x T x K x P sampling points. BEV and image features are
sampled bilinearly at those points and aggregated with provider weights.
"""

import logging
from typing import Iterator, List, NamedTuple, Sequence, Union

import numpy as np

from raydet import geometry
from raydet.guard import ShapeMismatchError, check
from raydet.lift_splat import (
    BevFeatureMap,
    ImageFeatureMap,
    bilinear,
    sample_bev_map,
)
from raydet.providers import ParameterProvider, check_normalized
from raydet.query_init import Query, RaySegment

logger = logging.getLogger(__name__)


class SamplingPoint(NamedTuple):
    """One sampling point with its provenance and location weight."""

    position: geometry.CartesianPoint
    query: int
    frame: int
    ray_point: int
    offset: int
    weight: float


class SampledFeature(NamedTuple):
    """Per-query aggregates of both branches and their fusion, each (N, C)."""

    bev: np.ndarray
    image: np.ndarray
    fused: np.ndarray


class SamplingPointSet:
    """All sampling points of a query set.

    :param positions: (N, T, K, P, 3) ego positions in the reference frame
    :param location_weights: (N, T, K * P), rows sum to 1
    :param frame_weights: (N, T)
    :param timestamps: the T frame timestamps, reference first
    """

    def __init__(
        self,
        positions: np.ndarray,
        location_weights: np.ndarray,
        frame_weights: np.ndarray,
        timestamps: Sequence[float],
    ) -> None:
        """Run constructor."""
        self.positions = np.asarray(positions, dtype=np.float64)
        check(self.positions.ndim == 5, "positions are N x T x K x P x 3")
        n, t, k, p, _ = self.positions.shape
        self.location_weights = np.asarray(location_weights, dtype=np.float64)
        self.frame_weights = np.asarray(frame_weights, dtype=np.float64)
        if self.location_weights.shape != (n, t, k * p):
            raise ShapeMismatchError(
                "location weights are N x T x K*P",
                str(self.location_weights.shape),
            )
        if self.frame_weights.shape != (n, t):
            raise ShapeMismatchError(
                "frame weights are N x T", str(self.frame_weights.shape)
            )
        self.timestamps = [float(ts) for ts in timestamps]

    @property
    def shape(self) -> tuple:
        """(N, T, K, P)."""
        return self.positions.shape[:4]

    @property
    def num_queries(self) -> int:
        """N."""
        return self.positions.shape[0]

    @property
    def num_frames(self) -> int:
        """T."""
        return self.positions.shape[1]

    def __len__(self) -> int:
        """N * T * K * P."""
        n, t, k, p = self.shape
        return n * t * k * p

    def __iter__(self) -> Iterator[SamplingPoint]:
        """Points in (query, frame, ray point, offset) order."""
        n, t, k, p = self.shape
        for qi in range(n):
            for fi in range(t):
                for ki in range(k):
                    for pi in range(p):
                        x, y, z = self.positions[qi, fi, ki, pi]
                        yield SamplingPoint(
                            geometry.CartesianPoint(
                                float(x), float(y), float(z)
                            ),
                            qi,
                            fi,
                            ki,
                            pi,
                            float(self.location_weights[qi, fi, ki * p + pi]),
                        )

    def frame_points(self, frame: int) -> np.ndarray:
        """(N * K * P, 3) positions of one frame, query-major."""
        return self.positions[:, frame].reshape(-1, 3)

    def records(self, branch: str) -> Iterator[dict]:
        """JSON-lines records of every point, tagged with its branch."""
        for point in self:
            yield {
                "branch": branch,
                "query": point.query,
                "frame": point.frame,
                "ray_point": point.ray_point,
                "offset": point.offset,
                "position": list(point.position),
                "weight": point.weight,
            }


def _base_depths(segment: RaySegment, num_points: int) -> np.ndarray:
    if num_points == 1:
        return np.asarray([0.5 * (segment.d_lo + segment.d_hi)])
    return np.linspace(segment.d_lo, segment.d_hi, num_points)


def ray_point_depths(
    query: Query,
    segment: RaySegment,
    num_points: int,
    provider: ParameterProvider,
    index: int = 0,
) -> np.ndarray:
    """Depths of the K adaptive ray points, clamped to the segment."""
    check(num_points >= 1, "K >= 1", str(num_points))
    check(
        0.0 <= segment.d_lo < segment.d_hi,
        "0 <= d_lo < d_hi",
        f"{segment.d_lo}, {segment.d_hi}",
    )
    offsets = np.asarray(
        provider.ray_point_offsets(query, index, num_points), dtype=np.float64
    )
    if offsets.shape != (num_points,):
        raise ShapeMismatchError("one ray-point offset per point")
    depths = _base_depths(segment, num_points) + offsets
    return np.clip(depths, segment.d_lo, segment.d_hi)


def ray_points(
    query: Query,
    segment: RaySegment,
    num_points: int,
    provider: ParameterProvider,
    index: int = 0,
) -> List[geometry.PolarPoint]:
    """K adaptive ray points on the query's ray."""
    depths = ray_point_depths(query, segment, num_points, provider, index)
    return [
        geometry.PolarPoint(query.box.theta, float(d), query.box.z)
        for d in depths
    ]


def box_frame_offsets(query: Query, unit: np.ndarray) -> np.ndarray:
    """Scale unit box-frame offsets by the half extents and rotate by yaw."""
    box = query.box
    scaled = unit * np.asarray([box.l / 2.0, box.w / 2.0, box.h / 2.0])
    c, s = np.cos(box.yaw), np.sin(box.yaw)
    out = np.empty_like(scaled)
    out[..., 0] = c * scaled[..., 0] - s * scaled[..., 1]
    out[..., 1] = s * scaled[..., 0] + c * scaled[..., 1]
    out[..., 2] = scaled[..., 2]
    return out


def generate_sampling_points(
    queries: Sequence[Query],
    segments: Sequence[RaySegment],
    timestamps: Sequence[float],
    num_points: int,
    num_offsets: int,
    provider: ParameterProvider,
) -> SamplingPointSet:
    """N x T x K x P sampling points with provider weights.

    timestamps[0] is the reference frame; other frames are reached by
    moving each ray point with its query's velocity over T_t - T_0.
    """
    check(len(queries) == len(segments), "one segment per query")
    check(len(timestamps) >= 1, "T >= 1")
    check(num_offsets >= 1, "P >= 1", str(num_offsets))
    num_frames = len(timestamps)
    num_samples = num_points * num_offsets
    n = len(queries)
    positions = np.zeros((n, num_frames, num_points, num_offsets, 3))
    location = np.zeros((n, num_frames, num_samples))
    frames = np.zeros((n, num_frames))
    for qi, (query, segment) in enumerate(zip(queries, segments)):
        depths = ray_point_depths(query, segment, num_points, provider, qi)
        base = geometry.polar_to_cartesian_array(
            query.box.theta, depths, query.box.z
        )
        unit = np.asarray(
            provider.sampling_offsets(query, qi, num_points, num_offsets),
            dtype=np.float64,
        )
        if unit.shape != (num_points, num_offsets, 3):
            raise ShapeMismatchError(
                "sampling offsets are K x P x 3", str(unit.shape)
            )
        offsets = box_frame_offsets(query, unit)
        velocity = (query.box.vx, query.box.vy)
        for fi, ts in enumerate(timestamps):
            warped = geometry.warp_points(base, velocity, ts - timestamps[0])
            positions[qi, fi] = warped[:, None, :] + offsets
        weights = np.asarray(
            provider.location_weights(query, qi, num_frames, num_samples),
            dtype=np.float64,
        )
        check_normalized(weights, "location weights")
        location[qi] = weights
        frames[qi] = provider.frame_weights(query, qi, num_frames)
    check(bool(np.all(frames >= 0.0)), "frame weights non-negative")
    points = SamplingPointSet(positions, location, frames, timestamps)
    logger.debug("Generated %d sampling points %s", len(points), points.shape)
    return points


def _aggregate(points: SamplingPointSet, per_frame: np.ndarray) -> np.ndarray:
    """Combine (T, N, K*P, C) point features into (N, C)."""
    weighted = np.einsum("ntj,tnjc->ntc", points.location_weights, per_frame)
    framed = np.einsum("nt,ntc->nc", points.frame_weights, weighted)
    return framed / points.num_frames


def sample_bev(
    points: SamplingPointSet, bev_maps: Sequence[BevFeatureMap]
) -> np.ndarray:
    """Weighted multi-frame BEV features per query, shape (N, C).

    One map per frame, already aligned to the reference ego frame.
    """
    if len(bev_maps) != points.num_frames:
        raise ShapeMismatchError(
            "one BEV map per frame",
            f"{len(bev_maps)} maps for {points.num_frames} frames",
        )
    channels = bev_maps[0].channels
    n, t, k, p = points.shape
    per_frame = np.zeros((t, n, k * p, channels))
    for fi, bev in enumerate(bev_maps):
        check(bev.channels == channels, "BEV maps share channels")
        values = sample_bev_map(bev, points.frame_points(fi)[:, :2])
        per_frame[fi] = values.reshape(n, k * p, channels)
    return _aggregate(points, per_frame)


CameraRig = Union[
    Sequence[geometry.Camera], Sequence[Sequence[geometry.Camera]]
]


def _frame_cameras(
    cams: CameraRig, num_frames: int
) -> List[Sequence[geometry.Camera]]:
    if len(cams) and isinstance(cams[0], geometry.Camera):
        return [cams] * num_frames
    check(len(cams) == num_frames, "cameras for every frame")
    return list(cams)


def sample_images(
    points: SamplingPointSet,
    image_feats: Sequence[Sequence[Sequence[ImageFeatureMap]]],
    cams: CameraRig,
    provider: ParameterProvider,
    queries: Sequence[Query],
) -> np.ndarray:
    """Weighted multi-view multi-scale image features per query, (N, C).

    :param image_feats: indexed [frame][view][scale]
    :param cams: one rig for every frame, or a rig per frame, expressed in
                 the reference ego frame
    """
    n, t, k, p = points.shape
    check(len(queries) == n, "one query per sampling group")
    if len(image_feats) != t:
        raise ShapeMismatchError(
            "image features for every frame",
            f"{len(image_feats)} vs {t}",
        )
    rigs = _frame_cameras(cams, t)
    num_views = len(image_feats[0])
    num_scales = len(image_feats[0][0])
    channels = image_feats[0][0][0].channels
    view_scale = np.zeros((n, num_views, num_scales))
    for qi, query in enumerate(queries):
        weights = np.asarray(
            provider.view_scale_weights(query, qi, num_views, num_scales),
            dtype=np.float64,
        )
        check_normalized(weights, "view-scale weights")
        view_scale[qi] = weights
    per_frame = np.zeros((t, n, k * p, channels))
    for fi in range(t):
        views = image_feats[fi]
        check(
            len(views) == num_views and len(rigs[fi]) >= num_views,
            "a camera for every view",
            f"{len(rigs[fi])} cameras, {len(views)} views",
        )
        pts = points.frame_points(fi)
        acc = np.zeros((len(pts), channels))
        count = np.zeros(len(pts))
        for vi, scales in enumerate(views):
            uv, valid, _ = geometry.project_points(rigs[fi][vi], pts)
            if not np.any(valid):
                continue
            # (N * K * P,) weight per point for each scale of this view
            per_point = np.repeat(view_scale[:, vi, :], k * p, axis=0)
            view_sum = np.zeros((int(valid.sum()), channels))
            for li, feat in enumerate(scales):
                coords = uv[valid][:, ::-1] / feat.stride - 0.5
                values = bilinear(feat.data, coords)
                view_sum += per_point[valid, li, None] * values
            acc[valid] += view_sum
            count[valid] += 1.0
        seen = count > 0
        acc[seen] /= count[seen, None]
        per_frame[fi] = acc.reshape(n, k * p, channels)
    return _aggregate(points, per_frame)


def fuse(
    bev_feat: np.ndarray,
    img_feat: np.ndarray,
    provider: ParameterProvider,
) -> np.ndarray:
    """Linear fusion of the concatenated branches, per query."""
    bev_feat = np.atleast_2d(bev_feat)
    img_feat = np.atleast_2d(img_feat)
    if bev_feat.shape != img_feat.shape:
        raise ShapeMismatchError(
            "branches share shape", f"{bev_feat.shape} vs {img_feat.shape}"
        )
    channels = bev_feat.shape[1]
    matrix = np.asarray(provider.fusion_matrix(channels), dtype=np.float64)
    if matrix.shape != (channels, 2 * channels):
        raise ShapeMismatchError("fusion matrix is C x 2C", str(matrix.shape))
    return np.concatenate([bev_feat, img_feat], axis=1) @ matrix.T


def sample_features(
    bev_points: SamplingPointSet,
    image_points: SamplingPointSet,
    bev_maps: Sequence[BevFeatureMap],
    image_feats: Sequence[Sequence[Sequence[ImageFeatureMap]]],
    cams: CameraRig,
    provider: ParameterProvider,
    queries: Sequence[Query],
) -> SampledFeature:
    """Both branches of every query and their fusion."""
    bev = sample_bev(bev_points, bev_maps)
    image = sample_images(image_points, image_feats, cams, provider, queries)
    sampled = SampledFeature(bev, image, fuse(bev, image, provider))
    for name, value in sampled._asdict().items():
        check(bool(np.all(np.isfinite(value))), f"{name} features finite")
    return sampled
