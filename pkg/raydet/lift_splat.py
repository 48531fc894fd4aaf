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

"""Forward view transformation: lift image features, splat them into BEV.

Lift back-projects every feature cell center at every depth-bin center and
weights the cell feature by the depth probability (outer product). Splat
sum-pools the weighted features into BEV cells in input point order, so the
result is bit-reproducible.
"""

import logging
import math
from typing import List, NamedTuple, Sequence, Tuple, Union

import numpy as np

from raydet import geometry
from raydet.depth_bins import DepthBinSpec, bin_centers
from raydet.guard import ShapeMismatchError, check

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-5


class ImageFeatureMap:
    """Feature grid of one view at one scale.

    :param data: (height, width, C) feature values
    :param stride: input-image pixels per feature cell
    :param view: view index
    :param scale: scale index
    """

    def __init__(
        self, data: np.ndarray, stride: float, view: int = 0, scale: int = 0
    ) -> None:
        """Run constructor."""
        self.data = np.asarray(data, dtype=np.float64)
        check(self.data.ndim == 3, "feature map is height x width x C")
        check(stride >= 1, "stride >= 1", str(stride))
        self.stride = float(stride)
        self.view = int(view)
        self.scale = int(scale)

    @property
    def height(self) -> int:
        """Feature rows."""
        return self.data.shape[0]

    @property
    def width(self) -> int:
        """Feature columns."""
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        """Feature channels."""
        return self.data.shape[2]

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Pixel (u, v) of every cell center, each (height, width)."""
        cols = (np.arange(self.width) + 0.5) * self.stride
        rows = (np.arange(self.height) + 0.5) * self.stride
        u, v = np.meshgrid(cols, rows)
        return u, v


def downsample_feature_map(
    feat: ImageFeatureMap, factor: int
) -> ImageFeatureMap:
    """Average-pool a feature map by `factor` into the next coarser scale."""
    check(factor >= 1, "pool factor >= 1", str(factor))
    height = feat.height // factor
    width = feat.width // factor
    check(height >= 1 and width >= 1, "pooled map is non-empty")
    data = feat.data[:height * factor, :width * factor]
    data = data.reshape(height, factor, width, factor, feat.channels)
    return ImageFeatureMap(
        data.mean(axis=(1, 3)),
        feat.stride * factor,
        view=feat.view,
        scale=feat.scale + 1,
    )


class DepthDistribution:
    """Per-pixel categorical distribution over K depth bins.

    Pixels whose weights are all zero carry no depth evidence and lift no
    mass. Any other pixel is renormalized (with a warning) when its weights
    do not sum to 1 within 1e-5.
    """

    def __init__(self, probs: np.ndarray) -> None:
        """Run constructor."""
        probs = np.array(probs, dtype=np.float64)
        check(probs.ndim == 3, "depth distribution is height x width x K")
        check(bool(np.all(np.isfinite(probs))), "depth weights are finite")
        check(bool(np.all(probs >= 0.0)), "depth weights are non-negative")
        sums = probs.sum(axis=-1)
        off = (sums > 0.0) & (np.abs(sums - 1.0) > NORMALIZATION_TOL)
        if np.any(off):
            logger.warning(
                "Renormalizing %d depth distributions (max deviation %.3e)",
                int(off.sum()),
                float(np.abs(sums[off] - 1.0).max()),
            )
            probs[off] /= sums[off][:, None]
        self.probs = probs

    @property
    def num_bins(self) -> int:
        """Number of depth bins K."""
        return self.probs.shape[2]

    @property
    def valid(self) -> np.ndarray:
        """Pixels that carry depth evidence."""
        return self.probs.sum(axis=-1) > 0.0


class PseudoPointCloud:
    """Lifted points with their features, weights and provenance."""

    def __init__(
        self,
        positions: np.ndarray,
        features: np.ndarray,
        weights: np.ndarray,
        views: np.ndarray,
        pixels: np.ndarray,
        bins: np.ndarray,
    ) -> None:
        """Run constructor."""
        self.positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        self.features = np.asarray(features, dtype=np.float64)
        self.weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        n = len(self.positions)
        check(
            self.features.ndim == 2 and len(self.features) == n,
            "one feature vector per point",
        )
        check(len(self.weights) == n, "one weight per point")
        check(bool(np.all(self.weights >= 0.0)), "weights are non-negative")
        check(bool(np.all(np.isfinite(self.positions))), "points are finite")
        self.views = np.asarray(views, dtype=np.int64).reshape(-1)
        self.pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
        self.bins = np.asarray(bins, dtype=np.int64).reshape(-1)

    def __len__(self) -> int:
        """Number of points."""
        return len(self.positions)

    @property
    def channels(self) -> int:
        """Feature channels C."""
        return self.features.shape[1]

    @classmethod
    def concatenate(
        cls, clouds: Sequence["PseudoPointCloud"]
    ) -> "PseudoPointCloud":
        """Join clouds, preserving their order."""
        return cls(
            np.concatenate([c.positions for c in clouds]),
            np.concatenate([c.features for c in clouds]),
            np.concatenate([c.weights for c in clouds]),
            np.concatenate([c.views for c in clouds]),
            np.concatenate([c.pixels for c in clouds]),
            np.concatenate([c.bins for c in clouds]),
        )


class BevGridSpec(NamedTuple):
    """Square Cartesian grid covering [-extent, extent]^2."""

    extent: float
    resolution: int

    @property
    def cell_size(self) -> float:
        """Edge length of a cell in meters."""
        return 2.0 * self.extent / self.resolution

    @property
    def shape(self) -> Tuple[int, int]:
        """(rows, columns) of the grid."""
        return self.resolution, self.resolution

    @property
    def wraps_rows(self) -> bool:
        """Whether the row axis is periodic."""
        return False

    def validate(self) -> None:
        """Check the grid invariants."""
        check(self.resolution >= 1, "H_B >= 1", str(self.resolution))
        check(self.extent > 0, "E > 0", str(self.extent))

    def cell_index(self, xy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Flat cell index of each (x, y) and whether it is on the grid."""
        xy = np.reshape(xy, (-1, 2))
        col = np.floor((xy[:, 0] + self.extent) / self.cell_size)
        row = np.floor((xy[:, 1] + self.extent) / self.cell_size)
        inside = (
            (col >= 0)
            & (col < self.resolution)
            & (row >= 0)
            & (row < self.resolution)
        )
        flat = np.where(inside, row * self.resolution + col, -1)
        return flat.astype(np.int64), inside

    def continuous_index(self, xy: np.ndarray) -> np.ndarray:
        """(row, col) lattice coordinates with cell centers at integers."""
        xy = np.reshape(xy, (-1, 2))
        col = (xy[:, 0] + self.extent) / self.cell_size - 0.5
        row = (xy[:, 1] + self.extent) / self.cell_size - 0.5
        return np.stack([row, col], axis=-1)

    def cell_centers(self) -> np.ndarray:
        """Ego (x, y) of every cell center, shape (rows, cols, 2)."""
        centers = (np.arange(self.resolution) + 0.5) * self.cell_size
        centers -= self.extent
        x, y = np.meshgrid(centers, centers)
        return np.stack([x, y], axis=-1)


class PolarGridSpec(NamedTuple):
    """Polar grid: rows are azimuth sectors, columns are depth rings."""

    num_angles: int
    num_depths: int
    max_depth: float

    @property
    def angle_size(self) -> float:
        """Angular width of a sector."""
        return geometry.TWO_PI / self.num_angles

    @property
    def depth_size(self) -> float:
        """Radial width of a ring."""
        return self.max_depth / self.num_depths

    @property
    def shape(self) -> Tuple[int, int]:
        """(rows, columns) of the grid."""
        return self.num_angles, self.num_depths

    @property
    def wraps_rows(self) -> bool:
        """Whether the row axis is periodic."""
        return True

    def validate(self) -> None:
        """Check the grid invariants."""
        check(self.num_angles >= 1, "polar sectors >= 1")
        check(self.num_depths >= 1, "polar rings >= 1")
        check(self.max_depth > 0, "polar max depth > 0")

    def _polar(self, xy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        xy = np.reshape(xy, (-1, 2))
        theta = np.mod(np.arctan2(xy[:, 1], xy[:, 0]), geometry.TWO_PI)
        theta = np.where(theta >= geometry.TWO_PI, 0.0, theta)
        return theta, np.hypot(xy[:, 0], xy[:, 1])

    def cell_index(self, xy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Flat cell index of each (x, y) and whether it is on the grid."""
        theta, depth = self._polar(xy)
        row = np.minimum(
            np.floor(theta / self.angle_size), self.num_angles - 1
        )
        col = np.floor(depth / self.depth_size)
        inside = col < self.num_depths
        flat = np.where(inside, row * self.num_depths + col, -1)
        return flat.astype(np.int64), inside

    def continuous_index(self, xy: np.ndarray) -> np.ndarray:
        """(row, col) lattice coordinates with cell centers at integers."""
        theta, depth = self._polar(xy)
        row = theta / self.angle_size - 0.5
        col = depth / self.depth_size - 0.5
        return np.stack([row, col], axis=-1)

    def cell_centers(self) -> np.ndarray:
        """Ego (x, y) of every cell center, shape (rows, cols, 2)."""
        theta = (np.arange(self.num_angles) + 0.5) * self.angle_size
        depth = (np.arange(self.num_depths) + 0.5) * self.depth_size
        depth, theta = np.meshgrid(depth, theta)
        return np.stack([depth * np.cos(theta), depth * np.sin(theta)], -1)


GridSpec = Union[BevGridSpec, PolarGridSpec]


class BevFeatureMap:
    """Features on a BEV grid, shape (rows, cols, C)."""

    def __init__(self, spec: GridSpec, data: np.ndarray) -> None:
        """Run constructor."""
        self.spec = spec
        self.data = np.asarray(data, dtype=np.float64)
        check(
            self.data.ndim == 3 and self.data.shape[:2] == spec.shape,
            "BEV data is rows x cols x C",
            f"{self.data.shape} vs {spec.shape}",
        )
        check(bool(np.all(np.isfinite(self.data))), "BEV features finite")

    @property
    def channels(self) -> int:
        """Feature channels C."""
        return self.data.shape[2]


def lift(
    cam: geometry.Camera,
    feat: ImageFeatureMap,
    depth: DepthDistribution,
    bins: DepthBinSpec,
) -> PseudoPointCloud:
    """Lift one view into a depth-weighted pseudo point cloud.

    Points are ordered by feature row, column, then depth bin.
    """
    if depth.probs.shape[:2] != (feat.height, feat.width):
        raise ShapeMismatchError(
            "depth distribution matches feature grid",
            f"{depth.probs.shape[:2]} vs {(feat.height, feat.width)}",
        )
    if depth.num_bins != bins.num_bins:
        raise ShapeMismatchError(
            "depth distribution K matches bin spec",
            f"{depth.num_bins} vs {bins.num_bins}",
        )
    u, v = feat.cell_centers()
    centers = bin_centers(bins)
    positions = geometry.back_project(
        cam, u[..., None], v[..., None], centers[None, None, :]
    )
    num_bins = bins.num_bins
    features = np.repeat(
        feat.data.reshape(-1, feat.channels), num_bins, axis=0
    )
    rows, cols = np.meshgrid(
        np.arange(feat.height), np.arange(feat.width), indexing="ij"
    )
    pixels = np.repeat(
        np.stack([rows.ravel(), cols.ravel()], axis=-1), num_bins, axis=0
    )
    bin_ids = np.tile(np.arange(num_bins), feat.height * feat.width)
    logger.debug(
        "Lifted view %d: %dx%d cells x %d bins",
        feat.view,
        feat.height,
        feat.width,
        num_bins,
    )
    return PseudoPointCloud(
        positions.reshape(-1, 3),
        features,
        depth.probs.reshape(-1),
        np.full(len(bin_ids), feat.view),
        pixels,
        bin_ids,
    )


def splat(
    points: PseudoPointCloud, spec: GridSpec, channels: int
) -> BevFeatureMap:
    """Sum-pool weighted point features into BEV cells.

    Accumulation follows the input point order; points off the grid are
    dropped.
    """
    if points.channels != channels:
        raise ShapeMismatchError(
            "point channels match BEV channels",
            f"{points.channels} vs {channels}",
        )
    rows, cols = spec.shape
    flat, inside = spec.cell_index(points.positions[:, :2])
    contributions = points.weights[:, None] * points.features
    out = np.zeros((rows * cols, channels))
    # ufunc.at accumulates unbuffered, one point at a time, in index order
    np.add.at(out, flat[inside], contributions[inside])
    logger.debug(
        "Splatted %d of %d points onto a %dx%d grid",
        int(inside.sum()),
        len(points),
        rows,
        cols,
    )
    return BevFeatureMap(spec, out.reshape(rows, cols, channels))


def lift_splat_multi(
    cams: Sequence[geometry.Camera],
    feats: Sequence[ImageFeatureMap],
    depths: Sequence[DepthDistribution],
    bins: DepthBinSpec,
    spec: GridSpec,
) -> BevFeatureMap:
    """Lift every view (ascending view index) and splat once."""
    check(
        len(cams) == len(feats) == len(depths),
        "one camera, feature map and depth distribution per view",
        f"{len(cams)}, {len(feats)}, {len(depths)}",
    )
    check(len(feats) >= 1, "at least one view")
    order = sorted(range(len(feats)), key=lambda i: feats[i].view)
    clouds = [lift(cams[i], feats[i], depths[i], bins) for i in order]
    return splat(
        PseudoPointCloud.concatenate(clouds), spec, feats[0].channels
    )


def bilinear(
    data: np.ndarray, coords: np.ndarray, wrap_rows: bool = False
) -> np.ndarray:
    """Bilinear samples of a (rows, cols, C) grid at (row, col) coordinates.

    Integer coordinates hit cell centers exactly; neighbours outside the
    grid contribute zero unless the row axis wraps.
    """
    rows, cols, channels = data.shape
    coords = np.reshape(coords, (-1, 2))
    r0 = np.floor(coords[:, 0])
    c0 = np.floor(coords[:, 1])
    fr = coords[:, 0] - r0
    fc = coords[:, 1] - c0
    r0 = r0.astype(np.int64)
    c0 = c0.astype(np.int64)
    out = np.zeros((len(coords), channels))
    corners = (
        (0, 0, (1.0 - fr) * (1.0 - fc)),
        (0, 1, (1.0 - fr) * fc),
        (1, 0, fr * (1.0 - fc)),
        (1, 1, fr * fc),
    )
    for dr, dc, weight in corners:
        r = r0 + dr
        c = c0 + dc
        if wrap_rows:
            r = np.mod(r, rows)
        ok = (r >= 0) & (r < rows) & (c >= 0) & (c < cols) & (weight != 0.0)
        out[ok] += weight[ok, None] * data[r[ok], c[ok]]
    return out


def sample_bev_map(bev: BevFeatureMap, xy: np.ndarray) -> np.ndarray:
    """Bilinear BEV features at ego (x, y) locations."""
    coords = bev.spec.continuous_index(xy)
    return bilinear(bev.data, coords, wrap_rows=bev.spec.wraps_rows)


def align_bev_map(
    bev: BevFeatureMap,
    source: geometry.EgoPose,
    target: geometry.EgoPose,
) -> BevFeatureMap:
    """Resample a BEV map built in `source` ego frame into `target`'s."""
    centers = bev.spec.cell_centers().reshape(-1, 2)
    pts = np.concatenate([centers, np.zeros((len(centers), 1))], axis=-1)
    matrix = geometry.relative_transform(target, source)
    in_source = geometry.transform_points(matrix, pts)
    data = sample_bev_map(bev, in_source[:, :2])
    rows, cols = bev.spec.shape
    return BevFeatureMap(bev.spec, data.reshape(rows, cols, bev.channels))


def weight_map(
    cams: Sequence[geometry.Camera],
    depths: Sequence[DepthDistribution],
    stride: float,
    bins: DepthBinSpec,
    spec: GridSpec,
) -> BevFeatureMap:
    """Accumulated lift weight per BEV cell (a single-channel splat)."""
    feats: List[ImageFeatureMap] = []
    for view, depth in enumerate(depths):
        height, width = depth.probs.shape[:2]
        feats.append(
            ImageFeatureMap(np.ones((height, width, 1)), stride, view=view)
        )
    return lift_splat_multi(cams, feats, depths, bins, spec)


def grid_from_options(
    kind: str, extent: float, resolution: int, angles: int, rings: int
) -> GridSpec:
    """Grid spec for a configured rasterization kind."""
    if kind == "polar":
        spec = PolarGridSpec(int(angles), int(rings), float(extent))
    else:
        spec = BevGridSpec(float(extent), int(resolution))
    spec.validate()
    return spec


def cell_area(spec: GridSpec) -> float:
    """Mean cell area in square meters."""
    if isinstance(spec, PolarGridSpec):
        return math.pi * spec.max_depth ** 2 / (
            spec.num_angles * spec.num_depths
        )
    return spec.cell_size ** 2
