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

"""Radial query initialization.

Base queries sit on ``N_r`` evenly spaced BEV rays from the ego center with
``N_d`` depth slots per ray. Foreground queries add extra rays whose
midpoints project into 2D detection boxes stretched to full image height.
"""

import logging
import math
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np

from raydet import geometry
from raydet.guard import MalformedInputError, check

logger = logging.getLogger(__name__)

BASE = "base"
FOREGROUND = "foreground"
ORIGINS = (BASE, FOREGROUND)

DEFAULT_EMBED_DIMS = 32


class BoxTemplate(NamedTuple):
    """Box attributes every fresh query starts with."""

    z: float = 0.85
    w: float = 2.0
    l: float = 4.5  # noqa: E741
    h: float = 1.7
    yaw: float = 0.0
    vx: float = 0.0
    vy: float = 0.0

    def validate(self) -> None:
        """Check the template dimensions."""
        check(
            self.w > 0 and self.l > 0 and self.h > 0,
            "w, l, h > 0",
            f"{self.w}, {self.l}, {self.h}",
        )


class QueryBox(NamedTuple):
    """Polar-parameterized 3D box of a query."""

    theta: float
    depth: float
    z: float
    w: float
    l: float  # noqa: E741
    h: float
    yaw: float
    vx: float
    vy: float

    def center(self) -> geometry.CartesianPoint:
        """Ego Cartesian center of the box."""
        return geometry.polar_to_cartesian(
            geometry.PolarPoint(self.theta, self.depth, self.z)
        )


class Query:
    """A detection hypothesis: feature vector, box and ray provenance.

    :param feature: C-vector
    :param box: polar box
    :param ray_id: ray the query sits on
    :param slot: index along the ray
    :param origin: BASE or FOREGROUND
    :param num_slots: number of slots on the query's ray
    :param category: category a foreground ray was selected for
    :param padded: whether a foreground ray is a filler no box selected
    """

    def __init__(
        self,
        feature: np.ndarray,
        box: QueryBox,
        ray_id: int,
        slot: int,
        origin: str,
        num_slots: int,
        category: Optional[str] = None,
        padded: bool = False,
    ) -> None:
        """Run constructor."""
        self.feature = np.asarray(feature, dtype=np.float64).reshape(-1)
        self.box = box
        self.ray_id = int(ray_id)
        self.slot = int(slot)
        self.origin = origin
        self.num_slots = int(num_slots)
        self.category = category
        self.padded = bool(padded)

    def validate(self, max_depth: float) -> None:
        """Check the box lies in the perception field."""
        check(self.origin in ORIGINS, "origin is base or foreground")
        check(
            0.0 <= self.box.depth <= max_depth,
            "d in [0, D]",
            f"d={self.box.depth}, D={max_depth}",
        )
        check(
            self.box.w > 0 and self.box.l > 0 and self.box.h > 0,
            "w, l, h > 0",
        )
        check(0 <= self.slot < self.num_slots, "0 <= slot < slots on ray")

    def to_dict(self) -> dict:
        """JSON-lines record of the query."""
        record = {k: float(v) for k, v in self.box._asdict().items()}
        record.update(
            {
                "ray_id": self.ray_id,
                "slot": self.slot,
                "origin": self.origin,
                "num_slots": self.num_slots,
                "feature": [float(v) for v in self.feature],
            }
        )
        if self.origin == FOREGROUND:
            record["category"] = self.category
            record["padded"] = self.padded
        return record

    @classmethod
    def from_dict(cls, record: dict) -> "Query":
        """Build a query from its JSON-lines record."""
        try:
            box = QueryBox(*(float(record[k]) for k in QueryBox._fields))
            query = cls(
                record["feature"],
                box,
                record["ray_id"],
                record["slot"],
                record["origin"],
                record["num_slots"],
                record.get("category"),
                record.get("padded", False),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedInputError(f"bad query record: {e}")
        if query.origin not in ORIGINS:
            raise MalformedInputError(f"unknown origin {query.origin!r}")
        return query


class RayLayout(NamedTuple):
    """Rays over [0, fov) and depth slots over [0, max_depth]."""

    num_rays: int = 135
    num_depth_slots: int = 6
    fov: float = geometry.TWO_PI
    max_depth: float = 65.0

    def validate(self) -> None:
        """Check the layout invariants."""
        check(self.num_rays >= 1, "N_r >= 1", str(self.num_rays))
        check(
            self.num_depth_slots >= 1, "N_d >= 1", str(self.num_depth_slots)
        )
        check(
            0.0 < self.fov <= geometry.TWO_PI, "0 < R <= 2pi", str(self.fov)
        )
        check(self.max_depth > 0.0, "D > 0", str(self.max_depth))

    def ray_thetas(self) -> List[float]:
        """Azimuth of every ray, at segment centers."""
        return [
            (i + 0.5) * self.fov / self.num_rays for i in range(self.num_rays)
        ]

    def slot_depths(self) -> List[float]:
        """Depth of every slot along a ray."""
        return slot_depths(self.num_depth_slots, self.max_depth)


class RaySegment(NamedTuple):
    """Depth interval of a ray owned by one query."""

    theta: float
    d_lo: float
    d_hi: float


class Box2D(NamedTuple):
    """Axis-aligned 2D detection in one view."""

    view: int
    x1: float
    y1: float
    x2: float
    y2: float
    category: str
    score: float = 1.0

    def validate(self, width: float, height: float) -> None:
        """Check the box is well formed and inside a width x height image."""
        check(self.x1 < self.x2, "x1 < x2", f"{self.x1}, {self.x2}")
        check(self.y1 < self.y2, "y1 < y2", f"{self.y1}, {self.y2}")
        check(
            0.0 <= self.x1 and self.x2 <= width,
            "box inside image width",
            f"[{self.x1}, {self.x2}] vs {width}",
        )
        check(
            0.0 <= self.y1 and self.y2 <= height,
            "box inside image height",
            f"[{self.y1}, {self.y2}] vs {height}",
        )
        check(0.0 <= self.score <= 1.0, "score in [0, 1]", str(self.score))

    def to_dict(self) -> dict:
        """Scene-file record of the box."""
        return self._asdict()

    @classmethod
    def from_dict(cls, record: dict) -> "Box2D":
        """Build a box from its scene-file record."""
        return cls(
            int(record["view"]),
            float(record["x1"]),
            float(record["y1"]),
            float(record["x2"]),
            float(record["y2"]),
            str(record["category"]),
            float(record.get("score", 1.0)),
        )


DEFAULT_CATEGORY_RAYS = {"car": 180, "pedestrian": 360}


class CategoryRaySpec:
    """Foreground candidate ray count N_c per category."""

    def __init__(self, rays: Optional[Mapping[str, int]] = None) -> None:
        """Run constructor."""
        self.rays = dict(DEFAULT_CATEGORY_RAYS if rays is None else rays)
        self.validate()

    def validate(self) -> None:
        """Check every category gets at least one ray."""
        check(len(self.rays) >= 1, "at least one category")
        for category, count in self.rays.items():
            check(count >= 1, "N_c >= 1", f"{category}: {count}")

    @property
    def categories(self) -> List[str]:
        """Categories in canonical (sorted) order."""
        return sorted(self.rays)

    def spacing(self, category: str, fov: float) -> float:
        """Angular spacing of the category's candidate rays."""
        return fov / self.rays[category]

    def candidates(self, category: str, fov: float) -> List[float]:
        """Candidate ray azimuths of a category."""
        count = self.rays[category]
        return [(k + 0.5) * fov / count for k in range(count)]


class ForegroundRay(NamedTuple):
    """A foreground candidate ray of a category."""

    theta: float
    category: str
    index: int
    padded: bool = False


def slot_depths(num_slots: int, max_depth: float) -> List[float]:
    """Slot depths (j + 0.5) * D / n at depth-segment centers."""
    return [(j + 0.5) * max_depth / num_slots for j in range(num_slots)]


def zero_feature(embed_dims: int) -> np.ndarray:
    """Zero-initialized query feature."""
    check(embed_dims >= 1, "embed_dims >= 1", str(embed_dims))
    return np.zeros(embed_dims)


def init_base_queries(
    layout: RayLayout,
    template: BoxTemplate = BoxTemplate(),
    embed_dims: int = DEFAULT_EMBED_DIMS,
) -> List[Query]:
    """N_r * N_d base queries, ray-major."""
    layout.validate()
    template.validate()
    depths = layout.slot_depths()
    queries = []
    for ray_id, theta in enumerate(layout.ray_thetas()):
        for slot, depth in enumerate(depths):
            box = QueryBox(theta, depth, *template)
            queries.append(
                Query(
                    zero_feature(embed_dims),
                    box,
                    ray_id,
                    slot,
                    BASE,
                    layout.num_depth_slots,
                )
            )
    logger.debug(
        "Initialized %d base queries (%d rays x %d slots)",
        len(queries),
        layout.num_rays,
        layout.num_depth_slots,
    )
    return queries


def segments_along_ray(
    theta: float, num_slots: int, max_depth: float
) -> List[RaySegment]:
    """Segments of every slot of a ray; they tile [0, max_depth]."""
    depths = slot_depths(num_slots, max_depth)
    edges = [0.0]
    edges.extend(
        0.5 * (depths[j] + depths[j + 1]) for j in range(num_slots - 1)
    )
    edges.append(float(max_depth))
    return [
        RaySegment(theta, edges[j], edges[j + 1]) for j in range(num_slots)
    ]


def ray_segments(layout: RayLayout) -> List[RaySegment]:
    """One segment per base query slot, in base query order."""
    layout.validate()
    segments = []
    for theta in layout.ray_thetas():
        segments.extend(
            segments_along_ray(theta, layout.num_depth_slots, layout.max_depth)
        )
    return segments


def query_segment(query: Query, max_depth: float) -> RaySegment:
    """Segment owned by a query, from its slot on its ray."""
    return segments_along_ray(query.box.theta, query.num_slots, max_depth)[
        query.slot
    ]


def expand_boxes_full_height(
    boxes: Sequence[Box2D], image_heights: Union[float, Sequence[float]]
) -> List[Box2D]:
    """Stretch every box to the full height of its view's image.

    :param image_heights: one height for all views, or one per view index
    """
    expanded = []
    for box in boxes:
        if isinstance(image_heights, (int, float)):
            height = float(image_heights)
        else:
            height = float(image_heights[box.view])
        expanded.append(box._replace(y1=0.0, y2=height))
    return expanded


def _hit_categories(
    point: np.ndarray,
    cams: Sequence[geometry.Camera],
    boxes_by_view: Dict[int, List[Box2D]],
) -> Dict[str, bool]:
    hits: Dict[str, bool] = {}
    for view, cam in enumerate(cams):
        boxes = boxes_by_view.get(view)
        if not boxes:
            continue
        uv, valid, _ = geometry.project_points(cam, point[None, :])
        if not valid[0]:
            continue
        u, v = uv[0]
        for box in boxes:
            if box.x1 <= u <= box.x2 and box.y1 <= v <= box.y2:
                hits[box.category] = True
    return hits


def foreground_candidates(
    spec: CategoryRaySpec,
    boxes2d: Sequence[Box2D],
    cams: Sequence[geometry.Camera],
    max_depth: float,
    fov: float = geometry.TWO_PI,
    z: float = BoxTemplate().z,
) -> List[ForegroundRay]:
    """Every candidate ray whose midpoint hits a box of its category.

    Rays come back in ascending (category, theta) order.
    """
    boxes_by_view: Dict[int, List[Box2D]] = {}
    for box in boxes2d:
        check(0 <= box.view < len(cams), "box view has a camera", str(box))
        boxes_by_view.setdefault(box.view, []).append(box)
    selected = []
    if not boxes_by_view:
        return selected
    for category in spec.categories:
        if not any(b.category == category for b in boxes2d):
            continue
        for index, theta in enumerate(spec.candidates(category, fov)):
            mid = geometry.polar_to_cartesian(
                geometry.PolarPoint(theta, 0.5 * max_depth, z)
            )
            hits = _hit_categories(np.asarray(mid), cams, boxes_by_view)
            if hits.get(category):
                selected.append(ForegroundRay(theta, category, index))
    return selected


def select_foreground_rays(
    spec: CategoryRaySpec,
    boxes2d: Sequence[Box2D],
    cams: Sequence[geometry.Camera],
    max_depth: float,
    budget: Optional[int],
    fov: float = geometry.TWO_PI,
    z: float = BoxTemplate().z,
) -> List[ForegroundRay]:
    """Foreground rays, truncated to `budget` (None means unlimited).

    `boxes2d` are expected to be expanded to full height already.
    """
    check(budget is None or budget >= 0, "budget >= 0", str(budget))
    rays = foreground_candidates(spec, boxes2d, cams, max_depth, fov, z)
    if budget is not None and len(rays) > budget:
        logger.debug(
            "Truncating %d foreground rays to a budget of %d",
            len(rays),
            budget,
        )
        rays = rays[:budget]
    return rays


def pad_foreground_rays(
    rays: Sequence[ForegroundRay],
    spec: CategoryRaySpec,
    budget: int,
    fov: float = geometry.TWO_PI,
) -> List[ForegroundRay]:
    """Fill a short selection up to `budget` with unselected candidates.

    Fillers are spread evenly over the unselected candidates in
    (category, theta) order. The result is in (category, theta) order.
    """
    check(budget >= 0, "budget >= 0", str(budget))
    need = budget - len(rays)
    if need <= 0:
        return list(rays)
    taken = {(r.category, r.index) for r in rays}
    unselected = [
        ForegroundRay(theta, category, index, padded=True)
        for category in spec.categories
        for index, theta in enumerate(spec.candidates(category, fov))
        if (category, index) not in taken
    ]
    total = len(unselected)
    if total <= need:
        fillers = unselected
    else:
        fillers = [
            unselected[int(math.floor((k + 0.5) * total / need))]
            for k in range(need)
        ]
    logger.debug("Padding foreground selection with %d rays", len(fillers))
    padded = list(rays) + fillers
    order = {c: i for i, c in enumerate(spec.categories)}
    padded.sort(key=lambda r: (order[r.category], r.theta))
    return padded


def init_foreground_queries(
    rays: Sequence[ForegroundRay],
    slots_per_ray: int,
    max_depth: float,
    template: BoxTemplate = BoxTemplate(),
    first_ray_id: int = 0,
    embed_dims: int = DEFAULT_EMBED_DIMS,
) -> List[Query]:
    """N'_d foreground queries on every ray, ray ids from `first_ray_id`."""
    check(slots_per_ray >= 1, "N'_d >= 1", str(slots_per_ray))
    check(max_depth > 0.0, "D > 0", str(max_depth))
    template.validate()
    depths = slot_depths(slots_per_ray, max_depth)
    queries = []
    for offset, ray in enumerate(rays):
        for slot, depth in enumerate(depths):
            box = QueryBox(ray.theta, depth, *template)
            queries.append(
                Query(
                    zero_feature(embed_dims),
                    box,
                    first_ray_id + offset,
                    slot,
                    FOREGROUND,
                    slots_per_ray,
                    ray.category,
                    ray.padded,
                )
            )
    return queries


class GridLayout(NamedTuple):
    """Cartesian query grid clipped to the perception circle."""

    num_queries: int
    max_depth: float


def grid_query_centers(layout: GridLayout) -> np.ndarray:
    """Ego (x, y) of an area-matched Cartesian query grid.

    Spacing starts at sqrt(pi D^2 / N); it shrinks by 1% until at least N
    cell centers fall inside the circle, and the N nearest to the origin
    are kept (ties broken by azimuth).
    """
    check(layout.num_queries >= 1, "grid budget >= 1")
    check(layout.max_depth > 0.0, "D > 0")
    radius = layout.max_depth
    spacing = math.sqrt(math.pi * radius ** 2 / layout.num_queries)
    while True:
        half = int(math.ceil(radius / spacing))
        coords = (np.arange(-half, half) + 0.5) * spacing
        x, y = np.meshgrid(coords, coords)
        xy = np.stack([x.ravel(), y.ravel()], axis=-1)
        dist = np.hypot(xy[:, 0], xy[:, 1])
        inside = dist <= radius
        if inside.sum() >= layout.num_queries:
            break
        spacing *= 0.99
    xy = xy[inside]
    dist = dist[inside]
    azimuth = np.mod(np.arctan2(xy[:, 1], xy[:, 0]), geometry.TWO_PI)
    order = np.lexsort((azimuth, dist))
    return xy[order[: layout.num_queries]]


def grid_queries(
    layout: GridLayout,
    template: BoxTemplate = BoxTemplate(),
    embed_dims: int = DEFAULT_EMBED_DIMS,
) -> List[Query]:
    """Base-origin queries on the Cartesian grid, one per ray."""
    queries = []
    for ray_id, (x, y) in enumerate(grid_query_centers(layout)):
        polar = geometry.cartesian_to_polar(
            geometry.CartesianPoint(float(x), float(y), template.z)
        )
        box = QueryBox(polar.theta, polar.depth, *template)
        queries.append(
            Query(zero_feature(embed_dims), box, ray_id, 0, BASE, 1)
        )
    return queries
