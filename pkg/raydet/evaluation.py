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

"""Desk-scale detection metrics and pipeline experiments.

Detections are matched greedily by descending score to the nearest free
ground truth of their category (2D center distance, strict threshold). AP
integrates precision over 101 recall points, ignoring recall and precision
below 0.1; ATE and AOE average the errors of matches at 2 m.
"""

import logging
import math
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.spatial.distance

from raydet import geometry
from raydet.guard import InvariantViolation, MalformedInputError, check
from raydet.lift_splat import BevFeatureMap
from raydet.matching import GroundTruth, Prediction
from raydet.query_init import (
    CategoryRaySpec,
    ForegroundRay,
    GridLayout,
    Query,
    RayLayout,
    RaySegment,
    grid_query_centers,
    init_base_queries,
)

logger = logging.getLogger(__name__)

AP_THRESHOLDS = (0.5, 1.0, 2.0, 4.0)
TP_THRESHOLD = 2.0
MIN_RECALL = 0.1
MIN_PRECISION = 0.1
RECALL_POINTS = 101


class Detection(NamedTuple):
    """A scored ego-frame detection."""

    center: Tuple[float, float, float]
    size: Tuple[float, float, float]
    yaw: float
    velocity: Tuple[float, float]
    category: str
    score: float

    def to_dict(self) -> dict:
        """Record of the detection."""
        return {
            "center": [float(v) for v in self.center],
            "size": [float(v) for v in self.size],
            "yaw": float(self.yaw),
            "velocity": [float(v) for v in self.velocity],
            "category": self.category,
            "score": float(self.score),
        }

    @classmethod
    def from_dict(cls, record: dict) -> "Detection":
        """Build a detection from its record."""
        try:
            return cls(
                tuple(float(v) for v in record["center"]),
                tuple(float(v) for v in record["size"]),
                float(record["yaw"]),
                tuple(float(v) for v in record["velocity"]),
                str(record["category"]),
                float(record["score"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedInputError(f"bad detection record: {e}")


def detections_from_predictions(
    preds: Sequence[Prediction],
) -> List[Detection]:
    """Cartesian detections labelled with each prediction's top category."""
    detections = []
    for pred in preds:
        box = pred.box
        center = pred.box.center()
        detections.append(
            Detection(
                tuple(center),
                (box.w, box.l, box.h),
                box.yaw,
                (box.vx, box.vy),
                pred.category,
                pred.score,
            )
        )
    return detections


def detection_from_ground_truth(gt: GroundTruth) -> Detection:
    """A perfect detection of `gt`."""
    return Detection(gt.center, gt.size, gt.yaw, gt.velocity, gt.category, 1.0)


class DetectionMetrics(NamedTuple):
    """ATE/AOE at the TP threshold and AP per center-distance threshold."""

    ate: Optional[float]
    aoe: Optional[float]
    ap: Dict[float, float]
    mean_ap: float
    num_matches: int
    foreground_recall: Optional[float] = None

    def to_dict(self) -> dict:
        """metrics.json document; undefined errors are omitted."""
        record = {
            "ap": {f"{th:g}": v for th, v in sorted(self.ap.items())},
            "mean_ap": self.mean_ap,
            "num_matches": self.num_matches,
        }
        if self.ate is not None:
            record["ate"] = self.ate
        if self.aoe is not None:
            record["aoe"] = self.aoe
        if self.foreground_recall is not None:
            record["foreground_recall"] = self.foreground_recall
        return record


def center_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """2D (BEV) distance between two centers."""
    return math.hypot(a[0] - b[0], a[1] - b[1])


def yaw_difference(a: float, b: float) -> float:
    """Smallest absolute yaw difference, in [0, pi]."""
    diff = (a - b + math.pi) % geometry.TWO_PI - math.pi
    return abs(diff)


def _greedy_match(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    threshold: float,
) -> List[Optional[int]]:
    """Matched ground-truth index per detection (score order), or None."""
    taken = set()
    matches = []
    for det in dets:
        best, best_dist = None, math.inf
        for j, gt in enumerate(gts):
            if j in taken:
                continue
            dist = center_distance(det.center, gt.center)
            if dist < best_dist:
                best, best_dist = j, dist
        if best is not None and best_dist < threshold:
            taken.add(best)
            matches.append(best)
        else:
            matches.append(None)
    return matches


def average_precision(
    matches: Sequence[Optional[int]],
    num_gt: int,
    min_recall: float = MIN_RECALL,
    min_precision: float = MIN_PRECISION,
) -> float:
    """AP of score-ordered match flags against `num_gt` positives."""
    if num_gt == 0 or not any(m is not None for m in matches):
        return 0.0
    tp = np.cumsum([1.0 if m is not None else 0.0 for m in matches])
    fp = np.cumsum([0.0 if m is not None else 1.0 for m in matches])
    precision = tp / (tp + fp)
    recall = tp / num_gt
    recall_points = np.linspace(0.0, 1.0, RECALL_POINTS)
    interp = np.interp(recall_points, recall, precision, right=0.0)
    interp = interp[round(100 * min_recall) + 1:] - min_precision
    interp[interp < 0.0] = 0.0
    return min(1.0, float(np.mean(interp)) / (1.0 - min_precision))


def evaluate(
    detections: Sequence[Detection],
    objects: Sequence[GroundTruth],
    thresholds: Sequence[float] = AP_THRESHOLDS,
    tp_threshold: float = TP_THRESHOLD,
    foreground_recall: Optional[float] = None,
) -> DetectionMetrics:
    """Greedy center-distance metrics per category.

    AP is averaged over the categories that have ground truth.
    """
    check(all(th > 0 for th in thresholds), "distance thresholds > 0")
    categories = sorted({gt.category for gt in objects})
    ap = {float(th): 0.0 for th in thresholds}
    trans_err: List[float] = []
    orient_err: List[float] = []
    for category in categories:
        gts = [gt for gt in objects if gt.category == category]
        dets = sorted(
            (d for d in detections if d.category == category),
            key=lambda d: -d.score,
        )
        for th in thresholds:
            matches = _greedy_match(dets, gts, th)
            ap[float(th)] += average_precision(matches, len(gts))
        for det, j in zip(dets, _greedy_match(dets, gts, tp_threshold)):
            if j is None:
                continue
            trans_err.append(center_distance(det.center, gts[j].center))
            orient_err.append(yaw_difference(det.yaw, gts[j].yaw))
    if categories:
        ap = {th: v / len(categories) for th, v in ap.items()}
    mean_ap = float(np.mean(list(ap.values()))) if ap else 0.0
    metrics = DetectionMetrics(
        float(np.mean(trans_err)) if trans_err else None,
        float(np.mean(orient_err)) if orient_err else None,
        ap,
        mean_ap,
        len(trans_err),
        foreground_recall,
    )
    logger.debug("Evaluated %d detections: %s", len(detections), metrics)
    return metrics


def foreground_coverage(
    rays: Sequence[ForegroundRay],
    objects: Sequence[GroundTruth],
    spec: CategoryRaySpec,
    fov: float = geometry.TWO_PI,
) -> float:
    """Fraction of objects with a same-category ray within fov / N_c."""
    if not objects:
        return 1.0
    covered = 0
    for gt in objects:
        if gt.category not in spec.rays:
            continue
        tolerance = spec.spacing(gt.category, fov)
        theta = gt.theta
        for ray in rays:
            if ray.category != gt.category:
                continue
            gap = abs(ray.theta - theta) % geometry.TWO_PI
            if min(gap, geometry.TWO_PI - gap) <= tolerance:
                covered += 1
                break
    return covered / len(objects)


class OccupancyContrast(NamedTuple):
    """Mean BEV weight near object centers against the background."""

    near_mean: float
    background_mean: float

    @property
    def ratio(self) -> float:
        """near_mean / background_mean (inf on an empty background)."""
        if self.background_mean == 0.0:
            return math.inf if self.near_mean > 0.0 else 0.0
        return self.near_mean / self.background_mean


def occupancy_contrast(
    weights: BevFeatureMap,
    objects: Sequence[GroundTruth],
    radius: float = 2.0,
) -> OccupancyContrast:
    """Compare cells within `radius` of any object center to the rest."""
    check(len(objects) > 0, "at least one object")
    mass = weights.data.sum(axis=-1).ravel()
    centers = weights.spec.cell_centers().reshape(-1, 2)
    gt_xy = np.asarray([gt.center[:2] for gt in objects])
    dist = scipy.spatial.distance.cdist(centers, gt_xy).min(axis=1)
    near = dist <= radius
    check(bool(near.any()), "a cell lies near an object")
    background = mass[~near]
    return OccupancyContrast(
        float(mass[near].mean()),
        float(background.mean()) if len(background) else 0.0,
    )


def segment_distance(segment: RaySegment, point: Sequence[float]) -> float:
    """BEV distance from a point to a ray segment."""
    c, s = math.cos(segment.theta), math.sin(segment.theta)
    along = point[0] * c + point[1] * s
    along = min(max(along, segment.d_lo), segment.d_hi)
    return math.hypot(point[0] - along * c, point[1] - along * s)


class IdentityScore(NamedTuple):
    """Queries near a car and how many sampled that car's id channel."""

    hits: int
    total: int

    @property
    def accuracy(self) -> float:
        """hits / total (1.0 when no query qualifies)."""
        return self.hits / self.total if self.total else 1.0


def identity_sampling(
    segments: Sequence[RaySegment],
    features: np.ndarray,
    objects: Sequence[GroundTruth],
    category: str = "car",
    radius: Optional[float] = None,
) -> IdentityScore:
    """Score argmax id channels of queries passing near an object.

    :param features: (N, C) sampled id features, channel = object index
    :param radius: defaults to half the object's length
    """
    check(len(segments) == len(features), "one feature per segment")
    hits = total = 0
    for segment, feature in zip(segments, features):
        best, best_dist = None, math.inf
        for index, gt in enumerate(objects):
            if gt.category != category:
                continue
            limit = radius if radius is not None else gt.size[1] / 2.0
            dist = segment_distance(segment, gt.center)
            if dist <= limit and dist < best_dist:
                best, best_dist = index, dist
        if best is None:
            continue
        total += 1
        if np.any(feature != 0.0) and int(np.argmax(feature)) == best:
            hits += 1
    return IdentityScore(hits, total)


class DispersionReport(NamedTuple):
    """Same-view close-pair fractions of radial and grid layouts."""

    budget: int
    threshold: float
    radial_pairs: int
    radial_close: int
    grid_pairs: int
    grid_close: int
    radial_views: Tuple[Tuple[int, int], ...] = ()
    grid_views: Tuple[Tuple[int, int], ...] = ()

    @property
    def radial_fraction(self) -> float:
        """Close fraction of radial pairs."""
        if not self.radial_pairs:
            return 0.0
        return self.radial_close / self.radial_pairs

    @property
    def grid_fraction(self) -> float:
        """Close fraction of grid pairs."""
        if not self.grid_pairs:
            return 0.0
        return self.grid_close / self.grid_pairs

    @property
    def radial_view_fractions(self) -> List[float]:
        """Close fraction of radial pairs in each camera."""
        return [close / pairs if pairs else 0.0 for pairs, close in
                self.radial_views]

    @property
    def grid_view_fractions(self) -> List[float]:
        """Close fraction of grid pairs in each camera."""
        return [close / pairs if pairs else 0.0 for pairs, close in
                self.grid_views]

    @property
    def ratio(self) -> Optional[float]:
        """radial_fraction / grid_fraction, None when the grid has none."""
        if self.grid_fraction == 0.0:
            return None
        return self.radial_fraction / self.grid_fraction

    def to_dict(self) -> dict:
        """dispersion.json document."""
        record = dict(self._asdict())
        record.update(
            {
                "radial_fraction": self.radial_fraction,
                "grid_fraction": self.grid_fraction,
                "radial_view_fractions": self.radial_view_fractions,
                "grid_view_fractions": self.grid_view_fractions,
            }
        )
        if self.ratio is not None:
            record["ratio"] = self.ratio
        return record


def view_close_pairs(
    cams: Sequence[geometry.Camera], points: np.ndarray, threshold: float
) -> List[Tuple[int, int]]:
    """(pairs, pairs within threshold px) of every view."""
    counts = []
    for cam in cams:
        uv, valid, _ = geometry.project_points(cam, points)
        visible = uv[valid]
        if len(visible) < 2:
            counts.append((0, 0))
            continue
        dist = scipy.spatial.distance.pdist(visible)
        counts.append((len(dist), int(np.count_nonzero(dist <= threshold))))
    return counts


def close_pairs(
    cams: Sequence[geometry.Camera], points: np.ndarray, threshold: float
) -> Tuple[int, int]:
    """(pairs, pairs within threshold px) over views, pooled."""
    counts = view_close_pairs(cams, points, threshold)
    return sum(p for p, _ in counts), sum(c for _, c in counts)


def query_centers(queries: Sequence[Query]) -> np.ndarray:
    """(N, 3) ego centers of query boxes."""
    return np.asarray([q.box.center() for q in queries], dtype=np.float64)


def dispersion_experiment(
    cams: Sequence[geometry.Camera],
    radial: RayLayout,
    grid: GridLayout,
    threshold: float = 10.0,
    z: float = 0.85,
) -> DispersionReport:
    """Project both layouts into every view and count close pairs."""
    budget = radial.num_rays * radial.num_depth_slots
    if budget != grid.num_queries:
        raise InvariantViolation(
            "equal query budgets", f"radial {budget}, grid {grid.num_queries}"
        )
    check(threshold >= 0.0, "proximity threshold >= 0")
    radial_pts = query_centers(init_base_queries(radial, embed_dims=1))
    radial_pts[:, 2] = z
    grid_xy = grid_query_centers(grid)
    grid_pts = np.concatenate(
        [grid_xy, np.full((len(grid_xy), 1), z)], axis=-1
    )
    radial_views = view_close_pairs(cams, radial_pts, threshold)
    grid_views = view_close_pairs(cams, grid_pts, threshold)
    report = DispersionReport(
        budget,
        float(threshold),
        sum(p for p, _ in radial_views),
        sum(c for _, c in radial_views),
        sum(p for p, _ in grid_views),
        sum(c for _, c in grid_views),
        tuple(radial_views),
        tuple(grid_views),
    )
    logger.debug(
        "Dispersion: radial %.4f vs grid %.4f",
        report.radial_fraction,
        report.grid_fraction,
    )
    return report
