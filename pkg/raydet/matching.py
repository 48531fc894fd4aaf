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

"""Prediction to ground-truth assignment.

The matching cost of a pair is ``w_c * classification + w_b * box +
w_r * radian``; the radian term is the circular distance between the
normalized azimuths, which keeps a prediction on the ray it came from.
"""

import logging
import math
from typing import Dict, List, NamedTuple, Sequence, Tuple

import numpy as np
import scipy.optimize

from raydet import geometry
from raydet.guard import InvariantViolation, MalformedInputError, check
from raydet.query_init import QueryBox

logger = logging.getLogger(__name__)

FOCAL_ALPHA = 0.25
FOCAL_GAMMA = 2.0
PROB_EPS = 1e-12
TIE_TOL = 1e-9

RADIAN_NORM_FULL = "full"
RADIAN_NORM_FOV = "fov"


class Prediction:
    """A predicted box with per-category probabilities."""

    def __init__(self, box: QueryBox, probs: Dict[str, float]) -> None:
        """Run constructor."""
        self.box = box
        self.probs = {str(k): float(v) for k, v in probs.items()}
        self.validate()

    def validate(self) -> None:
        """Check the box dimensions and the probabilities."""
        check(
            self.box.w > 0 and self.box.l > 0 and self.box.h > 0,
            "w, l, h > 0",
            f"{self.box.w}, {self.box.l}, {self.box.h}",
        )
        check(len(self.probs) >= 1, "at least one category probability")
        values = list(self.probs.values())
        check(
            all(0.0 <= p <= 1.0 for p in values), "probabilities in [0, 1]"
        )
        check(sum(values) <= 1.0 + 1e-6, "probabilities sum <= 1")

    def normalized_theta(self, fov: float = geometry.TWO_PI) -> float:
        """Azimuth normalized to [0, 1)."""
        return normalize_theta(self.box.theta, fov)

    @property
    def category(self) -> str:
        """Most probable category (first in sorted order on ties)."""
        return max(sorted(self.probs), key=lambda c: self.probs[c])

    @property
    def score(self) -> float:
        """Probability of the most probable category."""
        return self.probs[self.category]

    def to_dict(self) -> dict:
        """JSON-lines record of the prediction."""
        record = {k: float(v) for k, v in self.box._asdict().items()}
        record["probs"] = dict(self.probs)
        return record

    @classmethod
    def from_dict(cls, record: dict) -> "Prediction":
        """Build a prediction from its JSON-lines record."""
        try:
            box = QueryBox(*(float(record[k]) for k in QueryBox._fields))
            probs = record["probs"]
            if not isinstance(probs, dict):
                raise TypeError("probs must be an object")
            return cls(box, probs)
        except (KeyError, TypeError, ValueError, InvariantViolation) as e:
            raise MalformedInputError(f"bad prediction record: {e}")


class GroundTruth(NamedTuple):
    """A ground-truth object in the ego frame."""

    center: Tuple[float, float, float]
    size: Tuple[float, float, float]
    yaw: float
    velocity: Tuple[float, float]
    category: str

    def validate(self) -> None:
        """Check the dimensions."""
        check(all(v > 0 for v in self.size), "dims > 0", str(self.size))

    @property
    def theta(self) -> float:
        """Azimuth of the center."""
        return geometry.cartesian_to_polar(
            geometry.CartesianPoint(*self.center)
        ).theta

    def normalized_theta(self, fov: float = geometry.TWO_PI) -> float:
        """Azimuth of the center normalized to [0, 1)."""
        return normalize_theta(self.theta, fov)

    def to_query_box(self) -> QueryBox:
        """The object as a polar box."""
        polar = geometry.cartesian_to_polar(
            geometry.CartesianPoint(*self.center)
        )
        w, l, h = self.size  # noqa: E741
        return QueryBox(
            polar.theta, polar.depth, polar.z, w, l, h, self.yaw,
            self.velocity[0], self.velocity[1],
        )

    def to_dict(self) -> dict:
        """Scene-file record of the object."""
        return {
            "center": [float(v) for v in self.center],
            "size": [float(v) for v in self.size],
            "yaw": float(self.yaw),
            "velocity": [float(v) for v in self.velocity],
            "category": self.category,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "GroundTruth":
        """Build an object from its scene-file record."""
        try:
            gt = cls(
                tuple(float(v) for v in record["center"]),
                tuple(float(v) for v in record["size"]),
                float(record["yaw"]),
                tuple(float(v) for v in record["velocity"]),
                str(record["category"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedInputError(f"bad ground-truth record: {e}")
        if len(gt.center) != 3 or len(gt.size) != 3 or len(gt.velocity) != 2:
            raise MalformedInputError("bad ground-truth vector lengths")
        try:
            gt.validate()
        except InvariantViolation as e:
            raise MalformedInputError(f"bad ground-truth record: {e}")
        return gt


class CostWeights(NamedTuple):
    """Weights of the classification, box and radian costs."""

    w_c: float = 1.0
    w_b: float = 0.25
    w_r: float = 1.0

    def validate(self) -> None:
        """Check the weights are non-negative and not all zero."""
        check(min(self) >= 0.0, "cost weights non-negative", str(self))
        check(max(self) > 0.0, "cost weights not all zero", str(self))


class BoxCostNorm(NamedTuple):
    """Normalizers of the box cost terms."""

    max_depth: float = 65.0
    z_range: float = 8.0


class Assignment(NamedTuple):
    """One-to-one prediction/ground-truth pairs and the leftovers."""

    pairs: List[Tuple[int, int]]
    unmatched_pred: List[int]
    unmatched_gt: List[int]
    total_cost: float

    def to_dict(self) -> dict:
        """Assignment file record."""
        return {
            "pairs": [[int(i), int(j)] for i, j in self.pairs],
            "unmatched_pred": [int(i) for i in self.unmatched_pred],
            "unmatched_gt": [int(j) for j in self.unmatched_gt],
            "total_cost": float(self.total_cost),
        }


def normalize_theta(theta: float, fov: float = geometry.TWO_PI) -> float:
    """theta / fov wrapped to [0, 1)."""
    value = (theta / fov) % 1.0
    return 0.0 if value >= 1.0 else value


def _check_unit(value: float, what: str) -> None:
    if not (0.0 <= value < 1.0):
        raise InvariantViolation(f"{what} in [0, 1)", repr(value))


def radian_cost(theta: float, theta_gt: float) -> float:
    """Circular distance |(|a - b| + 0.5) mod 1 - 0.5| of normalized angles."""
    _check_unit(theta, "normalized radian")
    _check_unit(theta_gt, "normalized radian")
    return abs((abs(theta - theta_gt) + 0.5) % 1.0 - 0.5)


def circular_distance(theta: float, theta_gt: float) -> float:
    """min(|a - b|, 1 - |a - b|) of normalized angles."""
    _check_unit(theta, "normalized radian")
    _check_unit(theta_gt, "normalized radian")
    delta = abs(theta - theta_gt)
    return min(delta, 1.0 - delta)


def classification_cost(
    probs: Dict[str, float],
    target: str,
    alpha: float = FOCAL_ALPHA,
    gamma: float = FOCAL_GAMMA,
) -> float:
    """Focal cost -alpha (1 - p)^gamma log p of the target probability."""
    p = float(probs.get(target, 0.0))
    return -alpha * (1.0 - p) ** gamma * math.log(max(p, PROB_EPS))


def _yaw_term(a: float, b: float) -> float:
    diff = (a - b + math.pi) % geometry.TWO_PI - math.pi
    return abs(diff) / math.pi


def box_cost(
    pred: QueryBox, gt: QueryBox, norm: BoxCostNorm = BoxCostNorm()
) -> float:
    """Mean L1 over normalized depth, z, log-dims and yaw.

    The azimuth is left to the radian cost.
    """
    check(
        norm.max_depth > 0.0 and norm.z_range > 0.0,
        "box cost bounds positive",
        str(norm),
    )
    terms = (
        abs(pred.depth - gt.depth) / norm.max_depth,
        abs(pred.z - gt.z) / norm.z_range,
        abs(math.log(pred.w) - math.log(gt.w)),
        abs(math.log(pred.l) - math.log(gt.l)),
        abs(math.log(pred.h) - math.log(gt.h)),
        _yaw_term(pred.yaw, gt.yaw),
    )
    return sum(terms) / len(terms)


def cost_matrix(
    preds: Sequence[Prediction],
    gts: Sequence[GroundTruth],
    weights: CostWeights = CostWeights(),
    norm: BoxCostNorm = BoxCostNorm(),
    radian_norm: str = RADIAN_NORM_FULL,
    fov: float = geometry.TWO_PI,
) -> np.ndarray:
    """(len(preds), len(gts)) matrix of weighted matching costs."""
    check(len(preds) > 0 or len(gts) > 0, "nonempty preds or gts")
    weights.validate()
    check(
        radian_norm in (RADIAN_NORM_FULL, RADIAN_NORM_FOV),
        "radian normalization is full or fov",
        radian_norm,
    )
    span = geometry.TWO_PI if radian_norm == RADIAN_NORM_FULL else fov
    matrix = np.zeros((len(preds), len(gts)))
    gt_boxes = [gt.to_query_box() for gt in gts]
    gt_thetas = [gt.normalized_theta(span) for gt in gts]
    for i, pred in enumerate(preds):
        theta = pred.normalized_theta(span)
        for j, gt in enumerate(gts):
            matrix[i, j] = (
                weights.w_c * classification_cost(pred.probs, gt.category)
                + weights.w_b * box_cost(pred.box, gt_boxes[j], norm)
                + weights.w_r * radian_cost(theta, gt_thetas[j])
            )
    check(bool(np.all(np.isfinite(matrix))), "cost matrix finite")
    return matrix


def _optimal_total(matrix: np.ndarray) -> float:
    if matrix.shape[0] == 0 or matrix.shape[1] == 0:
        return 0.0
    rows, cols = scipy.optimize.linear_sum_assignment(matrix)
    return float(matrix[rows, cols].sum())


def _same(a: float, b: float) -> bool:
    return abs(a - b) <= TIE_TOL * max(1.0, abs(a), abs(b))


def hungarian_assign(matrix: np.ndarray) -> Assignment:
    """Minimum-cost one-to-one assignment of size min(rows, cols).

    Among equal-cost optima the lexicographically smallest pair list wins:
    earlier rows take the smallest column that still allows an optimum.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    check(matrix.ndim == 2, "cost matrix is 2-D", str(matrix.shape))
    num_rows, num_cols = matrix.shape
    if num_rows == 0 or num_cols == 0:
        return Assignment(
            [], list(range(num_rows)), list(range(num_cols)), 0.0
        )
    check(bool(np.all(np.isfinite(matrix))), "cost matrix finite")
    remaining = _optimal_total(matrix)
    free_cols = list(range(num_cols))
    pairs: List[Tuple[int, int]] = []
    for row in range(num_rows):
        rest_rows = list(range(row + 1, num_rows))
        need = min(num_rows, num_cols) - len(pairs)
        if need == 0:
            break
        chosen = None
        for col in free_cols:
            cols = [c for c in free_cols if c != col]
            sub = matrix[np.ix_(rest_rows, cols)]
            if min(len(rest_rows), len(cols)) < need - 1:
                continue
            total = matrix[row, col] + _optimal_total(sub)
            if _same(total, remaining):
                chosen = col
                remaining -= matrix[row, col]
                break
        if chosen is None:
            # rows > cols: this row stays unmatched
            continue
        pairs.append((row, chosen))
        free_cols.remove(chosen)
    matched_rows = {i for i, _ in pairs}
    total = float(sum(matrix[i, j] for i, j in pairs))
    assignment = Assignment(
        pairs,
        [i for i in range(num_rows) if i not in matched_rows],
        free_cols,
        total,
    )
    logger.debug(
        "Assigned %d pairs on a %dx%d matrix (total %.6f)",
        len(pairs),
        num_rows,
        num_cols,
        total,
    )
    return assignment


def greedy_assign(matrix: np.ndarray) -> Assignment:
    """Row-wise greedy assignment: each row takes its cheapest free column."""
    matrix = np.asarray(matrix, dtype=np.float64)
    num_rows, num_cols = matrix.shape
    free_cols = list(range(num_cols))
    pairs = []
    for row in range(num_rows):
        if not free_cols:
            break
        col = min(free_cols, key=lambda c: (matrix[row, c], c))
        pairs.append((row, col))
        free_cols.remove(col)
    matched = {i for i, _ in pairs}
    return Assignment(
        pairs,
        [i for i in range(num_rows) if i not in matched],
        free_cols,
        float(sum(matrix[i, j] for i, j in pairs)),
    )
