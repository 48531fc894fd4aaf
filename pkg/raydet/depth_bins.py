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

"""Linearly increasing depth discretization.

Bin ``l`` of ``K`` has width ``delta * (l + 1)`` with
``delta = 2 (d_max - d_min) / (K (K + 1))``, so bins are finest near the
camera and the widths add up to ``d_max - d_min``.
"""

import logging
import math
from typing import NamedTuple, Tuple

import numpy as np

from raydet.guard import check

logger = logging.getLogger(__name__)


class DepthBinSpec(NamedTuple):
    """Depth range, bin count and the derived base width delta."""

    d_min: float
    d_max: float
    num_bins: int
    delta: float


def make_spec(d_min: float, d_max: float, num_bins: int) -> DepthBinSpec:
    """Build a bin spec, deriving delta."""
    check(
        math.isfinite(d_min) and math.isfinite(d_max),
        "d_min, d_max finite",
        f"{d_min}, {d_max}",
    )
    check(d_min < d_max, "d_min < d_max", f"{d_min} >= {d_max}")
    check(
        int(num_bins) == num_bins and num_bins >= 1, "K >= 1", str(num_bins)
    )
    num_bins = int(num_bins)
    delta = 2.0 * (d_max - d_min) / (num_bins * (num_bins + 1))
    logger.debug(
        "Depth bins [%g, %g] K=%d delta=%g", d_min, d_max, num_bins, delta
    )
    return DepthBinSpec(float(d_min), float(d_max), num_bins, delta)


def depth_to_bins(spec: DepthBinSpec, depths: np.ndarray) -> np.ndarray:
    """Vectorized depth_to_bin, clamped to [0, K - 1]."""
    depths = np.asarray(depths, dtype=np.float64)
    offset = np.maximum(depths - spec.d_min, 0.0)
    raw = np.floor(-0.5 + 0.5 * np.sqrt(1.0 + 8.0 * offset / spec.delta))
    bins = np.clip(raw, 0, spec.num_bins - 1).astype(np.int64)
    # sqrt rounding can land one bin off right at an edge
    lo = spec.d_min + spec.delta * bins * (bins + 1) / 2.0
    bins = np.where((depths < lo) & (bins > 0), bins - 1, bins)
    hi = spec.d_min + spec.delta * (bins + 1) * (bins + 2) / 2.0
    bins = np.where(
        (depths >= hi) & (bins < spec.num_bins - 1), bins + 1, bins
    )
    return bins


def depth_to_bin(spec: DepthBinSpec, d_hat: float) -> int:
    """Bin index of a depth; out-of-range depths clamp to the end bins."""
    check(math.isfinite(d_hat), "depth is finite", repr(d_hat))
    return int(depth_to_bins(spec, np.asarray([d_hat]))[0])


def bin_bounds(spec: DepthBinSpec, index: int) -> Tuple[float, float]:
    """Lower and upper depth of bin `index`."""
    check(
        0 <= index < spec.num_bins,
        "0 <= l < K",
        f"l={index}, K={spec.num_bins}",
    )
    lo = spec.d_min + spec.delta * index * (index + 1) / 2.0
    if index == spec.num_bins - 1:
        hi = spec.d_max
    else:
        hi = spec.d_min + spec.delta * (index + 1) * (index + 2) / 2.0
    return lo, hi


def bin_center(spec: DepthBinSpec, index: int) -> float:
    """Midpoint of bin `index`."""
    lo, hi = bin_bounds(spec, index)
    return 0.5 * (lo + hi)


def bin_centers(spec: DepthBinSpec) -> np.ndarray:
    """Midpoints of every bin, in bin order."""
    return np.asarray(
        [bin_center(spec, index) for index in range(spec.num_bins)]
    )
