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

"""Parameter providers for ray sampling.

A provider stands in for the learned layers that turn a query feature into
ray-point offsets, sampling offsets and attention weights. Providers must be
pure: the same query and indices always give the same output.
"""

import logging

import numpy as np
import scipy.special

from raydet.guard import check
from raydet.query_init import Query

logger = logging.getLogger(__name__)

WEIGHT_TOL = 1e-6


class ParameterProvider:
    """Base provider: zero offsets and uniform weights.

    Shapes, for one query:

    * ray_point_offsets: (K,) meters along the ray
    * sampling_offsets: (K, P, 3) unit offsets in the box frame (x along the
      heading), later scaled by (l/2, w/2, h/2) and rotated by yaw
    * location_weights: (T, K * P), each row sums to 1
    * frame_weights: (T,)
    * view_scale_weights: (V, L), each row sums to 1
    * fusion_matrix: (C, 2C) applied to [bev, image]
    """

    name = "default"

    def ray_point_offsets(
        self, query: Query, index: int, num_points: int
    ) -> np.ndarray:
        """Along-ray offsets of the K ray points."""
        return np.zeros(num_points)

    def sampling_offsets(
        self, query: Query, index: int, num_points: int, num_offsets: int
    ) -> np.ndarray:
        """Unit offsets of the P sampling points around each ray point."""
        return np.zeros((num_points, num_offsets, 3))

    def location_weights(
        self, query: Query, index: int, num_frames: int, num_samples: int
    ) -> np.ndarray:
        """Per-frame weights of the N_s = K * P sampling points."""
        return np.full((num_frames, num_samples), 1.0 / num_samples)

    def frame_weights(
        self, query: Query, index: int, num_frames: int
    ) -> np.ndarray:
        """Weight w_t of every frame."""
        return np.ones(num_frames)

    def view_scale_weights(
        self, query: Query, index: int, num_views: int, num_scales: int
    ) -> np.ndarray:
        """Weight w_{i,l} of every scale in every view."""
        return np.full((num_views, num_scales), 1.0 / num_scales)

    def fusion_matrix(self, channels: int) -> np.ndarray:
        """Linear map fusing the concatenated branches: 0.5 (bev + img)."""
        eye = np.eye(channels)
        return 0.5 * np.concatenate([eye, eye], axis=1)


class SeededParameterProvider(ParameterProvider):
    """Deterministic non-trivial offsets and softmax-normalized weights.

    Every (query index, surface) pair draws from its own generator, so
    outputs do not depend on call order.

    :param seed: base seed
    :param max_ray_offset: bound on along-ray offsets in meters
    """

    name = "seeded"

    _RAY = 0
    _OFFSETS = 1
    _LOCATIONS = 2
    _FRAMES = 3
    _VIEWS = 4

    def __init__(self, seed: int = 0, max_ray_offset: float = 1.0) -> None:
        """Run constructor."""
        check(max_ray_offset >= 0.0, "max ray offset >= 0")
        self.seed = int(seed)
        self.max_ray_offset = float(max_ray_offset)

    def _rng(self, index: int, surface: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, int(index), surface])

    def ray_point_offsets(
        self, query: Query, index: int, num_points: int
    ) -> np.ndarray:
        """Along-ray offsets of the K ray points."""
        rng = self._rng(index, self._RAY)
        return rng.uniform(
            -self.max_ray_offset, self.max_ray_offset, num_points
        )

    def sampling_offsets(
        self, query: Query, index: int, num_points: int, num_offsets: int
    ) -> np.ndarray:
        """Unit offsets of the P sampling points around each ray point."""
        rng = self._rng(index, self._OFFSETS)
        return rng.uniform(-1.0, 1.0, (num_points, num_offsets, 3))

    def location_weights(
        self, query: Query, index: int, num_frames: int, num_samples: int
    ) -> np.ndarray:
        """Per-frame weights of the N_s = K * P sampling points."""
        rng = self._rng(index, self._LOCATIONS)
        logits = rng.normal(size=(num_frames, num_samples))
        return scipy.special.softmax(logits, axis=-1)

    def frame_weights(
        self, query: Query, index: int, num_frames: int
    ) -> np.ndarray:
        """Weight w_t of every frame, averaging to 1."""
        rng = self._rng(index, self._FRAMES)
        logits = rng.normal(size=num_frames)
        return num_frames * scipy.special.softmax(logits)

    def view_scale_weights(
        self, query: Query, index: int, num_views: int, num_scales: int
    ) -> np.ndarray:
        """Weight w_{i,l} of every scale in every view."""
        rng = self._rng(index, self._VIEWS)
        logits = rng.normal(size=(num_views, num_scales))
        return scipy.special.softmax(logits, axis=-1)


def check_normalized(weights: np.ndarray, what: str) -> None:
    """Check a weight group is non-negative with rows summing to 1."""
    check(bool(np.all(weights >= 0.0)), f"{what} non-negative")
    err = float(np.abs(weights.sum(axis=-1) - 1.0).max(initial=0.0))
    check(err <= WEIGHT_TOL, f"{what} sum to 1 within 1e-6", f"{err:.3e}")


PROVIDERS = {
    ParameterProvider.name: ParameterProvider,
    SeededParameterProvider.name: SeededParameterProvider,
}


def get_provider(
    name: str, seed: int = 0, max_ray_offset: float = 1.0
) -> ParameterProvider:
    """Build the named provider."""
    check(name in PROVIDERS, "known parameter provider", name)
    if name == SeededParameterProvider.name:
        return SeededParameterProvider(seed, max_ray_offset)
    return ParameterProvider()
