# Copyright 2026 The raydet Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Test the sampling parameter providers."""

import numpy as np

import raydet.providers as providers
import raydet.query_init as query_init
import raydet.test_utils as test_utils
from raydet.guard import InvariantViolation


class TestProviders(test_utils.RayTestCase):
    """Default and seeded providers."""

    def setUp(self) -> None:
        """Set up a query and both providers."""
        super().setUp()
        self.query = query_init.init_base_queries(
            query_init.RayLayout(num_rays=4, num_depth_slots=2))[0]
        self.default = providers.get_provider('default')
        self.seeded = providers.get_provider('seeded', seed=7)

    def test_default_outputs(self) -> None:
        """Test zero offsets and uniform weights."""
        self.assertFalse(
            np.any(self.default.ray_point_offsets(self.query, 0, 3)))
        self.assertEqual(
            self.default.sampling_offsets(self.query, 0, 3, 4).shape,
            (3, 4, 3))
        self.assertArrayClose(
            self.default.location_weights(self.query, 0, 2, 4),
            np.full((2, 4), 0.25))
        self.assertArrayClose(
            self.default.frame_weights(self.query, 0, 2), [1.0, 1.0])
        self.assertArrayClose(
            self.default.view_scale_weights(self.query, 0, 6, 2),
            np.full((6, 2), 0.5))

    def test_default_fusion(self) -> None:
        """Test the fusion matrix averages the two branches."""
        fusion = self.default.fusion_matrix(3)
        self.assertEqual(fusion.shape, (3, 6))
        fused = fusion @ np.array([1.0, 2.0, 3.0, 3.0, 4.0, 5.0])
        self.assertArrayClose(fused, [2.0, 3.0, 4.0])

    def test_seeded_is_pure(self) -> None:
        """Test outputs only depend on the seed and query index."""
        other = providers.SeededParameterProvider(seed=7)
        first = self.seeded.location_weights(self.query, 5, 2, 12)
        self.seeded.location_weights(self.query, 6, 2, 12)
        self.assertArrayClose(
            other.location_weights(self.query, 5, 2, 12), first, atol=0.0)
        self.assertArrayClose(
            self.seeded.sampling_offsets(self.query, 3, 4, 3),
            other.sampling_offsets(self.query, 3, 4, 3), atol=0.0)
        self.assertFalse(np.array_equal(
            first, self.seeded.location_weights(self.query, 6, 2, 12)))

    def test_seeded_normalized(self) -> None:
        """Test seeded weight groups are normalized."""
        providers.check_normalized(
            self.seeded.location_weights(self.query, 1, 3, 12),
            'location weights')
        providers.check_normalized(
            self.seeded.view_scale_weights(self.query, 1, 6, 3),
            'view-scale weights')
        frames = self.seeded.frame_weights(self.query, 1, 4)
        self.assertAlmostEqual(float(frames.sum()), 4.0)

    def test_seeded_ranges(self) -> None:
        """Test offsets stay in their bounds."""
        provider = providers.get_provider('seeded', max_ray_offset=0.5)
        ray = provider.ray_point_offsets(self.query, 2, 100)
        self.assertTrue(np.all(np.abs(ray) <= 0.5))
        offsets = provider.sampling_offsets(self.query, 2, 4, 6)
        self.assertTrue(np.all(np.abs(offsets) <= 1.0))

    def test_check_normalized(self) -> None:
        """Test bad weight groups are rejected."""
        with self.assertRaises(InvariantViolation):
            providers.check_normalized(np.array([[0.5, 0.6]]), 'weights')
        with self.assertRaises(InvariantViolation):
            providers.check_normalized(np.array([[1.5, -0.5]]), 'weights')
        providers.check_normalized(np.array([[0.5, 0.5]]), 'weights')

    def test_unknown_provider(self) -> None:
        """Test unknown names and negative offsets are rejected."""
        with self.assertRaises(InvariantViolation):
            providers.get_provider('learned')
        with self.assertRaises(InvariantViolation):
            providers.SeededParameterProvider(max_ray_offset=-1.0)
