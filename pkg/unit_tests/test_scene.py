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

"""Test the synthetic scene generator."""

import math
import os

import numpy as np

import raydet.depth_bins as depth_bins
import raydet.geometry as geometry
import raydet.scene as raydet_scene
import raydet.tensor_io as tensor_io
import raydet.test_utils as test_utils
from raydet.guard import MalformedInputError, SceneGenerationError
from raydet.matching import GroundTruth


class TestGenerateScene(test_utils.RayTestCase):
    """Scene generation."""

    def setUp(self) -> None:
        """Set up a small seeded scene."""
        super().setUp()
        self.config = test_utils.SMALL_SCENE
        self.scene = raydet_scene.generate_scene(42, self.config)

    def test_deterministic(self) -> None:
        """Test the same seed twice gives identical scenes."""
        again = raydet_scene.generate_scene(42, self.config)
        self.assertEqual(again.objects, self.scene.objects)
        self.assertEqual(again.boxes2d, self.scene.boxes2d)
        self.assertTrue(np.array_equal(again.depth, self.scene.depth))
        self.assertTrue(
            np.array_equal(again.id_features, self.scene.id_features))
        other = raydet_scene.generate_scene(43, self.config)
        self.assertNotEqual(other.objects, self.scene.objects)

    def test_objects(self) -> None:
        """Test counts, ranges and BEV separation."""
        objects = self.scene.objects
        self.assertEqual(len(objects), 5)
        self.assertEqual(
            [o.category for o in objects], ['car'] * 3 + ['pedestrian'] * 2)
        for gt in objects:
            distance = math.hypot(gt.center[0], gt.center[1])
            self.assertGreaterEqual(distance, self.config.min_range)
            self.assertLessEqual(distance, self.config.max_range)
            self.assertEqual(gt.size, raydet_scene.CATEGORY_SIZES[
                gt.category])
        for i, a in enumerate(objects):
            for b in objects[i + 1:]:
                gap = math.hypot(
                    a.center[0] - b.center[0], a.center[1] - b.center[1])
                self.assertGreaterEqual(
                    gap,
                    raydet_scene.bounding_radius(a.size)
                    + raydet_scene.bounding_radius(b.size))

    def test_maps(self) -> None:
        """Test map shapes and depth where ids are rendered."""
        rows, cols = self.config.feature_shape
        self.assertEqual(self.scene.depth.shape, (1, 6, rows, cols))
        self.assertEqual(
            self.scene.id_features.shape, (1, 6, rows, cols, 5))
        hit = self.scene.id_features.sum(axis=-1)
        self.assertTrue(np.all(hit <= 1.0))
        self.assertTrue(np.all(self.scene.depth[hit == 1.0] > 0.0))
        self.assertTrue(np.all(self.scene.depth[hit == 0.0] == 0.0))
        self.assertGreater(int(hit.sum()), 0)

    def test_boxes_bound_corners(self) -> None:
        """Test fully visible objects are bounded by a box of their view."""
        checked = 0
        for view, cam in enumerate(self.scene.cameras):
            boxes = [b for b in self.scene.boxes2d if b.view == view]
            for box in boxes:
                box.validate(cam.width, cam.height)
            for gt in self.scene.objects:
                corners = raydet_scene.box_corners(
                    gt.center, gt.size, gt.yaw)
                uv, valid, _ = geometry.project_points(cam, corners)
                if not np.all(valid):
                    continue
                checked += 1
                self.assertTrue(any(
                    b.category == gt.category
                    and b.x1 <= uv[:, 0].min() + 1e-9
                    and uv[:, 0].max() <= b.x2 + 1e-9
                    and b.y1 <= uv[:, 1].min() + 1e-9
                    and uv[:, 1].max() <= b.y2 + 1e-9
                    for b in boxes))
        self.assertGreater(checked, 0)

    def test_empty_scene(self) -> None:
        """Test a scene without objects renders nothing."""
        config = self.config._replace(num_cars=0, num_pedestrians=0)
        scene = raydet_scene.generate_scene(1, config)
        self.assertEqual(scene.objects, [])
        self.assertEqual(scene.boxes2d, [])
        self.assertFalse(np.any(scene.depth))
        self.assertFalse(np.any(scene.id_features))
        self.assertEqual(scene.num_channels, 1)
        bins = depth_bins.make_spec(1.0, 61.0, 10)
        for dist in scene.depth_distributions(bins):
            self.assertFalse(np.any(dist.valid))

    def test_infeasible(self) -> None:
        """Test a crowded disk fails after bounded retries."""
        config = self.config._replace(
            num_cars=40, min_range=0.0, max_range=4.0, max_retries=5)
        with self.assertRaises(SceneGenerationError):
            raydet_scene.generate_scene(0, config)

    def test_oracle_depth(self) -> None:
        """Test one-hot depth bins exactly where depth is rendered."""
        bins = depth_bins.make_spec(1.0, 61.0, 64)
        depth = self.scene.depth[0, 0]
        dist = raydet_scene.oracle_depth_distribution(depth, bins)
        self.assertTrue(np.array_equal(dist.valid, depth > 0.0))
        r, c = np.nonzero(depth > 0.0)
        for i, j in zip(r[:20], c[:20]):
            self.assertEqual(
                int(np.argmax(dist.probs[i, j])),
                depth_bins.depth_to_bin(bins, float(depth[i, j])))

    def test_degenerate_box_warns(self) -> None:
        """Test a zero-area box is dropped with a warning."""
        cam = test_utils.forward_camera()
        flat = GroundTruth((10.0, 0.0, 0.0), (0.0, 0.0, 0.0), 0.0,
                           (0.0, 0.0), 'car')
        car = flat._replace(size=(4.0, 2.0, 1.5))
        with self.assertLogs('raydet.scene', level='WARNING') as logs:
            boxes = raydet_scene.oracle_boxes([cam], [flat, car])
        self.assertEqual(len(boxes), 1)
        self.assertEqual(boxes[0].view, 0)
        self.assertIn('degenerate car box', logs.output[0])

    def test_reference_rig(self) -> None:
        """Test six level cameras 60 degrees apart."""
        rig = test_utils.reference_rig()
        self.assertEqual(len(rig), 6)
        for k, cam in enumerate(rig):
            axis = cam.ego_from_camera[:3, 2]
            self.assertAlmostEqual(
                math.atan2(axis[1], axis[0]) % geometry.TWO_PI,
                (k * math.pi / 3) % geometry.TWO_PI, places=9)
            self.assertArrayClose(cam.position, [0.0, 0.0, 1.5])

    def test_multi_frame(self) -> None:
        """Test past frames get their own poses and maps."""
        config = self.config._replace(num_frames=2, ego_speed=4.0)
        scene = raydet_scene.generate_scene(3, config)
        self.assertEqual(scene.timestamps, [0.0, -0.5])
        self.assertEqual(scene.depth.shape[:2], (2, 6))
        self.assertArrayClose(
            scene.poses[1].world_from_ego[:3, 3], [-2.0, 0.0, 0.0])
        cams = scene.cameras_in_reference(1)
        self.assertArrayClose(cams[0].position, [-2.0, 0.0, 1.5])


class TestSceneFiles(test_utils.RayTestCase):
    """scene.json and its map tensors."""

    def test_round_trip(self) -> None:
        """Test a saved scene loads back."""
        out_dir = self.make_tempdir()
        path = test_utils.write_scene(out_dir, seed=5)
        self.assertEqual(os.path.basename(path), 'scene.json')
        scene = raydet_scene.generate_scene(5, test_utils.SMALL_SCENE)
        loaded = raydet_scene.load_scene(path)
        self.assertEqual(loaded.seed, 5)
        self.assertEqual(loaded.objects, scene.objects)
        self.assertEqual(loaded.boxes2d, scene.boxes2d)
        self.assertEqual(loaded.stride, scene.stride)
        self.assertArrayClose(loaded.depth, scene.depth, atol=1e-4)
        self.assertArrayClose(loaded.id_features, scene.id_features)
        bare = raydet_scene.load_scene(path, with_maps=False)
        self.assertIsNone(bare.depth)

    def test_bad_document(self) -> None:
        """Test a scene.json without cameras is malformed."""
        out_dir = self.make_tempdir()
        path = os.path.join(out_dir, 'scene.json')
        tensor_io.write_json(path, {'seed': 0, 'timestamps': [0.0]})
        with self.assertRaises(MalformedInputError):
            raydet_scene.load_scene(path, with_maps=False)

    def test_mismatched_maps(self) -> None:
        """Test depth maps must cover every frame and view."""
        out_dir = self.make_tempdir()
        path = test_utils.write_scene(out_dir)
        tensor_io.write_tensor(
            os.path.join(out_dir, raydet_scene.DEPTH_FILE),
            np.zeros((1, 2, 3, 3)))
        with self.assertRaises(MalformedInputError):
            raydet_scene.load_scene(path)
