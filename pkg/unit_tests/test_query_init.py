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

"""Test radial query initialization."""

import math

import numpy as np

import raydet.geometry as geometry
import raydet.query_init as query_init
import raydet.test_utils as test_utils
from raydet.guard import InvariantViolation, MalformedInputError


class TestBaseQueries(test_utils.RayTestCase):
    """Base queries on evenly spaced rays."""

    def setUp(self) -> None:
        """Set up the default layout."""
        super().setUp()
        self.layout = query_init.RayLayout()
        self.queries = query_init.init_base_queries(self.layout)

    def test_count(self) -> None:
        """Test the default layout yields 135 x 6 queries."""
        self.assertEqual(len(self.queries), 810)

    def test_ray_major_order(self) -> None:
        """Test ray ids and slots are ray-major."""
        for i, query in enumerate(self.queries):
            self.assertEqual(query.ray_id, i // 6)
            self.assertEqual(query.slot, i % 6)
            self.assertEqual(query.num_slots, 6)
            self.assertEqual(query.origin, query_init.BASE)

    def test_positions(self) -> None:
        """Test thetas and depths sit at segment centers."""
        step = geometry.TWO_PI / 135
        for query in self.queries:
            self.assertAlmostEqual(
                query.box.theta, (query.ray_id + 0.5) * step, places=12)
            self.assertAlmostEqual(
                query.box.depth, (query.slot + 0.5) * 65.0 / 6, places=12)
            query.validate(65.0)

    def test_template_and_features(self) -> None:
        """Test the template box and zero features."""
        template = query_init.BoxTemplate()
        query = self.queries[17]
        self.assertEqual(query.box.z, template.z)
        self.assertEqual(query.box.l, template.l)
        self.assertEqual(query.feature.shape, (32, ))
        self.assertFalse(np.any(query.feature))

    def test_invalid_layout(self) -> None:
        """Test degenerate layouts are rejected."""
        for layout in (
            query_init.RayLayout(num_rays=0),
            query_init.RayLayout(num_depth_slots=0),
            query_init.RayLayout(fov=0.0),
            query_init.RayLayout(fov=7.0),
            query_init.RayLayout(max_depth=0.0),
        ):
            with self.assertRaises(InvariantViolation):
                query_init.init_base_queries(layout)

    def test_invalid_template(self) -> None:
        """Test a flat template box is rejected."""
        with self.assertRaises(InvariantViolation):
            query_init.init_base_queries(
                self.layout, query_init.BoxTemplate(h=0.0))

    def test_validate_depth(self) -> None:
        """Test a query beyond the perception range is rejected."""
        query = self.queries[-1]
        with self.assertRaises(InvariantViolation):
            query.validate(10.0)


class TestSegments(test_utils.RayTestCase):
    """Depth segments owned by queries."""

    def test_segments_tile_ray(self) -> None:
        """Test segments of every ray tile [0, D]."""
        for num_slots in (1, 2, 6, 11):
            segments = query_init.segments_along_ray(0.3, num_slots, 65.0)
            self.assertEqual(len(segments), num_slots)
            self.assertEqual(segments[0].d_lo, 0.0)
            self.assertEqual(segments[-1].d_hi, 65.0)
            for a, b in zip(segments, segments[1:]):
                self.assertEqual(a.d_hi, b.d_lo)

    def test_slot_inside_segment(self) -> None:
        """Test every base query lies in its own segment."""
        layout = query_init.RayLayout(num_rays=8, num_depth_slots=5)
        queries = query_init.init_base_queries(layout)
        segments = query_init.ray_segments(layout)
        self.assertEqual(len(segments), len(queries))
        for query, segment in zip(queries, segments):
            self.assertEqual(segment.theta, query.box.theta)
            self.assertLessEqual(segment.d_lo, query.box.depth)
            self.assertLessEqual(query.box.depth, segment.d_hi)
            self.assertEqual(
                query_init.query_segment(query, layout.max_depth), segment)


class TestQueryRecords(test_utils.RayTestCase):
    """Query JSON-lines records."""

    def setUp(self) -> None:
        """Set up one base query."""
        super().setUp()
        self.query = query_init.init_base_queries(
            query_init.RayLayout(num_rays=2, num_depth_slots=2),
            embed_dims=4,
        )[3]

    def test_round_trip(self) -> None:
        """Test a record rebuilds the same query."""
        record = self.query.to_dict()
        self.assertEqual(record['ray_id'], 1)
        self.assertEqual(record['slot'], 1)
        self.assertEqual(record['origin'], 'base')
        query = query_init.Query.from_dict(record)
        self.assertEqual(query.box, self.query.box)
        self.assertArrayClose(query.feature, self.query.feature)

    def test_missing_field(self) -> None:
        """Test a record without depth is malformed."""
        record = self.query.to_dict()
        del record['depth']
        with self.assertRaises(MalformedInputError):
            query_init.Query.from_dict(record)

    def test_unknown_origin(self) -> None:
        """Test an unknown origin is malformed."""
        record = self.query.to_dict()
        record['origin'] = 'lidar'
        with self.assertRaises(MalformedInputError):
            query_init.Query.from_dict(record)

    def test_foreground_provenance(self) -> None:
        """Test foreground records keep category and filler flag."""
        rays = [
            query_init.ForegroundRay(0.5, 'car', 3),
            query_init.ForegroundRay(1.5, 'pedestrian', 7, padded=True),
        ]
        queries = query_init.init_foreground_queries(
            rays, 2, 65.0, first_ray_id=135, embed_dims=4)
        records = [q.to_dict() for q in queries]
        self.assertEqual(
            [(r['category'], r['padded']) for r in records],
            [('car', False)] * 2 + [('pedestrian', True)] * 2)
        rebuilt = query_init.Query.from_dict(records[2])
        self.assertEqual(rebuilt.category, 'pedestrian')
        self.assertTrue(rebuilt.padded)
        self.assertNotIn('category', self.query.to_dict())


class TestForegroundRays(test_utils.RayTestCase):
    """Foreground rays through 2D detections."""

    def setUp(self) -> None:
        """Set up a forward camera and a central column box."""
        super().setUp()
        self.cams = [test_utils.forward_camera()]
        # u in [350, 450] means |tan(theta)| <= 0.1
        self.car = query_init.Box2D(0, 350.0, 280.0, 450.0, 320.0, 'car')
        self.spec = query_init.CategoryRaySpec()

    def test_expand_full_height(self) -> None:
        """Test boxes are stretched to their view's image height."""
        boxes = query_init.expand_boxes_full_height(
            [self.car, self.car._replace(view=1)], [600.0, 900.0])
        self.assertEqual((boxes[0].y1, boxes[0].y2), (0.0, 600.0))
        self.assertEqual((boxes[1].y1, boxes[1].y2), (0.0, 900.0))
        self.assertEqual(boxes[0].x1, 350.0)
        boxes = query_init.expand_boxes_full_height([self.car], 600)
        self.assertEqual(boxes[0].y2, 600.0)

    def test_box_validate(self) -> None:
        """Test box bounds against the image."""
        self.car.validate(800, 600)
        with self.assertRaises(InvariantViolation):
            self.car._replace(x2=900.0).validate(800, 600)
        with self.assertRaises(InvariantViolation):
            self.car._replace(y1=330.0).validate(800, 600)
        with self.assertRaises(InvariantViolation):
            self.car._replace(score=1.5).validate(800, 600)

    def test_box_record(self) -> None:
        """Test the box record round trip and default score."""
        record = self.car.to_dict()
        self.assertEqual(query_init.Box2D.from_dict(record), self.car)
        del record['score']
        self.assertEqual(query_init.Box2D.from_dict(record).score, 1.0)

    def test_category_spec(self) -> None:
        """Test default ray counts and their validation."""
        self.assertEqual(self.spec.categories, ['car', 'pedestrian'])
        self.assertAlmostEqual(
            self.spec.spacing('car', geometry.TWO_PI), math.pi / 90)
        with self.assertRaises(InvariantViolation):
            query_init.CategoryRaySpec({'car': 0})
        with self.assertRaises(InvariantViolation):
            query_init.CategoryRaySpec({})

    def test_car_candidates(self) -> None:
        """Test car rays around the optical axis are selected."""
        boxes = query_init.expand_boxes_full_height([self.car], 600.0)
        rays = query_init.foreground_candidates(
            self.spec, boxes, self.cams, 65.0)
        self.assertEqual(
            [r.index for r in rays], [0, 1, 2, 177, 178, 179])
        self.assertTrue(all(r.category == 'car' for r in rays))
        self.assertTrue(all(not r.padded for r in rays))
        thetas = [r.theta for r in rays]
        self.assertEqual(thetas, sorted(thetas))

    def test_category_filter(self) -> None:
        """Test a pedestrian box only selects pedestrian rays."""
        boxes = query_init.expand_boxes_full_height(
            [self.car._replace(category='pedestrian')], 600.0)
        rays = query_init.foreground_candidates(
            self.spec, boxes, self.cams, 65.0)
        self.assertEqual(len(rays), 12)
        self.assertTrue(all(r.category == 'pedestrian' for r in rays))

    def test_unexpanded_box_misses(self) -> None:
        """Test a short box above the horizon hits nothing."""
        box = self.car._replace(y1=0.0, y2=100.0)
        rays = query_init.foreground_candidates(
            self.spec, [box], self.cams, 65.0)
        self.assertEqual(rays, [])

    def test_no_boxes(self) -> None:
        """Test no boxes means no foreground rays."""
        self.assertEqual(
            query_init.select_foreground_rays(
                self.spec, [], self.cams, 65.0, 30),
            [])

    def test_budget(self) -> None:
        """Test the selection is truncated in (category, theta) order."""
        boxes = query_init.expand_boxes_full_height([self.car], 600.0)
        rays = query_init.select_foreground_rays(
            self.spec, boxes, self.cams, 65.0, 4)
        self.assertEqual([r.index for r in rays], [0, 1, 2, 177])
        unlimited = query_init.select_foreground_rays(
            self.spec, boxes, self.cams, 65.0, None)
        self.assertEqual(len(unlimited), 6)
        with self.assertRaises(InvariantViolation):
            query_init.select_foreground_rays(
                self.spec, boxes, self.cams, 65.0, -1)

    def test_box_without_camera(self) -> None:
        """Test a box on a missing view is rejected."""
        with self.assertRaises(InvariantViolation):
            query_init.foreground_candidates(
                self.spec, [self.car._replace(view=3)], self.cams, 65.0)


class TestPadding(test_utils.RayTestCase):
    """Filling a short foreground selection."""

    def setUp(self) -> None:
        """Set up a car-only spec."""
        super().setUp()
        self.spec = query_init.CategoryRaySpec({'car': 180})

    def test_pad_from_empty(self) -> None:
        """Test fillers are spread evenly over the candidates."""
        rays = query_init.pad_foreground_rays([], self.spec, 10)
        self.assertEqual(
            [r.index for r in rays], [9 + 18 * k for k in range(10)])
        self.assertTrue(all(r.padded for r in rays))

    def test_pad_keeps_selection(self) -> None:
        """Test selected rays survive and nothing is duplicated."""
        selected = [
            query_init.ForegroundRay(
                (k + 0.5) * math.pi / 90, 'car', k)
            for k in (0, 1, 179)
        ]
        rays = query_init.pad_foreground_rays(selected, self.spec, 30)
        self.assertEqual(len(rays), 30)
        keys = [(r.category, r.index) for r in rays]
        self.assertEqual(len(set(keys)), 30)
        for ray in selected:
            self.assertIn(ray, rays)
        thetas = [r.theta for r in rays]
        self.assertEqual(thetas, sorted(thetas))

    def test_full_selection_untouched(self) -> None:
        """Test a selection at budget is returned as is."""
        selected = [
            query_init.ForegroundRay(0.1, 'car', 3),
            query_init.ForegroundRay(0.2, 'car', 6),
        ]
        self.assertEqual(
            query_init.pad_foreground_rays(selected, self.spec, 2),
            selected)

    def test_too_few_candidates(self) -> None:
        """Test padding stops when candidates run out."""
        spec = query_init.CategoryRaySpec({'car': 4})
        rays = query_init.pad_foreground_rays([], spec, 10)
        self.assertEqual([r.index for r in rays], [0, 1, 2, 3])


class TestForegroundQueries(test_utils.RayTestCase):
    """Queries placed on foreground rays."""

    def test_queries(self) -> None:
        """Test ray ids continue after the base rays."""
        rays = [
            query_init.ForegroundRay(0.5, 'car', 7),
            query_init.ForegroundRay(1.5, 'pedestrian', 40),
        ]
        queries = query_init.init_foreground_queries(
            rays, 3, 65.0, first_ray_id=135)
        self.assertEqual(len(queries), 6)
        self.assertEqual(
            [q.ray_id for q in queries], [135, 135, 135, 136, 136, 136])
        self.assertEqual([q.slot for q in queries], [0, 1, 2] * 2)
        for query in queries:
            self.assertEqual(query.origin, query_init.FOREGROUND)
            self.assertEqual(query.num_slots, 3)
            query.validate(65.0)
        self.assertAlmostEqual(queries[4].box.depth, 65.0 / 2)
        self.assertEqual(queries[4].box.theta, 1.5)

    def test_invalid_slots(self) -> None:
        """Test zero slots per ray is rejected."""
        with self.assertRaises(InvariantViolation):
            query_init.init_foreground_queries([], 0, 65.0)


class TestGridQueries(test_utils.RayTestCase):
    """Cartesian comparison grid."""

    def test_grid_centers(self) -> None:
        """Test the grid fills its budget inside the circle."""
        layout = query_init.GridLayout(900, 65.0)
        xy = query_init.grid_query_centers(layout)
        self.assertEqual(xy.shape, (900, 2))
        dist = np.hypot(xy[:, 0], xy[:, 1])
        self.assertTrue(np.all(dist <= 65.0))
        self.assertTrue(np.all(np.diff(dist) >= 0.0))
        self.assertEqual(len({tuple(p) for p in xy}), 900)

    def test_grid_queries(self) -> None:
        """Test grid queries own one slot each."""
        queries = query_init.grid_queries(query_init.GridLayout(50, 65.0))
        self.assertEqual([q.ray_id for q in queries], list(range(50)))
        for query in queries:
            self.assertEqual(query.origin, query_init.BASE)
            self.assertEqual(query.slot, 0)
            query.validate(65.0)

    def test_invalid_grid(self) -> None:
        """Test an empty grid budget is rejected."""
        with self.assertRaises(InvariantViolation):
            query_init.grid_query_centers(query_init.GridLayout(0, 65.0))
