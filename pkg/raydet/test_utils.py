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

"""Module containing shared code to be used in raydet unit tests."""

import os
import shutil
import tempfile
import typing
import unittest

import numpy as np
from mock import Mock, patch

import raydet.geometry as geometry
import raydet.lift_splat as lift_splat
import raydet.matching as matching
import raydet.query_init as query_init
import raydet.scene as raydet_scene
import raydet.tensor_io as tensor_io

# Small scenes keep rendering fast while using the reference rig.
SMALL_SCENE = raydet_scene.SceneConfig(num_cars=3, num_pedestrians=2)


class RayTestCase(unittest.TestCase):
    """Class to make mocking and temporary files easier."""

    def patch_obj(self, obj: typing.Any, method: typing.Any) -> Mock:
        """Patch the named method on obj."""
        _m = patch.object(obj, method)
        mock = _m.start()
        self.addCleanup(_m.stop)
        return mock

    def make_tempdir(self) -> str:
        """Temporary directory removed at cleanup."""
        path = tempfile.mkdtemp(prefix="raydet-")
        self.addCleanup(shutil.rmtree, path, True)
        return path

    def assertArrayClose(
        self,
        actual: np.ndarray,
        expected: np.ndarray,
        atol: float = 1e-9,
    ) -> None:
        """Assert two arrays agree elementwise within `atol`."""
        np.testing.assert_allclose(actual, expected, rtol=0.0, atol=atol)


def forward_camera(
    focal: float = 500.0, width: int = 800, height: int = 600
) -> geometry.Camera:
    """Camera at the ego origin looking along +x."""
    return geometry.Camera.looking_along(
        0.0, (0.0, 0.0, 0.0), focal, width, height
    )


def reference_rig() -> typing.List[geometry.Camera]:
    """The default six-camera surround rig."""
    return raydet_scene.reference_rig(raydet_scene.SceneConfig())


def random_cloud(
    rng: np.random.Generator,
    num_points: int,
    channels: int,
    extent: float = 65.0,
) -> lift_splat.PseudoPointCloud:
    """Points spread over (and a little beyond) a BEV square."""
    xy = rng.uniform(-1.1 * extent, 1.1 * extent, size=(num_points, 2))
    z = rng.uniform(-2.0, 4.0, size=(num_points, 1))
    return lift_splat.PseudoPointCloud(
        np.concatenate([xy, z], axis=-1),
        rng.normal(size=(num_points, channels)),
        rng.uniform(0.0, 1.0, size=num_points),
        np.zeros(num_points, dtype=np.int64),
        np.zeros((num_points, 2), dtype=np.int64),
        np.zeros(num_points, dtype=np.int64),
    )


def make_prediction(
    theta: float,
    depth: float,
    probs: typing.Dict[str, float],
    **box: float,
) -> matching.Prediction:
    """Prediction at (theta, depth) with the default box otherwise."""
    fields = query_init.BoxTemplate()._asdict()
    fields.update(box)
    return matching.Prediction(
        query_init.QueryBox(theta, depth, **fields), probs
    )


def ground_truth_at(
    x: float,
    y: float,
    category: str = "car",
    yaw: float = 0.0,
    z: float = 0.85,
) -> matching.GroundTruth:
    """Static ground truth of the category's prior size."""
    return matching.GroundTruth(
        (x, y, z),
        raydet_scene.CATEGORY_SIZES[category],
        yaw,
        (0.0, 0.0),
        category,
    )


def write_scene(
    out_dir: str,
    seed: int = 0,
    config: raydet_scene.SceneConfig = SMALL_SCENE,
) -> str:
    """Generate and save a scene; returns the scene.json path."""
    scene = raydet_scene.generate_scene(seed, config)
    return raydet_scene.save_scene(scene, out_dir)["scene"]


def write_records(
    out_dir: str, name: str, records: typing.Iterable[dict]
) -> str:
    """Write JSON lines under out_dir; returns the path."""
    path = os.path.join(out_dir, name)
    tensor_io.write_jsonl(path, records)
    return path
