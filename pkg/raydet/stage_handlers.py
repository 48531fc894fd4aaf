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

"""Base classes for defining pipeline stages.

A stage handler owns one subcommand. It declares the files it reads and
writes, checks its inputs are present (`ready`) and runs the stage,
returning the artifacts it wrote. Stages share nothing but files, so any
stage can be rerun from its inputs alone.
"""

import logging
import os
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

import raydet.core as raydet_core
import raydet.evaluation as evaluation
import raydet.lift_splat as lift_splat
import raydet.matching as matching
import raydet.query_init as query_init
import raydet.ray_sampling as ray_sampling
import raydet.scene as raydet_scene
import raydet.templating as templating
import raydet.tensor_io as tensor_io
from raydet.guard import MalformedInputError, UsageError

logger = logging.getLogger(__name__)

QUERIES_FILE = "queries.jsonl"
SAMPLING_POINTS_FILE = "sampling_points.jsonl"
ASSIGNMENT_FILE = "assignment.json"
METRICS_FILE = "metrics.json"
EVAL_REPORT_FILE = "eval_report.txt"
DISPERSION_FILE = "dispersion.json"
DISPERSION_REPORT_FILE = "dispersion_report.txt"

BRANCH_BEV = "bev"
BRANCH_IMAGE = "image"


class StageHandler:
    """Base handler class for pipeline stages.

    :param config: the resolved pipeline config
    :param out_dir: directory receiving every artifact of the stage
    :param inputs: input paths by flag name (None when not given)
    """

    name = None

    def __init__(
        self,
        config: raydet_core.PipelineConfig,
        out_dir: str,
        inputs: Optional[Dict[str, Optional[str]]] = None,
    ) -> None:
        """Run constructor."""
        self.config = config
        self.out_dir = out_dir
        self.inputs = dict(inputs or {})

    def required_inputs(self) -> List[str]:
        """Flag names of inputs the stage cannot run without."""
        return []

    def input_files(self) -> List[raydet_core.StageFile]:
        """Input files given to the stage."""
        return [
            raydet_core.StageFile(name, path, "input")
            for name, path in sorted(self.inputs.items())
            if path is not None
        ]

    @property
    def ready(self) -> bool:
        """Whether every required input is given and exists."""
        for name in self.required_inputs():
            path = self.inputs.get(name)
            if path is None or not os.path.isfile(path):
                logger.debug(f"Stage {self.name} missing input {name}")
                return False
        return True

    def check_inputs(self) -> None:
        """Raise UsageError naming the first missing input."""
        for name in self.required_inputs():
            path = self.inputs.get(name)
            if path is None:
                raise UsageError(f"{self.name} requires --{name}")
            if not os.path.isfile(path):
                raise UsageError(f"no such file: {path}")

    def path(self, filename: str) -> str:
        """Output path of `filename`."""
        return os.path.join(self.out_dir, filename)

    def run(self) -> List[raydet_core.StageFile]:
        """Run the stage; return the files written."""
        self.check_inputs()
        os.makedirs(self.out_dir, exist_ok=True)
        logger.debug(f"Running stage {self.name} into {self.out_dir}")
        written = self.execute()
        for stage_file in written:
            logger.info(f"Stage {self.name} wrote {stage_file.path}")
        return written

    def execute(self) -> List[raydet_core.StageFile]:
        """Stage body.

        This method must be overridden in concrete class
        implementations.
        """
        raise NotImplementedError

    def context(self) -> dict:
        """Template context of the stage report."""
        return {}

    def load_scene(self, with_maps: bool = True) -> raydet_scene.Scene:
        """Scene named by --scene."""
        return raydet_scene.load_scene(self.inputs["scene"], with_maps)

    def load_queries(self) -> List[query_init.Query]:
        """Queries named by --queries."""
        return [
            query_init.Query.from_dict(r)
            for r in tensor_io.read_jsonl(self.inputs["queries"])
        ]

    def load_predictions(self) -> List[matching.Prediction]:
        """Predictions named by --predictions."""
        return [
            matching.Prediction.from_dict(r)
            for r in tensor_io.read_jsonl(self.inputs["predictions"])
        ]


class GenSceneHandler(StageHandler):
    """Generate a synthetic scene with its oracle maps."""

    name = "gen-scene"

    def __init__(
        self,
        config: raydet_core.PipelineConfig,
        out_dir: str,
        inputs: Optional[Dict[str, Optional[str]]] = None,
        seed: Optional[int] = None,
    ) -> None:
        """Run constructor."""
        super().__init__(config, out_dir, inputs)
        self.seed = config.scene.seed if seed is None else seed

    def execute(self) -> List[raydet_core.StageFile]:
        """Write scene.json, depth and id-feature tensors."""
        if self.seed < 0:
            raise UsageError(f"seed must be non-negative, got {self.seed}")
        scene = raydet_scene.generate_scene(
            self.seed, self.config.scene.scene_config()
        )
        paths = raydet_scene.save_scene(scene, self.out_dir)
        return [
            raydet_core.StageFile(name, path, "output")
            for name, path in sorted(paths.items())
        ]


def build_queries(
    config: raydet_core.PipelineConfig,
    scene: Optional[raydet_scene.Scene] = None,
) -> List[query_init.Query]:
    """Base queries plus foreground queries of the configured budget.

    Without a scene there are no 2D boxes, so the foreground rays are all
    fill rays (or none when filling is off).
    """
    layout = config.layout.layout()
    template = config.layout.template()
    fg = config.foreground
    spec = fg.category_spec()
    queries = query_init.init_base_queries(
        layout, template, config.layout.embed_dims
    )
    rays: List[query_init.ForegroundRay] = []
    if scene is not None:
        boxes = query_init.expand_boxes_full_height(
            scene.boxes2d, [cam.height for cam in scene.cameras]
        )
        rays = query_init.select_foreground_rays(
            spec,
            boxes,
            scene.cameras,
            layout.max_depth,
            fg.foreground_budget,
            layout.fov,
            template.z,
        )
    if fg.foreground_fill:
        rays = query_init.pad_foreground_rays(
            rays, spec, fg.foreground_budget, layout.fov
        )
    queries.extend(
        query_init.init_foreground_queries(
            rays,
            fg.foreground_slots,
            layout.max_depth,
            template,
            first_ray_id=layout.num_rays,
            embed_dims=config.layout.embed_dims,
        )
    )
    logger.debug(
        "Built %d queries (%d foreground rays)", len(queries), len(rays)
    )
    return queries


class InitQueriesHandler(StageHandler):
    """Initialize base and foreground queries."""

    name = "init-queries"

    def execute(self) -> List[raydet_core.StageFile]:
        """Write queries.jsonl."""
        scene = None
        if self.inputs.get("scene") is not None:
            scene = self.load_scene(with_maps=False)
        queries = build_queries(self.config, scene)
        path = self.path(QUERIES_FILE)
        tensor_io.write_jsonl(path, (q.to_dict() for q in queries))
        return [raydet_core.StageFile("queries", path, "output")]


def image_pyramid(
    feats: Sequence[lift_splat.ImageFeatureMap], num_scales: int
) -> List[List[lift_splat.ImageFeatureMap]]:
    """Per view, the map and its 2x average-pooled coarser scales."""
    pyramid = []
    for feat in feats:
        scales = [feat]
        for _ in range(num_scales - 1):
            scales.append(lift_splat.downsample_feature_map(scales[-1], 2))
        pyramid.append(scales)
    return pyramid


def build_bev_maps(
    config: raydet_core.PipelineConfig, scene: raydet_scene.Scene
) -> List[lift_splat.BevFeatureMap]:
    """Lift-splat every frame in its own ego frame, then align to frame 0."""
    grid = config.bev.grid()
    bins = config.depth.bins()
    maps = []
    for frame in range(scene.num_frames):
        bev = lift_splat.lift_splat_multi(
            scene.cameras,
            scene.feature_maps(frame),
            scene.depth_distributions(bins, frame),
            bins,
            grid,
        )
        if frame:
            bev = lift_splat.align_bev_map(
                bev, scene.poses[frame], scene.reference_pose
            )
        maps.append(bev)
    return maps


class LiftSplatHandler(StageHandler):
    """Build aligned BEV feature maps from oracle depth."""

    name = "lift-splat"

    def __init__(
        self,
        config: raydet_core.PipelineConfig,
        out_dir: str,
        inputs: Optional[Dict[str, Optional[str]]] = None,
        fmt: str = tensor_io.FORMAT_TENSOR,
    ) -> None:
        """Run constructor."""
        super().__init__(config, out_dir, inputs)
        self.fmt = fmt

    def required_inputs(self) -> List[str]:
        """Flag names of inputs the stage cannot run without."""
        return ["scene"]

    def execute(self) -> List[raydet_core.StageFile]:
        """Write the T x H x W x C BEV stack."""
        maps = build_bev_maps(self.config, self.load_scene())
        path = tensor_io.array_path(self.out_dir, "bev", self.fmt)
        tensor_io.write_array(path, np.stack([m.data for m in maps]))
        return [raydet_core.StageFile("bev", path, "output")]


class SampleHandler(StageHandler):
    """Sample BEV and image features along every query's ray."""

    name = "sample"

    def __init__(
        self,
        config: raydet_core.PipelineConfig,
        out_dir: str,
        inputs: Optional[Dict[str, Optional[str]]] = None,
        fmt: str = tensor_io.FORMAT_TENSOR,
    ) -> None:
        """Run constructor."""
        super().__init__(config, out_dir, inputs)
        self.fmt = fmt

    def required_inputs(self) -> List[str]:
        """Flag names of inputs the stage cannot run without."""
        return ["scene", "queries", "bev"]

    def load_bev(
        self, scene: raydet_scene.Scene
    ) -> List[lift_splat.BevFeatureMap]:
        """BEV stack named by --bev, one map per scene frame."""
        grid = self.config.bev.grid()
        stack = tensor_io.read_array(self.inputs["bev"])
        rows, cols = grid.shape
        expected = (scene.num_frames, rows, cols, scene.num_channels)
        if stack.shape != expected:
            raise MalformedInputError(
                f"BEV stack is {stack.shape}, expected {expected}",
                self.inputs["bev"],
            )
        return [lift_splat.BevFeatureMap(grid, data) for data in stack]

    def execute(self) -> List[raydet_core.StageFile]:
        """Write the sampled branches, their fusion and the points."""
        scene = self.load_scene()
        queries = self.load_queries()
        if not queries:
            raise MalformedInputError("no queries", self.inputs["queries"])
        bev_maps = self.load_bev(scene)
        sampling = self.config.sampling
        provider = sampling.parameter_provider()
        max_depth = self.config.layout.max_depth
        segments = [query_init.query_segment(q, max_depth) for q in queries]
        bev_points = ray_sampling.generate_sampling_points(
            queries,
            segments,
            scene.timestamps,
            sampling.bev_ray_points,
            sampling.sampling_offsets,
            provider,
        )
        image_points = ray_sampling.generate_sampling_points(
            queries,
            segments,
            scene.timestamps,
            sampling.image_ray_points,
            sampling.sampling_offsets,
            provider,
        )
        image_feats = [
            image_pyramid(scene.feature_maps(frame), sampling.image_scales)
            for frame in range(scene.num_frames)
        ]
        rigs = [
            scene.cameras_in_reference(frame)
            for frame in range(scene.num_frames)
        ]
        sampled = ray_sampling.sample_features(
            bev_points,
            image_points,
            bev_maps,
            image_feats,
            rigs,
            provider,
            queries,
        )
        written = []
        for stem, array in (
            ("bev_sampled", sampled.bev),
            ("image_sampled", sampled.image),
            ("fused", sampled.fused),
        ):
            path = tensor_io.array_path(self.out_dir, stem, self.fmt)
            tensor_io.write_array(path, array)
            written.append(raydet_core.StageFile(stem, path, "output"))
        path = self.path(SAMPLING_POINTS_FILE)
        records = list(bev_points.records(BRANCH_BEV))
        records.extend(image_points.records(BRANCH_IMAGE))
        tensor_io.write_jsonl(path, records)
        written.append(
            raydet_core.StageFile("sampling_points", path, "output")
        )
        return written


class AssignHandler(StageHandler):
    """Hungarian assignment of predictions to ground truth."""

    name = "assign"

    def required_inputs(self) -> List[str]:
        """Flag names of inputs the stage cannot run without."""
        return ["predictions"]

    def check_inputs(self) -> None:
        """Require exactly one ground-truth source."""
        super().check_inputs()
        given = [
            name
            for name in ("ground-truth", "scene")
            if self.inputs.get(name) is not None
        ]
        if len(given) != 1:
            raise UsageError(
                "assign requires exactly one of --ground-truth or --scene"
            )
        if not os.path.isfile(self.inputs[given[0]]):
            raise UsageError(f"no such file: {self.inputs[given[0]]}")

    def load_ground_truth(self) -> List[matching.GroundTruth]:
        """Ground truth from --ground-truth records or the scene."""
        if self.inputs.get("ground-truth") is not None:
            return [
                matching.GroundTruth.from_dict(r)
                for r in tensor_io.read_jsonl(self.inputs["ground-truth"])
            ]
        return self.load_scene(with_maps=False).objects

    def execute(self) -> List[raydet_core.StageFile]:
        """Write assignment.json."""
        preds = self.load_predictions()
        gts = self.load_ground_truth()
        costs = self.config.costs
        matrix = matching.cost_matrix(
            preds,
            gts,
            costs.weights(),
            costs.norm(),
            costs.radian_norm,
            costs.fov,
        )
        assignment = matching.hungarian_assign(matrix)
        path = self.path(ASSIGNMENT_FILE)
        tensor_io.write_json(path, assignment.to_dict())
        return [raydet_core.StageFile("assignment", path, "output")]


def rays_from_queries(
    queries: Sequence[query_init.Query], spec: query_init.CategoryRaySpec
) -> List[query_init.ForegroundRay]:
    """Foreground rays a 2D box selected, with their categories.

    Filler rays are left out. A record without a category is credited to
    every category.
    """
    rays = {}
    for query in queries:
        if query.origin != query_init.FOREGROUND or query.padded:
            continue
        if query.ray_id in rays:
            continue
        categories = (
            spec.categories if query.category is None else [query.category]
        )
        rays[query.ray_id] = [
            query_init.ForegroundRay(query.box.theta, c, query.ray_id)
            for c in categories
        ]
    return [ray for _, group in sorted(rays.items()) for ray in group]


class EvalHandler(StageHandler):
    """Detection metrics of predictions against a scene."""

    name = "eval"

    def required_inputs(self) -> List[str]:
        """Flag names of inputs the stage cannot run without."""
        return ["predictions", "scene"]

    def execute(self) -> List[raydet_core.StageFile]:
        """Write metrics.json and eval_report.txt."""
        scene = self.load_scene(with_maps=False)
        detections = evaluation.detections_from_predictions(
            self.load_predictions()
        )
        recall = None
        if self.inputs.get("queries") is not None:
            spec = self.config.foreground.category_spec()
            rays = rays_from_queries(self.load_queries(), spec)
            recall = evaluation.foreground_coverage(
                rays, scene.objects, spec, self.config.layout.fov
            )
        self.metrics = evaluation.evaluate(
            detections, scene.objects, foreground_recall=recall
        )
        self.num_objects = len(scene.objects)
        self.num_detections = len(detections)
        path = self.path(METRICS_FILE)
        tensor_io.write_json(path, self.metrics.to_dict())
        report = raydet_core.StageFile(
            "eval_report", self.path(EVAL_REPORT_FILE), "report"
        )
        templating.render_report([report], self.context())
        return [raydet_core.StageFile("metrics", path, "output"), report]

    def context(self) -> Dict[str, Any]:
        """Template context of the evaluation report."""
        return {
            "metrics": self.metrics,
            "num_objects": self.num_objects,
            "num_detections": self.num_detections,
            "tp_threshold": evaluation.TP_THRESHOLD,
        }


class DispersionHandler(StageHandler):
    """Radial against grid query dispersion in the scene's rig."""

    name = "dispersion"

    def required_inputs(self) -> List[str]:
        """Flag names of inputs the stage cannot run without."""
        return ["scene"]

    def execute(self) -> List[raydet_core.StageFile]:
        """Write dispersion.json and dispersion_report.txt."""
        scene = self.load_scene(with_maps=False)
        layout = self.config.layout.layout()
        dispersion = self.config.dispersion
        self.num_cameras = len(scene.cameras)
        self.report = evaluation.dispersion_experiment(
            scene.cameras,
            layout,
            dispersion.grid_layout(layout.max_depth),
            dispersion.dispersion_threshold,
            self.config.layout.box_z,
        )
        path = self.path(DISPERSION_FILE)
        tensor_io.write_json(path, self.report.to_dict())
        report = raydet_core.StageFile(
            "dispersion_report", self.path(DISPERSION_REPORT_FILE), "report"
        )
        templating.render_report([report], self.context())
        return [raydet_core.StageFile("dispersion", path, "output"), report]

    def context(self) -> Dict[str, Any]:
        """Template context of the dispersion report."""
        return {"report": self.report, "num_cameras": self.num_cameras}


HANDLERS = {
    handler.name: handler
    for handler in (
        GenSceneHandler,
        InitQueriesHandler,
        LiftSplatHandler,
        SampleHandler,
        AssignHandler,
        EvalHandler,
        DispersionHandler,
    )
}
