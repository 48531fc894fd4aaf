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

"""Config contexts grouping pipeline options into namespaces.

Options come from the schema in ``config.yaml``, overridden by a flat JSON
config file. Each ConfigContext exposes its options as attributes (hyphens
become underscores) and builds the domain objects of its namespace.
"""

import logging
import os
from typing import Any, Dict, Optional

import yaml

from raydet import depth_bins, lift_splat, matching, query_init
from raydet.guard import MalformedInputError, check
from raydet.providers import ParameterProvider, get_provider
from raydet.scene import SceneConfig

logger = logging.getLogger(__name__)

SCHEMA_FILE = os.path.join(os.path.dirname(__file__), "config.yaml")
MAX_FRAMES = 8

_TYPES = {
    "int": (int,),
    "float": (int, float),
    "boolean": (bool,),
    "string": (str,),
}


def load_schema(path: str = SCHEMA_FILE) -> Dict[str, dict]:
    """Option schema: name -> {default, description, type}."""
    with open(path) as f:
        return yaml.safe_load(f.read())["options"]


def _coerce(name: str, value: Any, kind: str, source: Optional[str]) -> Any:
    allowed = _TYPES[kind]
    if isinstance(value, bool) and bool not in allowed:
        raise MalformedInputError(
            f"option {name!r} must be {kind}, got {value!r}", source
        )
    if not isinstance(value, allowed):
        raise MalformedInputError(
            f"option {name!r} must be {kind}, got {value!r}", source
        )
    if kind == "float":
        return float(value)
    return value


def resolve_options(
    overrides: Optional[Dict[str, Any]] = None,
    source: Optional[str] = None,
    schema: Optional[Dict[str, dict]] = None,
) -> Dict[str, Any]:
    """Schema defaults merged with `overrides`, type checked."""
    schema = schema or load_schema()
    overrides = overrides or {}
    if not isinstance(overrides, dict):
        raise MalformedInputError("config must be a JSON object", source)
    unknown = sorted(set(overrides) - set(schema))
    if unknown:
        raise MalformedInputError(
            f"unknown config keys: {', '.join(unknown)}", source
        )
    options = {}
    for name, spec in schema.items():
        value = overrides.get(name, spec["default"])
        options[name] = _coerce(name, value, spec["type"], source)
    return options


class ConfigContext:
    """Base class used for creating a config context.

    :param options: resolved flat options
    :param namespace: attribute name of the context in a PipelineConfig
    """

    keys = ()

    def __init__(self, options: Dict[str, Any], namespace: str) -> None:
        """Run constructor."""
        self.options = options
        self.namespace = namespace
        for k, v in self.context().items():
            k = k.replace("-", "_")
            setattr(self, k, v)

    def context(self) -> dict:
        """Options of this namespace."""
        return {k: self.options[k] for k in self.keys}

    def validate(self) -> None:
        """Check the namespace builds valid domain objects."""
        raise NotImplementedError

    @property
    def ready(self) -> bool:
        """Whether the namespace's options satisfy their invariants."""
        try:
            self.validate()
        except Exception as e:
            logger.debug(f"Context {self.namespace} not ready: {e}")
            return False
        return True


class LayoutConfigContext(ConfigContext):
    """Radial layout and the initial box template."""

    keys = (
        "num-rays",
        "num-depth-slots",
        "fov",
        "max-depth",
        "box-z",
        "box-w",
        "box-l",
        "box-h",
        "embed-dims",
    )

    def layout(self) -> query_init.RayLayout:
        """Radial base-query layout."""
        layout = query_init.RayLayout(
            self.num_rays, self.num_depth_slots, self.fov, self.max_depth
        )
        layout.validate()
        return layout

    def template(self) -> query_init.BoxTemplate:
        """Box attributes of fresh queries."""
        template = query_init.BoxTemplate(
            z=self.box_z, w=self.box_w, l=self.box_l, h=self.box_h
        )
        template.validate()
        return template

    def validate(self) -> None:
        """Check layout, template and embedding size."""
        self.layout()
        self.template()
        check(self.embed_dims >= 1, "embed_dims >= 1", str(self.embed_dims))


class ForegroundConfigContext(ConfigContext):
    """Foreground ray selection."""

    keys = (
        "car-rays",
        "pedestrian-rays",
        "foreground-budget",
        "foreground-slots",
        "foreground-fill",
    )

    def category_spec(self) -> query_init.CategoryRaySpec:
        """Candidate rays per category."""
        return query_init.CategoryRaySpec(
            {"car": self.car_rays, "pedestrian": self.pedestrian_rays}
        )

    def validate(self) -> None:
        """Check the category spec, budget and slots."""
        self.category_spec()
        check(self.foreground_budget >= 0, "N_f >= 0")
        check(self.foreground_slots >= 1, "N'_d >= 1")


class SamplingConfigContext(ConfigContext):
    """Sampling point counts, frames and the parameter provider."""

    keys = (
        "bev-ray-points",
        "image-ray-points",
        "sampling-offsets",
        "num-frames",
        "frame-interval",
        "image-scales",
        "provider",
        "provider-seed",
        "max-ray-offset",
    )

    def parameter_provider(self) -> ParameterProvider:
        """Provider named by the options."""
        return get_provider(
            self.provider, self.provider_seed, self.max_ray_offset
        )

    def validate(self) -> None:
        """Check K, P, T and the provider."""
        check(self.bev_ray_points >= 1, "K_bev >= 1")
        check(self.image_ray_points >= 1, "K_img >= 1")
        check(self.sampling_offsets >= 1, "P >= 1")
        check(
            1 <= self.num_frames <= MAX_FRAMES,
            "1 <= T <= 8",
            str(self.num_frames),
        )
        check(self.frame_interval > 0.0, "frame interval > 0")
        check(self.image_scales >= 1, "L >= 1")
        self.parameter_provider()


class BevConfigContext(ConfigContext):
    """BEV rasterization."""

    keys = (
        "bev-grid",
        "bev-extent",
        "bev-resolution",
        "polar-angles",
        "polar-rings",
    )

    def grid(self) -> lift_splat.GridSpec:
        """Cartesian or polar grid spec."""
        check(
            self.bev_grid in ("cartesian", "polar"),
            "BEV grid is cartesian or polar",
            self.bev_grid,
        )
        return lift_splat.grid_from_options(
            self.bev_grid,
            self.bev_extent,
            self.bev_resolution,
            self.polar_angles,
            self.polar_rings,
        )

    def validate(self) -> None:
        """Check the grid spec."""
        self.grid()


class DepthConfigContext(ConfigContext):
    """Depth discretization."""

    keys = ("depth-min", "depth-max", "depth-bins")

    def bins(self) -> depth_bins.DepthBinSpec:
        """Depth bin spec."""
        return depth_bins.make_spec(
            self.depth_min, self.depth_max, self.depth_bins
        )

    def validate(self) -> None:
        """Check the bin spec."""
        self.bins()


class CostsConfigContext(ConfigContext):
    """Matching cost weights and normalization."""

    keys = (
        "cost-class",
        "cost-box",
        "cost-radian",
        "box-cost-z-range",
        "radian-norm",
        "max-depth",
        "fov",
    )

    def weights(self) -> matching.CostWeights:
        """Cost weights (w_c, w_b, w_r)."""
        weights = matching.CostWeights(
            self.cost_class, self.cost_box, self.cost_radian
        )
        weights.validate()
        return weights

    def norm(self) -> matching.BoxCostNorm:
        """Box cost normalizers."""
        check(self.box_cost_z_range > 0.0, "box cost z range > 0")
        return matching.BoxCostNorm(self.max_depth, self.box_cost_z_range)

    def validate(self) -> None:
        """Check weights, normalizers and the radian mode."""
        self.weights()
        self.norm()
        check(
            self.radian_norm
            in (matching.RADIAN_NORM_FULL, matching.RADIAN_NORM_FOV),
            "radian normalization is full or fov",
            self.radian_norm,
        )


class SceneConfigContext(ConfigContext):
    """Synthetic scene generation."""

    keys = (
        "seed",
        "num-cars",
        "num-pedestrians",
        "min-range",
        "max-range",
        "ego-speed",
        "num-frames",
        "frame-interval",
        "max-depth",
    )

    def scene_config(self) -> SceneConfig:
        """Generator settings."""
        config = SceneConfig(
            num_cars=self.num_cars,
            num_pedestrians=self.num_pedestrians,
            min_range=self.min_range,
            max_range=self.max_range,
            num_frames=self.num_frames,
            frame_interval=self.frame_interval,
            ego_speed=self.ego_speed,
        )
        config.validate()
        return config

    def validate(self) -> None:
        """Check the settings keep objects in the perception circle."""
        check(self.seed >= 0, "seed >= 0", str(self.seed))
        config = self.scene_config()
        check(
            config.max_range <= self.max_depth,
            "objects within the perception circle",
            f"max range {config.max_range} > D {self.max_depth}",
        )


class DispersionConfigContext(ConfigContext):
    """Projection dispersion experiment."""

    keys = ("dispersion-threshold", "num-rays", "num-depth-slots")

    @property
    def budget(self) -> int:
        """Query budget shared by both layouts."""
        return self.num_rays * self.num_depth_slots

    def grid_layout(self, max_depth: float) -> query_init.GridLayout:
        """Area-matched Cartesian layout with the radial budget."""
        return query_init.GridLayout(self.budget, max_depth)

    def validate(self) -> None:
        """Check the proximity threshold."""
        check(self.dispersion_threshold >= 0.0, "dispersion threshold >= 0")


NAMESPACES = (
    ("layout", LayoutConfigContext),
    ("foreground", ForegroundConfigContext),
    ("sampling", SamplingConfigContext),
    ("bev", BevConfigContext),
    ("depth", DepthConfigContext),
    ("costs", CostsConfigContext),
    ("scene", SceneConfigContext),
    ("dispersion", DispersionConfigContext),
)