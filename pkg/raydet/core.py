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

"""Collection of core components."""

import collections
import logging
from typing import Any, Dict, Generator, List, Optional, Tuple

import raydet.config_contexts as config_contexts
import raydet.tensor_io as tensor_io

logger = logging.getLogger(__name__)

StageFile = collections.namedtuple("StageFile", ["name", "path", "kind"])


class PipelineConfig:
    """Set of config contexts, one per option namespace."""

    def __init__(self, options: Dict[str, Any]) -> None:
        """Run constructor."""
        self.options = options
        self.namespaces: List[str] = []

    def add_config_contexts(
        self, config_adapters: List[config_contexts.ConfigContext]
    ) -> None:
        """Add multiple config contexts."""
        for config_adapter in config_adapters:
            self.add_config_context(config_adapter, config_adapter.namespace)

    def add_config_context(
        self, config_adapter: config_contexts.ConfigContext, namespace: str
    ) -> None:
        """Add config adapter to the namespaces."""
        self.namespaces.append(namespace)
        setattr(self, namespace, config_adapter)

    def __iter__(
        self,
    ) -> Generator[Tuple[str, config_contexts.ConfigContext], None, None]:
        """Iterate over the config contexts."""
        for namespace in self.namespaces:
            yield namespace, getattr(self, namespace)

    def validate(self) -> None:
        """Validate every namespace; the first violation is raised."""
        for namespace, context in self:
            logger.debug(f"Validating config namespace {namespace}")
            context.validate()

    @property
    def ready(self) -> bool:
        """Whether every namespace is valid."""
        return all(context.ready for _, context in self)

    def to_json(self) -> Dict[str, Any]:
        """Flat option document reproducing this config."""
        return dict(sorted(self.options.items()))


def build_config(
    overrides: Optional[Dict[str, Any]] = None, source: Optional[str] = None
) -> PipelineConfig:
    """PipelineConfig from schema defaults and `overrides`."""
    options = config_contexts.resolve_options(overrides, source)
    config = PipelineConfig(options)
    config.add_config_contexts(
        [cls(options, ns) for ns, cls in config_contexts.NAMESPACES]
    )
    config.validate()
    return config


def load_config(path: Optional[str] = None) -> PipelineConfig:
    """PipelineConfig from a flat JSON file, or the defaults."""
    if path is None:
        return build_config()
    return build_config(tensor_io.read_json(path), path)
