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

"""Module for rendering text reports next to stage artifacts."""

import logging
import os
from typing import Any, Dict, List, Optional

import jinja2

import raydet.core as raydet_core

log = logging.getLogger(__name__)

TEMPLATE_DIR = os.path.join(os.path.dirname(__file__), "templates")


def get_loader(template_dir: str) -> jinja2.BaseLoader:
    """Loader searching `template_dir`, then the packaged templates."""
    searchpath = [template_dir]
    if os.path.abspath(template_dir) != os.path.abspath(TEMPLATE_DIR):
        searchpath.append(TEMPLATE_DIR)
    return jinja2.FileSystemLoader(searchpath)


def get_environment(template_dir: str = TEMPLATE_DIR) -> jinja2.Environment:
    """Environment rendering reports; undefined names are errors."""
    env = jinja2.Environment(
        loader=get_loader(template_dir),
        undefined=jinja2.StrictUndefined,
        keep_trailing_newline=True,
        trim_blocks=True,
        lstrip_blocks=True,
    )
    env.filters["fmt"] = format_value
    return env


def format_value(value: Any, spec: str = ".4f") -> str:
    """Format a number, or "n/a" when it is undefined."""
    if value is None:
        return "n/a"
    return format(value, spec)


def render_report(
    report_files: List[raydet_core.StageFile],
    context: Dict[str, Any],
    template_dir: Optional[str] = None,
) -> List[str]:
    """Render every report file from its template; return the paths."""
    env = get_environment(template_dir or TEMPLATE_DIR)
    written = []
    for report in report_files:
        name = os.path.basename(report.path)
        try:
            template = env.get_template(name + ".j2")
        except jinja2.exceptions.TemplateNotFound:
            template = env.get_template(name)
        contents = template.render(context)
        with open(report.path, "w", newline="\n") as f:
            f.write(contents)
        written.append(report.path)
        log.debug(f"Wrote report {report.path}.")
    return written
