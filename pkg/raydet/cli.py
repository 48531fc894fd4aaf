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

"""Command line driver of the detection pipeline.

RayPipeline maps every subcommand onto a
raydet.stage_handlers.StageHandler. The handler reads its declared input
files, builds domain objects from the raydet.core.PipelineConfig and
writes its artifacts under --out. Every stage runs inside a
raydet.guard.guard section, which turns the raydet error hierarchy into
the process exit code.
"""

import argparse
import logging
import os
import sys
from typing import List, NoReturn, Optional

import raydet.core as raydet_core
import raydet.guard as raydet_guard
import raydet.stage_handlers as raydet_shandlers
import raydet.tensor_io as tensor_io

logger = logging.getLogger(__name__)

LOG_ENV = "RAYDET_LOG"
DEFAULT_LOG_LEVEL = "WARNING"

INPUT_FLAGS = ("scene", "queries", "bev", "predictions", "ground-truth")


class ArgumentParser(argparse.ArgumentParser):
    """Parser raising UsageError instead of exiting."""

    def error(self, message: str) -> NoReturn:
        """Raise a usage error."""
        raise raydet_guard.UsageError(message)


def build_parser() -> ArgumentParser:
    """Parser of every subcommand."""
    parser = ArgumentParser(
        prog="raydet", description="Ray-based multi-camera 3D detection."
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True

    def add(name: str, help_text: str, *flags: str) -> ArgumentParser:
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", help="flat JSON option file")
        sub.add_argument("--out", default=".", help="output directory")
        for flag in flags:
            sub.add_argument(f"--{flag}", help=f"{flag} input file")
        return sub

    gen = add("gen-scene", "generate a synthetic scene")
    gen.add_argument("--seed", type=int, help="scene seed")
    add("init-queries", "initialize queries", "scene")
    for name, help_text, flags in (
        ("lift-splat", "build aligned BEV maps", ("scene",)),
        ("sample", "sample features along rays", ("scene", "queries", "bev")),
    ):
        sub = add(name, help_text, *flags)
        sub.add_argument(
            "--format",
            choices=tensor_io.FORMATS,
            default=tensor_io.FORMAT_TENSOR,
            help="array artifact format",
        )
    add(
        "assign",
        "match predictions to ground truth",
        "predictions",
        "ground-truth",
        "scene",
    )
    add("eval", "evaluate predictions", "predictions", "scene", "queries")
    add("dispersion", "radial vs grid projection dispersion", "scene")
    return parser


class RayPipeline:
    """Pipeline driver dispatching subcommands to stage handlers.

    :param config: the resolved pipeline config
    """

    def __init__(self, config: raydet_core.PipelineConfig) -> None:
        """Run constructor."""
        self.config = config

    def get_stage_handler(
        self, args: argparse.Namespace
    ) -> raydet_shandlers.StageHandler:
        """Stage handler of the parsed subcommand."""
        handler_cls = raydet_shandlers.HANDLERS[args.command]
        inputs = {
            flag: getattr(args, flag.replace("-", "_"))
            for flag in INPUT_FLAGS
            if hasattr(args, flag.replace("-", "_"))
        }
        kwargs = {}
        if hasattr(args, "seed"):
            kwargs["seed"] = args.seed
        if hasattr(args, "format"):
            kwargs["fmt"] = args.format
        return handler_cls(self.config, args.out, inputs, **kwargs)

    def run(self, args: argparse.Namespace) -> List[raydet_core.StageFile]:
        """Run the stage of `args`."""
        handler = self.get_stage_handler(args)
        return handler.run()


def setup_logging(level_name: Optional[str] = None) -> None:
    """Configure stderr logging from RAYDET_LOG."""
    if level_name is None:
        level_name = os.environ.get(LOG_ENV, DEFAULT_LOG_LEVEL)
    level = logging.getLevelName(level_name.upper())
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
    )


def run(argv: Optional[List[str]] = None) -> raydet_guard.StageOutcome:
    """Parse `argv` and run the stage; failures land on the outcome."""
    outcome = raydet_guard.StageOutcome()
    with raydet_guard.guard(outcome, "parse arguments"):
        args = build_parser().parse_args(argv)
    if outcome.exit_code != raydet_guard.EXIT_OK:
        return outcome
    with raydet_guard.guard(outcome, "load config"):
        config = raydet_core.load_config(args.config)
    if outcome.exit_code != raydet_guard.EXIT_OK:
        return outcome
    with raydet_guard.guard(outcome, args.command):
        RayPipeline(config).run(args)
    return outcome


def main(argv: Optional[List[str]] = None) -> int:
    """Console entry point; returns the exit code."""
    setup_logging()
    outcome = run(argv)
    if outcome.exit_code != raydet_guard.EXIT_OK:
        logger.error(f"raydet failed: {outcome.message}")
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
