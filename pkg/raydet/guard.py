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

"""Module to handle errors and bailing out of a pipeline stage."""

import logging
import traceback
from contextlib import contextmanager
from typing import Generator

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MALFORMED_INPUT = 2
EXIT_INVARIANT = 3


class RayDetError(Exception):
    """Base class for exceptions raised within raydet."""

    pass


class UsageError(RayDetError):
    """Invalid flags or a referenced file that does not exist."""

    pass


class MalformedInputError(RayDetError):
    """An input file could not be parsed or has the wrong shape.

    :param msg: what is wrong with the file
    :type msg: str
    :param path: the offending file, if known
    :type path: str
    """

    def __init__(self, msg: str, path: str = None) -> None:
        """Run constructor."""
        super().__init__(msg)
        self.msg = msg
        self.path = path

    def __str__(self) -> str:
        """Message to accompany exception."""
        if self.path:
            return f"{self.path}: {self.msg}"
        return self.msg


class InvariantViolation(RayDetError):
    """A precondition or invariant of a module was violated.

    :param invariant: short name of the violated invariant
    :type invariant: str
    :param detail: the offending values
    :type detail: str
    """

    def __init__(self, invariant: str, detail: str = "") -> None:
        """Run constructor."""
        super().__init__(invariant, detail)
        self.invariant = invariant
        self.detail = detail

    def __str__(self) -> str:
        """Message to accompany exception."""
        msg = f"invariant violated: {self.invariant}"
        if self.detail:
            msg = f"{msg} ({self.detail})"
        return msg


class ShapeMismatchError(InvariantViolation):
    """Arrays that must agree in shape do not."""

    pass


class SceneGenerationError(InvariantViolation):
    """A synthetic scene could not be generated from its config."""

    pass


class StageOutcome:
    """Mutable result of a guarded stage."""

    def __init__(self) -> None:
        """Run constructor."""
        self.exit_code = EXIT_OK
        self.message = None

    def fail(self, exit_code: int, message: str) -> None:
        """Record a failure, keeping the first one seen."""
        if self.exit_code == EXIT_OK:
            self.exit_code = exit_code
            self.message = message


def check(condition: bool, invariant: str, detail: str = "") -> None:
    """Raise InvariantViolation naming `invariant` unless `condition`."""
    if not condition:
        raise InvariantViolation(invariant, detail)


@contextmanager
def guard(
    outcome: StageOutcome,
    section: str,
    handle_exception: bool = True,
    log_traceback: bool = True,
) -> Generator[None, None, None]:
    """Context manager to handle errors and bailing out of a stage.

    Errors from the raydet hierarchy are translated into the exit code of
    the outcome instead of propagating, so a stage can bail at any point.

    :param outcome: the outcome to record the exit code on
    :param section: the name of the section (for debugging/info purposes)
    :param handle_exception: whether to turn unexpected exceptions into an
                             exit code instead of re-raising them
    :param log_traceback: whether to log the traceback of unexpected errors
    :raises: Exception if handle_exception is False
    """
    logger.info("Entering guarded section: '%s'", section)
    try:
        yield
        logger.info("Completed guarded section fully: '%s'", section)
    except UsageError as e:
        logger.warning("Usage error in section '%s': %s", section, str(e))
        outcome.fail(EXIT_USAGE, str(e))
    except MalformedInputError as e:
        logger.warning(
            "Malformed input in section '%s': %s", section, str(e)
        )
        outcome.fail(EXIT_MALFORMED_INPUT, str(e))
    except InvariantViolation as e:
        logger.warning(
            "Section '%s' stopped on '%s'", section, str(e)
        )
        outcome.fail(EXIT_INVARIANT, str(e))
    except Exception as e:
        if not handle_exception:
            raise
        logger.error("Exception raised in section '%s': %s", section, str(e))
        if log_traceback:
            logger.error(traceback.format_exc())
        outcome.fail(EXIT_INVARIANT, f"Error in stage (see logs): {e}")
