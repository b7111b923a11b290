# Copyright (C) 2026, lqr-rpi developers
#
# Permission to use, copy, modify, and/or distribute this software for any
# purpose with or without fee is hereby granted, provided that the above
# copyright notice and this permission notice appear in all copies.
#
# THE SOFTWARE IS PROVIDED "AS IS" AND THE AUTHOR DISCLAIMS ALL WARRANTIES
# WITH REGARD TO THIS SOFTWARE INCLUDING ALL IMPLIED WARRANTIES OF
# MERCHANTABILITY AND FITNESS. IN NO EVENT SHALL THE AUTHOR BE LIABLE FOR
# ANY SPECIAL, DIRECT, INDIRECT, OR CONSEQUENTIAL DAMAGES OR ANY DAMAGES
# WHATSOEVER RESULTING FROM LOSS OF USE, DATA OR PROFITS, WHETHER IN AN
# ACTION OF CONTRACT, NEGLIGENCE OR OTHER TORTIOUS ACTION, ARISING OUT OF
# OR IN CONNECTION WITH THE USE OR PERFORMANCE OF THIS SOFTWARE.

"""Exception hierarchy of lqr_rpi."""

from typing import Optional


class LqrError(Exception):
    """Base class of all errors raised by lqr_rpi."""


class DimensionError(LqrError, ValueError):
    """Matrix or vector dimensions do not conform."""


class DefinitenessError(LqrError, ValueError):
    """A weight matrix violates its definiteness requirement."""


class ControllabilityError(LqrError, ValueError):
    """The pair (A, B) is not controllable."""


class ObservabilityError(LqrError, ValueError):
    """The pair (A, Q^(1/2)) is not observable."""


class ConfigError(LqrError, ValueError):
    """Invalid experiment configuration."""


class StabilityError(LqrError):
    """A matrix that has to be Hurwitz is not (or a gain is not stabilizing)."""


class StabilizationError(LqrError):
    """No stabilizing gain was found within the integration horizon."""


class NumericalError(LqrError):
    """A numerical computation failed."""


class SolverError(NumericalError):
    """A linear solve failed (singular system)."""


class ConvergenceError(NumericalError):
    """An iteration did not converge within its iteration budget."""


class SingularBlockError(NumericalError):
    """The lower-right block of G is singular or badly conditioned."""


class DivergenceError(NumericalError):
    """A simulated trajectory became non-finite."""

    def __init__(self, time: float, message: Optional[str] = None) -> None:
        self.time = time
        super().__init__(message or f"trajectory diverged at t = {time:g}")
