"""
Exception hierarchy for the scalelab engine

Every failure the numerical modules can report derives from ScaleLabError so the
CLI error handler can map it to an exit code and a helpful message.
"""

from typing import List, Optional


class ScaleLabError(Exception):
    """Base class for all scalelab failures"""

    hint: str = ""


class ConfigError(ScaleLabError):
    """Scenario configuration is invalid; carries every problem found"""

    hint = "Check the scenario file keys and the command-line flags."

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems) if self.problems else "invalid configuration")


class GridError(ScaleLabError):
    """Grid specification violates its invariants"""


class FieldError(ScaleLabError):
    """Field values do not match the grid or are not finite"""


class AlignmentError(ScaleLabError):
    """A resolution is not an integer multiple of the base step"""

    hint = "Coarse steps must be integer multiples of the path's base step."


class NormalizationError(ScaleLabError):
    """Wavefunction is not normalized where normalization is required"""


class StepSizeError(ScaleLabError):
    """Time step violates the solver precondition"""

    hint = "Reduce dt so that dt * max|potential| / hbar < 1."


class SolverError(ScaleLabError):
    """Linear solve failed during time evolution"""

    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        super().__init__(f"{message} (step {step})" if step is not None else message)


class GeometryError(ScaleLabError):
    """Potential geometry does not fit inside the grid"""

    hint = "Barrier, slits and screen must lie inside the grid bounds."


class MeasurementImpossibleError(ScaleLabError):
    """Selected region has zero overlap with the state or ensemble"""


class DecompositionDegenerateError(ScaleLabError):
    """Too many nodes of the wavefunction are masked to decompose it"""


class PhaseJumpError(ScaleLabError):
    """Phase cannot be unwrapped between adjacent nodes"""

    hint = "Refine the grid so the phase advances by less than pi per node."


class CadenceError(ScaleLabError):
    """Snapshot series is too short or not uniformly spaced in time"""


class WalkerError(ScaleLabError):
    """A walker reached a non-finite position"""

    def __init__(self, message: str, walker: Optional[int] = None):
        self.walker = walker
        super().__init__(f"{message} (walker {walker})" if walker is not None else message)


class ScaleScanError(ScaleLabError):
    """Scale scan cannot support the requested fit"""


class LadderError(ScaleLabError):
    """Resolution ladder does not span the required range"""

    hint = "Widen the resolution ladder so it brackets the transition scale."


class IncompleteRunError(ScaleLabError):
    """Run directory lacks a complete manifest or listed files"""

    def __init__(self, message: str, files: Optional[List[str]] = None):
        self.files = list(files or [])
        detail = f": {', '.join(self.files)}" if self.files else ""
        super().__init__(f"{message}{detail}")
