"""Exception hierarchy.

Every error carries the CLI exit code it maps to, so the command-line layer
can translate failures without a lookup table.
"""


class ResetFRAError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(ResetFRAError, ValueError):
    exit_code = 2


class BadParams(ConfigError):
    """Invalid element or loop parameters (e.g. nonpositive corner frequency)."""


class ImproperSystem(ConfigError):
    """Numerator degree exceeds denominator degree."""


class AnalysisError(ResetFRAError, ArithmeticError):
    """Numerical singularity encountered during frequency-domain analysis."""

    exit_code = 3


class PoleHit(AnalysisError):
    pass


class ResonantPole(AnalysisError):
    pass


class DegenerateLoop(AnalysisError):
    pass


class SingularKernel(AnalysisError):
    pass


class DegenerateEta(AnalysisError):
    pass


class DivergentGamma(AnalysisError):
    pass


class PlantZeroHit(AnalysisError):
    pass


class SingularJumpMap(AnalysisError):
    pass


class NoZeroFound(AnalysisError):
    pass


class NoPeak(AnalysisError):
    pass


class NoSignChange(AnalysisError):
    pass


class UnsupportedModel(ResetFRAError):
    exit_code = 4


class DivergentLimit(UnsupportedModel):
    pass


class UnsupportedPlantOrder(UnsupportedModel):
    pass


class SimulationError(ResetFRAError, RuntimeError):
    exit_code = 5


class AlgebraicLoop(SimulationError):
    pass


class Divergence(SimulationError):
    pass


class NoSteadyState(SimulationError):
    pass


class Aliased(SimulationError):
    pass


class NotSettled(SimulationError):
    pass
