"""Exception hierarchy shared by all modules."""


class ThreeBodyGPError(Exception):
    """Base class for every error raised by this package."""


# scattering
class InvalidGrid(ThreeBodyGPError):
    pass


class NonConvergence(ThreeBodyGPError):
    pass


class TailNotResolved(ThreeBodyGPError):
    pass


class LambdaTooSmall(ThreeBodyGPError):
    pass


class QuadratureFailure(ThreeBodyGPError):
    pass


class IntegrationBudgetExceeded(ThreeBodyGPError):
    pass


# gpe
class StepTooLarge(ThreeBodyGPError):
    pass


class MismatchedRuns(ThreeBodyGPError):
    pass


class NoConvergence(ThreeBodyGPError):
    pass


# boxes
class HypothesisViolated(ThreeBodyGPError):
    pass


class InvalidScales(ThreeBodyGPError):
    pass


# fewbody
class DimensionCap(ThreeBodyGPError):
    pass


class KrylovBreakdown(ThreeBodyGPError):
    pass


class ToleranceNotMet(ThreeBodyGPError):
    pass


# prefactors
class OutOfRange(ThreeBodyGPError):
    pass


# cli
class ConfigError(ThreeBodyGPError):
    pass


class ModuleError(ThreeBodyGPError):
    """Wraps a failure inside one of the numerical modules."""

    def __init__(self, module, operation, cause):
        self.module = module
        self.operation = operation
        self.cause = cause
        super().__init__(f"{module}.{operation}: {type(cause).__name__}: {cause}")


class MissingManifest(ThreeBodyGPError):
    pass
