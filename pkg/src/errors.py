"""Exception hierarchy for the strip-resonance toolkit.

Library code raises these; only the command layer turns them into exit codes
and one-line diagnostics.
"""

from typing import Any


class StripResonanceError(Exception):
    """Base class for every failure the toolkit reports deliberately."""

    exit_code = 1

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def diagnostic(self) -> str:
        """One-line, machine-parsable description of the failure."""
        parts = [f"error={type(self).__name__}", f"exit={self.exit_code}"]
        for key, value in sorted(self.details.items()):
            parts.append(f"{key}={value}")
        escaped = self.message.replace('"', "'")
        parts.append(f'message="{escaped}"')
        return " ".join(parts)


# ============================================================================
# Configuration errors (exit 2)
# ============================================================================


class ConfigError(StripResonanceError):
    exit_code = 2


class IncompatibleBackgrounds(ConfigError):
    pass


class BadSpacing(ConfigError):
    pass


# ============================================================================
# Violated modelling assumptions (exit 3)
# ============================================================================


class AssumptionViolation(StripResonanceError):
    exit_code = 3


class Lambda0InMiddleEssentialSpectrum(AssumptionViolation):
    pass


class BandEdgeAtLambda0(AssumptionViolation):
    pass


class DegenerateBand(AssumptionViolation):
    pass


class WindowTouchesBand(AssumptionViolation):
    pass


class NoDecayingBasis(AssumptionViolation):
    pass


# ============================================================================
# Numerical failures (exit 4)
# ============================================================================


class NumericalFailure(StripResonanceError):
    exit_code = 4


class DiscretizationTooCoarse(NumericalFailure):
    pass


class NewtonDivergence(NumericalFailure):
    pass


class ContinuationFailure(NumericalFailure):
    pass


class IllConditionedJordan(NumericalFailure):
    pass


class Overflow(NumericalFailure):
    pass


class QuadratureFailure(NumericalFailure):
    pass


class FitIllConditioned(NumericalFailure):
    pass


class RateViolation(NumericalFailure):
    pass


class WindingUnstable(NumericalFailure):
    pass


class InsufficientData(NumericalFailure):
    pass


class EmptyProblem(StripResonanceError):
    """No bound states at lambda0: there are no resonances to look for.

    This is a verdict rather than a failure; the pipeline reports it and exits 0.
    """

    exit_code = 0
