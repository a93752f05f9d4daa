"""Exception and warning types shared across the package."""


class CureModelError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(CureModelError):
    """An observation time or distribution parameter lies outside its domain."""


class RegistrationError(CureModelError):
    """A user-supplied promotion-time family declaration is invalid."""


class InvalidBase(CureModelError):
    """The generalized survival base 1 + g*theta*c^(g*theta)*F^lam is non-positive.

    Only reachable for negative g; scalar evaluators raise, likelihood
    evaluators map the condition to a -inf sentinel instead.
    """


class DegenerateSusceptibles(CureModelError):
    """The susceptible fraction 1 - p0 is numerically zero."""


class DegenerateSurvival(CureModelError):
    """The population survival is numerically zero where a ratio needs it."""


class GradientUnavailable(CureModelError):
    """A finite-difference stencil hit a -inf target value."""


class InsufficientSamples(CureModelError):
    """Too few posterior draws to form the requested interval."""


class SchemaMismatch(CureModelError):
    """Prediction covariates do not match the fitted design schema."""


class ConfigError(CureModelError):
    """A configuration document is malformed or inconsistent."""


class ParseError(CureModelError):
    """A data file cell could not be interpreted; stored with location info."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyDataset(CureModelError):
    """No usable rows remain after dropping incomplete records."""


class UnseenLevel(CureModelError):
    """A factor level appears at prediction time that was absent during fitting."""


class GeneratorError(CureModelError):
    """A simulation configuration is infeasible."""


class IdentifiabilityWarning(UserWarning):
    """The design has no non-constant numeric covariate; the cure link is weakly identified."""


class ConstantColumnWarning(UserWarning):
    """A covariate column is constant and carries no information."""
