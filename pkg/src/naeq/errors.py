"""Exception hierarchy shared by all solvers and simulators."""

from __future__ import annotations


class NaeqError(Exception):
    """Base class for every error raised by the toolkit."""


class InvalidParameters(NaeqError, ValueError):
    """Constructor arguments violate a documented invariant."""


class NonFiniteEvaluation(NaeqError, ArithmeticError):
    """A demand, profit or derivative evaluator returned NaN or inf."""


class OutOfDomain(NaeqError, ValueError):
    """A strategy profile lies outside the strategy box."""


class NoSignChange(NaeqError):
    """A perceived first-order condition has no root and no finite boundary maximizer."""


class SOCViolation(NaeqError):
    """A stationary point has a non-negative perceived second derivative."""


class NonConvergence(NaeqError):
    """An iterative solver exhausted its budget.

    ``best`` holds the best iterate found, ``residual`` its residual and
    ``trajectory`` an optional history for diagnostics.
    """

    def __init__(self, message, *, best=None, residual=float("nan"), trajectory=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.trajectory = trajectory


class SampleFailure(NaeqError):
    """Evaluators failed on too many sampled audit points."""


class UnboundedObjective(NaeqError):
    """A leader objective keeps improving as the search range expands."""


class NoInteriorNAE(NaeqError):
    """Implied biases keep leaving the feasible bias interval."""


class IndefiniteSigns(NaeqError):
    """An audit could not certify constant derivative signs."""


class DegenerateDenominator(NaeqError, ZeroDivisionError):
    """A closed form hit a vanishing or sign-flipped denominator."""


class ComplexRoot(NaeqError):
    """A closed-form root is complex for the given parameters."""


class InsufficientVariation(NaeqError):
    """A simulated experiment left one treatment arm empty."""


class NoSwitches(NaeqError):
    """A simulated budget policy never alternated."""


class NonPositiveAlpha(NaeqError, ValueError):
    """A bias construction would give alpha <= 0."""


class Divergence(NaeqError):
    """An adjustment path left the configured bound."""


class ConfigError(NaeqError, ValueError):
    """A scenario config failed to parse or validate.

    ``field`` is a dotted path into the config, ``line`` the JSON line when
    the failure is a parse error.
    """

    def __init__(self, message, *, field=None, line=None):
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.field = field
        self.line = line
