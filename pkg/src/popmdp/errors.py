"""Exception hierarchy shared across the package.

The three intermediate classes map onto the CLI exit codes: ``InputError``
(bad user input, exit 2), ``DomainError`` (numeric or model-domain failure,
exit 3) and ``ResourceCapError`` (an explicit size cap was exceeded, exit 4).
"""


class PopmdpError(Exception):
    """Base class for every error raised by this package."""


class InputError(PopmdpError):
    """Invalid user-supplied input."""


class DomainError(PopmdpError):
    """The inputs parse but violate a mathematical assumption."""


class ResourceCapError(PopmdpError):
    """A configurable size cap was exceeded."""


# -- market ------------------------------------------------------------------

class NonPositiveReturn(InputError):
    """A gross risky return has a support point that is not strictly positive."""


class BadProbabilities(InputError):
    """Stage probabilities are negative or do not sum to one."""


class LengthMismatch(InputError):
    """Rates, return distributions, or asset dimensions disagree in length."""


class SingularCovariance(DomainError):
    """A per-period risk covariance matrix is not positive definite."""


class ZeroMeanRisk(DomainError):
    """The relative-risk vector has (numerically) zero mean in some period."""


# -- measures ----------------------------------------------------------------

class BadWeights(InputError):
    """Measure weights are negative, non-finite, or sum too far from one."""


class EmptySupport(InputError):
    """A measure needs at least one support point."""


class SupportBlowup(ResourceCapError):
    """An exact pushforward would exceed the configured support-size cap."""


# -- mean-variance solver ----------------------------------------------------

class NotDirac(InputError):
    """The operation is defined only for a point-mass initial law."""


class DegenerateRisk(DomainError):
    """The one-period trade-off scalar left the open interval (0, 1)."""


# -- general engine ----------------------------------------------------------

class NonFiniteCost(DomainError):
    """A cost evaluated to NaN or infinity outside the G(inf)=inf convention."""


class SearchBlowup(ResourceCapError):
    """Exhaustive rule-sequence search would exceed the configured cap."""


# -- LQ solver ---------------------------------------------------------------

class NonUnitVariance(InputError):
    """The equilibrium comparison requires noise with variance one."""


class NegativeVariance(InputError):
    """A variance argument must be nonnegative."""


# -- Monte Carlo -------------------------------------------------------------

class TooFewSamples(InputError):
    """At least two samples are required to estimate a variance."""


# -- CLI ---------------------------------------------------------------------

class BadEll(InputError):
    """The stationary trade-off scalar must lie strictly inside (0, 1)."""
