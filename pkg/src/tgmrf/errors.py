"""Exception hierarchy for the tgmrf package."""


class TgmrfError(Exception):
    """Base class for every error raised by this package."""


class IsolatedSite(TgmrfError):
    """A site has no neighbours, so its CAR precision row is undefined."""


class NotPositiveDefinite(TgmrfError):
    """Cholesky factorisation of a precision matrix failed."""


class NonConvergentCholesky(NotPositiveDefinite):
    """Raised from inside an MCMC run when a refactorisation fails."""


class MissingSigma2(TgmrfError):
    """A sigma2-dependent margin was resolved without a marginal variance."""


class NonFiniteLinearPredictor(TgmrfError):
    """x'beta (or a quantity derived from it) overflowed."""


class DomainError(TgmrfError, ValueError):
    """A probability argument lies outside (0, 1)."""


class SupportError(TgmrfError, ValueError):
    """A value lies outside the support of a distribution."""


class NumericalUnderflow(TgmrfError):
    """A CDF value had to be clamped by more than the allowed tolerance."""


class MismatchedData(TgmrfError, ValueError):
    """Reports being compared were computed on different datasets."""


class SamplerFailure(TgmrfError):
    """The MCMC hit a NaN log-posterior; ``state`` holds the offending state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
