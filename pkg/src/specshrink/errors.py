"""Exception types shared across the package."""


class SpecShrinkError(Exception):
    """Base class for errors raised by specshrink."""


class InvalidRoots(SpecShrinkError, ValueError):
    """Roots outside the open unit disk, or not pairwise distinct."""


class NotPositiveDefinite(SpecShrinkError):
    """Cholesky factorization of a covariance matrix failed."""


class NonpositiveSpectrum(SpecShrinkError, ValueError):
    """A spectral density is zero or negative on a quadrature grid."""


class CommonRootError(SpecShrinkError, ValueError):
    """AR and MA polynomials share a root."""


class MissingDerivatives(SpecShrinkError):
    """A PSD without root-derivative evaluators was used for geometry."""


class NearSingular(SpecShrinkError):
    """The Fisher metric is too ill-conditioned to invert reliably."""


class SampleTooShort(SpecShrinkError, ValueError):
    """The sample has fewer points than the model order."""


class InvalidPrior(SpecShrinkError, ValueError):
    """The prior does not yield a proper posterior (kappa >= 2)."""


class TooFewDraws(SpecShrinkError, ValueError):
    """Not enough posterior draws to form a predictive density."""
