"""Exception types raised across the package."""


class SublabError(Exception):
    """Base class for package errors."""


class ResonantTerm(SublabError, ValueError):
    """A monomial Z^k Zbar^l with k == l has no cohomological primitive."""


class CutoffNotConverged(SublabError, RuntimeError):
    """Eigenvalues moved by more than the tolerance when the Fourier cutoff was doubled."""


class BandOverflow(SublabError, ValueError):
    """A Fourier vector occupies modes that a banded operator would push past the cutoff."""


class QuadratureFailure(SublabError, RuntimeError):
    """Fourier coefficients of a symbol did not decay within the resolved range."""


class DegenerateLevel(SublabError, ValueError):
    """The level equation 2k+1 +/- Q has a non-positive denominator."""


class NotDegenerate(SublabError, ValueError):
    """States in a superposition do not share one eigenvalue."""


class ConfigInvalid(SublabError, ValueError):
    """Experiment configuration failed validation.

    ``errors`` maps field names to messages.
    """

    def __init__(self, errors):
        self.errors = dict(errors)
        msg = "; ".join(f"{k}: {v}" for k, v in sorted(self.errors.items()))
        super().__init__(msg or "invalid configuration")


class NonPositiveValue(SublabError, ValueError):
    """A log-log fit received a non-positive abscissa or ordinate."""
