"""Exception types shared across the package."""


class SeqGibbsError(Exception):
    """Base class for all errors raised by seqgibbs."""


class DataError(SeqGibbsError, ValueError):
    """Invalid input: bad shapes, malformed files, out-of-domain values."""


class NumericalError(SeqGibbsError, ArithmeticError):
    """A numerical procedure cannot produce a trustworthy answer."""


class EigengapError(NumericalError):
    """Eigenvalues are too close for the requested component to be identified."""


class UnsupportedModelError(SeqGibbsError):
    """The model lacks what an operation needs (e.g. an exact conditional sampler)."""
