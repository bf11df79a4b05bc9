"""Exception and warning types raised across the package."""


class FreeUnmixError(Exception):
    """Base class for all package errors."""


class DimensionError(FreeUnmixError, ValueError):
    """Input shapes are incompatible with the requested operation."""


class NumericalError(FreeUnmixError, ArithmeticError):
    """Base class for failures of the numerical pipeline."""


class DegenerateSpectrumError(NumericalError):
    """Eigenvalues collide (or vanish) so the empirical free entropy is -inf."""


class SingularCovarianceError(NumericalError):
    """The component covariance is singular, so the stack cannot be whitened."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class RankError(NumericalError):
    """Fewer significant covariance eigenvalues than requested components."""


class ParseError(FreeUnmixError, ValueError):
    """A data file could not be parsed.

    ``line`` is 1-based for text formats, ``offset`` is a byte offset for
    binary formats; either may be ``None``.
    """

    def __init__(self, message, *, path=None, line=None, offset=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        text = f"{': '.join([', '.join(where), message]) if where else message}"
        super().__init__(text)
        self.path = path
        self.line = line
        self.offset = offset


class UnsupportedCodecError(ParseError):
    """An audio file uses a codec other than 16-bit PCM."""

    def __init__(self, codec, *, path=None):
        super().__init__(f"unsupported audio codec: {codec}", path=path)
        self.codec = codec


class IdentifiabilityWarning(UserWarning):
    """Two or more recovered components look semicircular / free Poisson."""
